//! Pseudo-label denoising: rule-based format checks, majority vote over
//! repeated predictions, confidence thresholding, and optional top-N
//! confidence selection.

use crate::rationale::{RuleConfig, RuleViolation};
use crate::types::{Label, LabelDistribution, PreferenceRecord, Source};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct DenoiseConfig {
    /// Inference runs aggregated per record (odd recommended).
    pub vote_runs: usize,
    /// Minimum mean winner-label probability to keep a pseudo-label.
    pub confidence_threshold: f64,
    pub rule_config: RuleConfig,
    /// Keep only the N most confident records after filtering.
    pub top_n: Option<usize>,
}

impl DenoiseConfig {
    pub fn new(vote_runs: usize, confidence_threshold: f64) -> Self {
        DenoiseConfig {
            vote_runs,
            confidence_threshold,
            rule_config: RuleConfig::default(),
            top_n: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DenoiseError {
    #[error("empty list")]
    EmptyList,
}

/// One record with its per-run predictions attached.
#[derive(Debug, Clone)]
pub struct PseudoLabeledRecord {
    pub record: PreferenceRecord,
    /// Labels from the valid inference runs.
    pub votes: Vec<Label>,
    /// Winner-token distributions, one per valid run.
    pub dists: Vec<LabelDistribution>,
    /// Rule report; invalid runs surface here as violations.
    pub rule_violations: Vec<RuleViolation>,
}

/// A record that survived denoising, with its aggregated confidence.
#[derive(Debug, Clone)]
pub struct KeptRecord {
    pub record: PreferenceRecord,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub n_input: u64,
    pub n_format_rejected: u64,
    pub n_vote_rejected: u64,
    pub n_confidence_rejected: u64,
    pub n_topn_rejected: u64,
    pub n_kept: u64,
}

/// Strict-majority label; abstains (None) on an exact tie.
pub fn majority_vote(labels: &[Label]) -> Result<Option<Label>, DenoiseError> {
    if labels.is_empty() {
        return Err(DenoiseError::EmptyList);
    }
    let a = labels.iter().filter(|l| **l == Label::A).count();
    let b = labels.len() - a;
    Ok(match a.cmp(&b) {
        std::cmp::Ordering::Greater => Some(Label::A),
        std::cmp::Ordering::Less => Some(Label::B),
        std::cmp::Ordering::Equal => None,
    })
}

/// Mean winner-label probability across runs.
pub fn aggregate_confidence(
    dists: &[LabelDistribution],
    winner: Label,
) -> Result<f64, DenoiseError> {
    if dists.is_empty() {
        return Err(DenoiseError::EmptyList);
    }
    Ok(dists.iter().map(|d| d.prob_of(winner)).sum::<f64>() / dists.len() as f64)
}

pub fn confidence_filter(confidence: f64, threshold: f64) -> bool {
    confidence >= threshold
}

/// The n most confident records; ties broken by id order for determinism.
pub fn select_top_confident(mut records: Vec<KeptRecord>, n: usize) -> Vec<KeptRecord> {
    records.sort_by(|x, y| {
        y.confidence
            .partial_cmp(&x.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.record.id.cmp(&y.record.id))
    });
    records.truncate(n);
    records
}

#[derive(Debug)]
pub struct DenoiseOutcome {
    pub kept: Vec<KeptRecord>,
    pub counts: StageCounts,
}

/// Full pipeline: rule filter, then majority vote (ties drop), then the
/// confidence threshold, then optional top-N. Drops are counted, never
/// thrown. Top-N rejections fold into n_confidence_rejected with the
/// sub-count kept separately.
pub fn denoise_batch(inputs: Vec<PseudoLabeledRecord>, cfg: &DenoiseConfig) -> DenoiseOutcome {
    let mut counts = StageCounts {
        n_input: inputs.len() as u64,
        ..Default::default()
    };
    let mut survivors = Vec::new();
    for input in inputs {
        if !input.rule_violations.is_empty() || input.votes.is_empty() {
            counts.n_format_rejected += 1;
            continue;
        }
        let winner = match majority_vote(&input.votes) {
            Ok(Some(l)) => l,
            _ => {
                counts.n_vote_rejected += 1;
                continue;
            }
        };
        let confidence = match aggregate_confidence(&input.dists, winner) {
            Ok(c) => c,
            Err(_) => {
                counts.n_format_rejected += 1;
                continue;
            }
        };
        if !confidence_filter(confidence, cfg.confidence_threshold) {
            counts.n_confidence_rejected += 1;
            continue;
        }
        let mut record = input.record;
        record.label = Some(winner);
        record.source = Source::PseudoLabeled;
        survivors.push(KeptRecord { record, confidence });
    }

    let kept = match cfg.top_n {
        Some(n) if survivors.len() > n => {
            counts.n_topn_rejected = (survivors.len() - n) as u64;
            counts.n_confidence_rejected += counts.n_topn_rejected;
            select_top_confident(survivors, n)
        }
        Some(n) => select_top_confident(survivors, n),
        None => survivors,
    };
    counts.n_kept = kept.len() as u64;
    DenoiseOutcome { kept, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PreferenceRecord;
    use Label::{A, B};

    fn dist(pa: f64) -> LabelDistribution {
        LabelDistribution {
            prob_a: pa,
            prob_b: 1.0 - pa,
        }
    }

    fn input(id: &str, votes: Vec<Label>, dists: Vec<LabelDistribution>, bad: bool) -> PseudoLabeledRecord {
        let mut record = PreferenceRecord::unlabeled("q", "a", "b");
        record.id = id.to_string();
        PseudoLabeledRecord {
            record,
            votes,
            dists,
            rule_violations: if bad {
                vec![RuleViolation::TooLong]
            } else {
                vec![]
            },
        }
    }

    #[test]
    fn majority_vote_rules() {
        assert_eq!(majority_vote(&[A, A, B]).unwrap(), Some(A));
        assert_eq!(majority_vote(&[A, B]).unwrap(), None);
        assert_eq!(majority_vote(&[B, B, B, A, B]).unwrap(), Some(B));
        assert_eq!(majority_vote(&[]), Err(DenoiseError::EmptyList));
    }

    #[test]
    fn confidence_mean_and_threshold() {
        let c = aggregate_confidence(&[dist(0.9), dist(0.7)], A).unwrap();
        assert!((c - 0.8).abs() < 1e-12);
        assert!((aggregate_confidence(&[dist(0.6)], A).unwrap() - 0.6).abs() < 1e-12);
        assert!(confidence_filter(0.9, 0.8));
        assert!(!confidence_filter(0.6, 0.8));
        assert!(confidence_filter(0.0, 0.0));
    }

    #[test]
    fn top_confident_selection() {
        let records = vec![
            KeptRecord { record: { let mut r = PreferenceRecord::unlabeled("q", "a", "b"); r.id = "r0".into(); r }, confidence: 0.9 },
            KeptRecord { record: { let mut r = PreferenceRecord::unlabeled("q", "a", "c"); r.id = "r1".into(); r }, confidence: 0.5 },
            KeptRecord { record: { let mut r = PreferenceRecord::unlabeled("q", "a", "d"); r.id = "r2".into(); r }, confidence: 0.7 },
        ];
        let top = select_top_confident(records.clone(), 2);
        let ids: Vec<_> = top.iter().map(|k| k.record.id.as_str()).collect();
        assert_eq!(ids, ["r0", "r2"]);
        // n beyond len returns all, sorted descending
        let all = select_top_confident(records, 10);
        let ids: Vec<_> = all.iter().map(|k| k.record.id.as_str()).collect();
        assert_eq!(ids, ["r0", "r2", "r1"]);
    }

    /// 10 records: 2 rule-rejected, 1 vote tie, 3 below threshold, 4 kept.
    pub fn ten_record_fixture() -> Vec<PseudoLabeledRecord> {
        let mut v = Vec::new();
        v.push(input("r0", vec![A, A, A], vec![dist(0.9); 3], true));
        v.push(input("r1", vec![B, B, B], vec![dist(0.1); 3], true));
        v.push(input("r2", vec![A, A, B, B], vec![dist(0.9); 4], false));
        v.push(input("r3", vec![A, A, B], vec![dist(0.6); 3], false));
        v.push(input("r4", vec![B, B, A], vec![dist(0.5); 3], false));
        v.push(input("r5", vec![A, A, A], vec![dist(0.7); 3], false));
        v.push(input("r6", vec![A, A, A], vec![dist(0.95); 3], false));
        v.push(input("r7", vec![B, B, B], vec![dist(0.1); 3], false));
        v.push(input("r8", vec![A, B, A], vec![dist(0.85); 3], false));
        v.push(input("r9", vec![B, A, B], vec![dist(0.15); 3], false));
        v
    }

    #[test]
    fn batch_pipeline_counts() {
        let out = denoise_batch(ten_record_fixture(), &DenoiseConfig::new(3, 0.8));
        assert_eq!(out.counts.n_format_rejected, 2);
        assert_eq!(out.counts.n_vote_rejected, 1);
        assert_eq!(out.counts.n_confidence_rejected, 3);
        assert_eq!(out.counts.n_kept, 4);
        assert_eq!(
            out.counts.n_input,
            out.counts.n_format_rejected
                + out.counts.n_vote_rejected
                + out.counts.n_confidence_rejected
                + out.counts.n_kept
        );
        for k in &out.kept {
            assert!(k.record.label.is_some());
            assert_eq!(k.record.source, Source::PseudoLabeled);
        }
    }

    #[test]
    fn noop_config_keeps_everything_well_formed() {
        let inputs = vec![
            input("r0", vec![A], vec![dist(0.5)], false),
            input("r1", vec![B], vec![dist(0.5)], false),
        ];
        let out = denoise_batch(inputs, &DenoiseConfig::new(1, 0.0));
        assert_eq!(out.counts.n_kept, 2);
    }

    #[test]
    fn top_n_zero_drops_all_into_confidence_bucket() {
        let mut cfg = DenoiseConfig::new(3, 0.0);
        cfg.top_n = Some(0);
        let out = denoise_batch(ten_record_fixture(), &cfg);
        assert_eq!(out.counts.n_kept, 0);
        assert_eq!(out.counts.n_topn_rejected, 7);
        assert_eq!(out.counts.n_confidence_rejected, 7);
    }

    #[test]
    fn kept_set_shrinks_monotonically_in_threshold() {
        let mut prev: Option<std::collections::BTreeSet<String>> = None;
        let mut tau = 0.0;
        while tau <= 1.0 + 1e-9 {
            let out = denoise_batch(ten_record_fixture(), &DenoiseConfig::new(3, tau));
            let ids: std::collections::BTreeSet<String> =
                out.kept.iter().map(|k| k.record.id.clone()).collect();
            if let Some(p) = &prev {
                assert!(ids.is_subset(p), "kept set grew as tau rose to {tau}");
            }
            prev = Some(ids);
            tau += 0.05;
        }
    }
}
