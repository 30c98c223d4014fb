//! Pairwise-accuracy evaluation over labeled datasets.

use crate::backend::{stable_hash, TextBackend};
use crate::ranking::Ranker;
use crate::templates::TemplateSet;
use crate::types::{Label, PreferenceRecord, Source};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("record {0} has no label")]
    UnlabeledRecord(String),
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Votes per record; 1 means a single comparison.
    pub vote_k: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { vote_k: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub n: u64,
    pub correct: u64,
}

impl TagStats {
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        }
    }
}

/// Evaluation report. Errored evaluations count as incorrect (conservative;
/// excluding them would inflate accuracy silently).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: u64,
    pub n_correct: u64,
    pub n_errors: u64,
    pub per_tag: BTreeMap<String, TagStats>,
}

const UNTAGGED: &str = "untagged";

/// Accuracy of judge predictions against gold labels.
pub fn pairwise_accuracy<B: TextBackend>(
    backend: &B,
    templates: &TemplateSet,
    dataset: &[PreferenceRecord],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let ranker = Ranker::new(backend, templates, cfg.seed);
    let mut per_tag: BTreeMap<String, TagStats> = BTreeMap::new();
    let mut n_correct = 0;
    let mut n_errors = 0;
    for rec in dataset {
        let gold = rec
            .label
            .ok_or_else(|| EvalError::UnlabeledRecord(rec.id.clone()))?;
        let predicted = if cfg.vote_k <= 1 {
            ranker
                .compare(&rec.input_text, &rec.response_a, &rec.response_b)
                .map(|j| j.label)
        } else {
            ranker.vote_at_k(&rec.input_text, &rec.response_a, &rec.response_b, cfg.vote_k)
        };
        let correct = match predicted {
            Ok(l) => l == gold,
            Err(e) => {
                log::warn!("record {}: evaluation error ({e}); counted incorrect", rec.id);
                n_errors += 1;
                false
            }
        };
        let tag = rec.tag.clone().unwrap_or_else(|| UNTAGGED.to_string());
        let stats = per_tag.entry(tag).or_default();
        stats.n += 1;
        if correct {
            stats.correct += 1;
            n_correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: n_correct as f64 / dataset.len() as f64,
        n: dataset.len() as u64,
        n_correct,
        n_errors,
        per_tag,
    })
}

/// A (prompt, chosen, rejected)-style benchmark line.
#[derive(Debug, Deserialize)]
pub struct ChosenRejected {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    #[serde(default)]
    pub tag: Option<String>,
}

/// Adapt chosen/rejected pairs into labeled records, swapping A/B per
/// record under the run seed to avoid position bias in evaluation.
pub fn adapt_chosen_rejected(items: &[ChosenRejected], seed: u64) -> Vec<PreferenceRecord> {
    items
        .iter()
        .map(|item| {
            let swap = stable_hash(&[
                "swap",
                &seed.to_string(),
                &item.prompt,
                &item.chosen,
                &item.rejected,
            ]) % 2
                == 1;
            let (a, b, label) = if swap {
                (&item.rejected, &item.chosen, Label::B)
            } else {
                (&item.chosen, &item.rejected, Label::A)
            };
            let mut rec = PreferenceRecord::labeled(&item.prompt, a, b, label);
            rec.source = Source::LabeledRationaleFree;
            rec.tag = item.tag.clone();
            rec
        })
        .collect()
}
