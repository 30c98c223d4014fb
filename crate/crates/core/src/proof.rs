//! Candidate proof sampling and ratio-score selection.
//!
//! For a labeled comparison, k proofs are sampled from the prover and
//! re-ranked by -log p(proof | prompt, label) / log p(proof), favoring
//! proofs specific to the context over generic ones.

use crate::backend::{BackendError, SamplingParams, TextBackend};
use crate::rationale::{proof_to_rationale, ProofError};
use crate::templates::{TemplateError, TemplateSet};
use crate::types::{PreferenceRecord, ProofCandidate, Source};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct ProverConfig {
    /// Candidate proofs sampled per record.
    pub k: usize,
    pub params: SamplingParams,
    /// Guard against a vanishing unconditional log-likelihood, where the
    /// ratio score is undefined.
    pub epsilon: f64,
    /// Constant context used for the unconditional likelihood, so the
    /// quantity is well defined and comparable across candidates.
    pub neutral_prefix: String,
}

impl Default for ProverConfig {
    fn default() -> Self {
        ProverConfig {
            k: 4,
            params: SamplingParams::default(),
            epsilon: 1e-6,
            neutral_prefix: String::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProofSelectionError {
    #[error("record has no label")]
    MissingLabel,
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("unconditional logprob too close to zero ({0})")]
    DegenerateUnconditional(f64),
    #[error("no candidate proof parses into a rationale")]
    AllCandidatesUnparseable,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub struct ProofSelector<'a, B: TextBackend> {
    backend: &'a B,
    templates: &'a TemplateSet,
    config: ProverConfig,
}

impl<'a, B: TextBackend> ProofSelector<'a, B> {
    pub fn new(backend: &'a B, templates: &'a TemplateSet, config: ProverConfig) -> Self {
        ProofSelector {
            backend,
            templates,
            config,
        }
    }

    pub fn config(&self) -> &ProverConfig {
        &self.config
    }

    /// Draw k candidate proof texts for a labeled record.
    pub fn sample_proofs(
        &self,
        rec: &PreferenceRecord,
        seed: Option<u64>,
    ) -> Result<Vec<String>, ProofSelectionError> {
        let label = rec.label.ok_or(ProofSelectionError::MissingLabel)?;
        let prompt = self.templates.render_prover_prompt(
            &rec.input_text,
            &rec.response_a,
            &rec.response_b,
            label,
        )?;
        let params = SamplingParams {
            n_samples: self.config.k.max(1),
            seed: seed.or(self.config.params.seed),
            ..self.config.params.clone()
        };
        let completions = self.backend.generate(&prompt, &params)?;
        Ok(completions.into_iter().map(|c| c.text).collect())
    }

    /// Fill in both likelihoods and the ratio score for one candidate.
    pub fn score_proof(
        &self,
        rec: &PreferenceRecord,
        candidate_text: &str,
    ) -> Result<ProofCandidate, ProofSelectionError> {
        let label = rec.label.ok_or(ProofSelectionError::MissingLabel)?;
        let prompt = self.templates.render_prover_prompt(
            &rec.input_text,
            &rec.response_a,
            &rec.response_b,
            label,
        )?;
        let conditional = self
            .backend
            .score_sequence(&prompt.prompt_text, candidate_text)?;
        let unconditional = self
            .backend
            .score_sequence(&self.config.neutral_prefix, candidate_text)?;
        if unconditional > -self.config.epsilon {
            return Err(ProofSelectionError::DegenerateUnconditional(unconditional));
        }
        Ok(ProofCandidate {
            text: candidate_text.to_string(),
            conditional_logprob: conditional,
            unconditional_logprob: unconditional,
            score: -(conditional / unconditional),
        })
    }

    /// Sample, score, select, and reform the winning proof into a
    /// rationale carrying the conditioning label.
    pub fn synthesize_rationale(
        &self,
        rec: &PreferenceRecord,
        seed: Option<u64>,
    ) -> Result<PreferenceRecord, ProofSelectionError> {
        let label = rec.label.ok_or(ProofSelectionError::MissingLabel)?;
        let texts = self.sample_proofs(rec, seed)?;

        // Unparseable candidates are excluded before argmax so the winner
        // is always usable.
        let parseable: Vec<&String> = texts
            .iter()
            .filter(|t| proof_to_rationale(t, label).is_ok())
            .collect();
        if parseable.is_empty() {
            return Err(ProofSelectionError::AllCandidatesUnparseable);
        }

        let mut scored = Vec::new();
        for text in &parseable {
            match self.score_proof(rec, text) {
                Ok(c) => scored.push(c),
                Err(ProofSelectionError::DegenerateUnconditional(v)) => {
                    log::warn!("discarding candidate with degenerate unconditional logprob {v}");
                }
                Err(ProofSelectionError::Backend(BackendError::ScoringUnsupported)) => {
                    // Degrade to first-sample selection when the backend
                    // cannot teacher-force.
                    log::warn!("backend cannot score sequences; selecting first parseable proof");
                    scored.clear();
                    scored.push(ProofCandidate {
                        text: text.to_string(),
                        conditional_logprob: f64::NEG_INFINITY,
                        unconditional_logprob: f64::NEG_INFINITY,
                        score: 0.0,
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if scored.is_empty() {
            return Err(ProofSelectionError::AllCandidatesUnparseable);
        }

        let (winner, _) = select_best_proof(&scored)?;
        let rationale = proof_to_rationale(&winner.text, label)
            .map_err(|ProofError::UnparseableProof| ProofSelectionError::AllCandidatesUnparseable)?;

        let mut out = rec.clone();
        out.proof = Some(winner.text.clone());
        out.rationale = Some(rationale);
        if out.source == Source::LabeledRationaleFree {
            out.source = Source::LabeledWithRationale;
        }
        Ok(out)
    }
}

/// Argmax by score; ties broken by lowest index.
pub fn select_best_proof(
    candidates: &[ProofCandidate],
) -> Result<(&ProofCandidate, usize), ProofSelectionError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        match best {
            Some((_, s)) if c.score <= s => {}
            _ => best = Some((i, c.score)),
        }
    }
    best.map(|(i, _)| (&candidates[i], i))
        .ok_or(ProofSelectionError::EmptyCandidates)
}
