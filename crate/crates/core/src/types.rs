//! Domain data model shared by the whole pipeline.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// Preference label: which of the two responses is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
        }
    }

    pub fn other(&self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "A" => Some(Label::A),
            "B" => Some(Label::B),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a preference record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    LabeledRationaleFree,
    LabeledWithRationale,
    Unlabeled,
    PseudoLabeled,
}

/// Structured reward reasoning: free-text feedback on each response, a
/// comparison, a conclusion, and the final answer label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleBlock {
    pub feedback: String,
    pub comparison: String,
    pub conclusion: String,
    pub answer: Label,
}

/// One pairwise comparison instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub id: String,
    pub input_text: String,
    pub response_a: String,
    pub response_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<RationaleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<String>,
    pub source: Source,
    /// Optional benchmark tag (e.g. "chat", "math") used by the eval harness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl PreferenceRecord {
    /// A new unlabeled record with a content-derived id.
    pub fn unlabeled(input: &str, a: &str, b: &str) -> Self {
        PreferenceRecord {
            id: content_id(input, a, b),
            input_text: input.to_string(),
            response_a: a.to_string(),
            response_b: b.to_string(),
            label: None,
            rationale: None,
            proof: None,
            source: Source::Unlabeled,
            tag: None,
        }
    }

    /// A new labeled, rationale-free record with a content-derived id.
    pub fn labeled(input: &str, a: &str, b: &str, label: Label) -> Self {
        PreferenceRecord {
            label: Some(label),
            source: Source::LabeledRationaleFree,
            ..Self::unlabeled(input, a, b)
        }
    }
}

/// Stable content digest for deriving record ids.
pub fn content_id(input: &str, a: &str, b: &str) -> String {
    let mut h = Sha256::new();
    for part in [input, a, b] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(&h.finalize()[..12])
}

/// A generated textual proof together with its likelihoods and ratio score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofCandidate {
    pub text: String,
    pub conditional_logprob: f64,
    pub unconditional_logprob: f64,
    pub score: f64,
}

/// Normalized probabilities over the two label tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub prob_a: f64,
    pub prob_b: f64,
}

impl LabelDistribution {
    /// Softmax over two raw logits (or logprobs); invariant to a shared shift.
    pub fn from_logits(logit_a: f64, logit_b: f64) -> Self {
        let m = logit_a.max(logit_b);
        let ea = (logit_a - m).exp();
        let eb = (logit_b - m).exp();
        LabelDistribution {
            prob_a: ea / (ea + eb),
            prob_b: eb / (ea + eb),
        }
    }

    pub fn prob_of(&self, label: Label) -> f64 {
        match label {
            Label::A => self.prob_a,
            Label::B => self.prob_b,
        }
    }
}

/// A fully rendered judge/prover prompt string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub prompt_text: String,
}

impl PromptContext {
    pub const MARKER_QUESTION: &'static str = "[User Question]";
    pub const MARKER_A: &'static str = "[The Start of Assistant A's Response]";
    pub const MARKER_B: &'static str = "[The Start of Assistant B's Response]";

    /// True when the three section markers each appear exactly once.
    pub fn has_section_markers(&self) -> bool {
        [Self::MARKER_QUESTION, Self::MARKER_A, Self::MARKER_B]
            .iter()
            .all(|m| self.prompt_text.matches(m).count() == 1)
    }
}

/// Audit record for one self-training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationManifest {
    pub iteration_index: u64,
    pub n_input: u64,
    pub n_format_rejected: u64,
    pub n_vote_rejected: u64,
    pub n_confidence_rejected: u64,
    pub n_kept: u64,
    pub config_digest: String,
    pub seed: u64,
    /// Sub-counts that refine the headline buckets (e.g. top-n rejections
    /// folded into n_confidence_rejected).
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub extensions: std::collections::BTreeMap<String, u64>,
}

impl IterationManifest {
    /// Stage conservation: inputs are fully accounted for.
    pub fn is_conserved(&self) -> bool {
        self.n_input
            == self.n_format_rejected + self.n_vote_rejected + self.n_confidence_rejected
                + self.n_kept
    }
}

/// Violation codes reported by [`validate_record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordViolation {
    UnlabeledHasLabel,
    UnlabeledHasRationale,
    MissingLabel,
    MissingRationale,
    AnswerLabelMismatch,
    EmptyRationaleSection,
}

/// Check every invariant of a [`PreferenceRecord`]; empty report means valid.
pub fn validate_record(rec: &PreferenceRecord) -> Vec<RecordViolation> {
    let mut out = Vec::new();
    match rec.source {
        Source::Unlabeled => {
            if rec.label.is_some() {
                out.push(RecordViolation::UnlabeledHasLabel);
            }
            if rec.rationale.is_some() {
                out.push(RecordViolation::UnlabeledHasRationale);
            }
        }
        Source::LabeledWithRationale => {
            if rec.label.is_none() {
                out.push(RecordViolation::MissingLabel);
            }
            if rec.rationale.is_none() {
                out.push(RecordViolation::MissingRationale);
            }
        }
        Source::LabeledRationaleFree | Source::PseudoLabeled => {
            if rec.label.is_none() {
                out.push(RecordViolation::MissingLabel);
            }
        }
    }
    if let Some(rb) = &rec.rationale {
        if let Some(label) = rec.label {
            if rb.answer != label {
                out.push(RecordViolation::AnswerLabelMismatch);
            }
        }
        if rb.feedback.trim().is_empty()
            || rb.comparison.trim().is_empty()
            || rb.conclusion.trim().is_empty()
        {
            out.push(RecordViolation::EmptyRationaleSection);
        }
    }
    out
}
