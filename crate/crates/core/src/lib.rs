//! Reward-reasoning pipeline over a pluggable text-generation backend.
//!
//! The crate covers four workflows around a generative pairwise judge:
//!
//! - synthesizing rationales for labeled preference data by sampling
//!   candidate proofs and selecting the most context-specific one;
//! - iterative self-training over unlabeled data with pseudo-label
//!   denoising (majority vote, confidence threshold, format rules);
//! - list-wise response ranking (best-of-n linear scan, single-elimination
//!   tournament, full ranking, voting@k);
//! - scalar reward computation for RL consumers (reference-based reward,
//!   gamma scaling, moving-window normalization).
//!
//! Every algorithm runs against the [`backend::TextBackend`] trait; the
//! deterministic [`backend::MockBackend`] makes the whole pipeline
//! testable offline.

pub mod backend;
pub mod dataset;
pub mod denoise;
pub mod eval;
pub mod proof;
pub mod ranking;
pub mod rationale;
pub mod reward;
pub mod selftrain;
pub mod templates;
pub mod types;

pub use types::{Label, LabelDistribution, PreferenceRecord, PromptContext, RationaleBlock};
