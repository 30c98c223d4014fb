//! Abstract text-generation interface used by every pipeline stage, with a
//! wire client for chat-completions-style endpoints and a deterministic
//! mock for tests.

mod http;
mod mock;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{digest, stable_hash, MockBackend, MockSpec};

use crate::types::{LabelDistribution, PromptContext};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub n_samples: usize,
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        // top-p 0.95 / temperature 0.7 sampling defaults
        SamplingParams {
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 4096,
            n_samples: 1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub token_logprobs: Vec<(String, f64)>,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("rate limited")]
    RateLimited,
    #[error("context overflow")]
    ContextOverflow,
    #[error("empty continuation")]
    EmptyContinuation,
    #[error("backend cannot teacher-force sequence scoring")]
    ScoringUnsupported,
    #[error("label tokens not present in returned logprobs")]
    LabelTokensUnavailable,
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited | BackendError::BackendUnavailable(_)
        )
    }
}

/// Inference interface every other module is written against.
pub trait TextBackend: Send + Sync {
    /// Draw `params.n_samples` completions for the prompt.
    fn generate(
        &self,
        prompt: &PromptContext,
        params: &SamplingParams,
    ) -> Result<Vec<Completion>, BackendError>;

    /// Sum of continuation token logprobs under teacher forcing.
    fn score_sequence(&self, prefix: &str, continuation: &str) -> Result<f64, BackendError>;

    /// Raw logprobs of the two label tokens at the answer position,
    /// renormalized over exactly {A, B}.
    fn label_logprobs(
        &self,
        prompt: &PromptContext,
        rationale_prefix: Option<&str>,
    ) -> Result<LabelDistribution, BackendError>;

    /// Backend-consistent token count.
    fn count_tokens(&self, text: &str) -> usize;
}

impl<T: TextBackend + ?Sized> TextBackend for &T {
    fn generate(
        &self,
        prompt: &PromptContext,
        params: &SamplingParams,
    ) -> Result<Vec<Completion>, BackendError> {
        (**self).generate(prompt, params)
    }
    fn score_sequence(&self, prefix: &str, continuation: &str) -> Result<f64, BackendError> {
        (**self).score_sequence(prefix, continuation)
    }
    fn label_logprobs(
        &self,
        prompt: &PromptContext,
        rationale_prefix: Option<&str>,
    ) -> Result<LabelDistribution, BackendError> {
        (**self).label_logprobs(prompt, rationale_prefix)
    }
    fn count_tokens(&self, text: &str) -> usize {
        (**self).count_tokens(text)
    }
}

impl<T: TextBackend + ?Sized> TextBackend for Box<T> {
    fn generate(
        &self,
        prompt: &PromptContext,
        params: &SamplingParams,
    ) -> Result<Vec<Completion>, BackendError> {
        (**self).generate(prompt, params)
    }
    fn score_sequence(&self, prefix: &str, continuation: &str) -> Result<f64, BackendError> {
        (**self).score_sequence(prefix, continuation)
    }
    fn label_logprobs(
        &self,
        prompt: &PromptContext,
        rationale_prefix: Option<&str>,
    ) -> Result<LabelDistribution, BackendError> {
        (**self).label_logprobs(prompt, rationale_prefix)
    }
    fn count_tokens(&self, text: &str) -> usize {
        (**self).count_tokens(text)
    }
}

/// Capped exponential backoff with a hard attempt limit.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay_ms(&self, attempt: u32) -> u64 {
        (self.base_delay_ms.saturating_mul(1u64 << attempt.min(16))).min(self.max_delay_ms)
    }
}

/// Run `op` under the retry policy; returns the result and total attempts.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut() -> Result<T, BackendError>,
) -> (Result<T, BackendError>, u32) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match op() {
            Ok(v) => return (Ok(v), attempts),
            Err(e) if e.is_retryable() && attempts < policy.max_attempts => {
                let delay = policy.delay_ms(attempts - 1);
                log::warn!("retryable backend error ({e}); attempt {attempts}, sleeping {delay}ms");
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
            Err(e) => return (Err(e), attempts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retry_stops_at_attempt_limit() {
        let policy = RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 0,
            max_delay_ms: 0,
        };
        let mut calls = 0;
        let (res, attempts) = with_retry::<()>(&policy, || {
            calls += 1;
            Err(BackendError::RateLimited)
        });
        assert_eq!(res, Err(BackendError::RateLimited));
        assert_eq!(attempts, 3);
        assert_eq!(calls, 3);
    }

    #[test]
    fn non_retryable_errors_fail_fast() {
        let policy = RetryPolicy::default();
        let (res, attempts) =
            with_retry::<()>(&policy, || Err(BackendError::ScoringUnsupported));
        assert_eq!(res, Err(BackendError::ScoringUnsupported));
        assert_eq!(attempts, 1);
    }

    #[test]
    fn backoff_is_capped() {
        let policy = RetryPolicy {
            max_attempts: 10,
            base_delay_ms: 100,
            max_delay_ms: 1_000,
        };
        assert_eq!(policy.delay_ms(0), 100);
        assert_eq!(policy.delay_ms(1), 200);
        assert_eq!(policy.delay_ms(8), 1_000);
    }
}
