//! Scalar rewards for RL consumers: reference-based reward, gamma scaling,
//! and a moving-window reward normalizer.

use crate::backend::{SamplingParams, TextBackend};
use crate::ranking::RankError;
use crate::templates::TemplateSet;
use std::collections::VecDeque;

/// Probability that the sampled response beats the reference, with the
/// sampled response in slot A. Lies in [0, 1].
pub fn reference_reward<B: TextBackend>(
    backend: &B,
    templates: &TemplateSet,
    x: &str,
    y_sampled: &str,
    y_ref: &str,
    with_reasoning: bool,
) -> Result<f64, RankError> {
    let prompt = templates.render_reward_prompt(x, y_sampled, y_ref, with_reasoning)?;
    let rationale_text = if with_reasoning {
        let completion = backend
            .generate(&prompt, &SamplingParams {
                n_samples: 1,
                seed: Some(0),
                ..Default::default()
            })?
            .into_iter()
            .next()
            .ok_or(RankError::MalformedOutput)?;
        Some(completion.text)
    } else {
        None
    };
    let dist = backend.label_logprobs(&prompt, rationale_text.as_deref())?;
    Ok(dist.prob_a)
}

/// Multiply a [0, 1] reward by the scaling factor (default 10).
pub fn scaled_reward(r: f64, gamma: f64) -> f64 {
    gamma * r
}

/// Bounded FIFO of recent rewards with mean/std standardization over the
/// window. Single-writer; concurrent workers need their own instance.
#[derive(Debug, Clone)]
pub struct RunningNormalizer {
    window: usize,
    buffer: VecDeque<f64>,
}

impl Default for RunningNormalizer {
    fn default() -> Self {
        RunningNormalizer::new(1000)
    }
}

impl RunningNormalizer {
    pub fn new(window: usize) -> Self {
        RunningNormalizer {
            window: window.max(1),
            buffer: VecDeque::with_capacity(window.max(1)),
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.buffer.is_empty() {
            return 0.0;
        }
        self.buffer.iter().sum::<f64>() / self.buffer.len() as f64
    }

    /// Population standard deviation over the buffer.
    pub fn std(&self) -> f64 {
        if self.buffer.len() < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .buffer
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.buffer.len() as f64;
        var.sqrt()
    }

    /// Standardize against the current buffer without pushing.
    pub fn standardize(&self, r: f64) -> f64 {
        let std = self.std();
        if std == 0.0 {
            0.0
        } else {
            (r - self.mean()) / std
        }
    }

    /// Push r (evicting the oldest beyond the window) and return its
    /// standardized value over the updated buffer.
    pub fn push_and_standardize(&mut self, r: f64) -> f64 {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(r);
        self.standardize(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockSpec};

    #[test]
    fn reference_reward_reads_slot_a_probability() {
        let templates = TemplateSet::default();
        let prompt = templates.render_reward_prompt("q", "ys", "yr", false).unwrap();
        // logits chosen so prob_a is exactly 0.73
        let p = 0.73_f64;
        let backend = MockBackend::new(
            MockSpec::default().with_label_logits(&prompt.prompt_text, p.ln(), (1.0 - p).ln()),
        );
        let r = reference_reward(&backend, &templates, "q", "ys", "yr", false).unwrap();
        assert!((r - 0.73).abs() < 1e-12);
    }

    #[test]
    fn reference_reward_in_unit_interval_even_for_identical_responses() {
        let templates = TemplateSet::default();
        let backend = MockBackend::new(MockSpec::default());
        let r = reference_reward(&backend, &templates, "q", "same", "same", true).unwrap();
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn scaling_arithmetic() {
        assert!((scaled_reward(0.73, 10.0) - 7.3).abs() < 1e-12);
        assert_eq!(scaled_reward(0.0, 5.0), 0.0);
        assert_eq!(scaled_reward(1.0, 10.0), 10.0);
    }

    #[test]
    fn normalizer_degenerate_cases() {
        let mut nz = RunningNormalizer::new(10);
        assert_eq!(nz.push_and_standardize(5.0), 0.0);
        nz.push_and_standardize(2.0);
        nz.push_and_standardize(-1.0);
        // buffer [5, 2, -1]: mean 2
        assert!((nz.standardize(2.0)).abs() < 1e-12);
    }

    #[test]
    fn normalizer_matches_brute_force_over_window() {
        let mut nz = RunningNormalizer::new(5);
        let mut history = Vec::new();
        for i in 0..50u64 {
            let v = ((i * 2654435761) % 1000) as f64 / 100.0;
            history.push(v);
            let got = nz.push_and_standardize(v);
            let window: Vec<f64> = history.iter().rev().take(5).copied().collect();
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            let var =
                window.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window.len() as f64;
            let expected = if window.len() < 2 || var.sqrt() == 0.0 {
                0.0
            } else {
                (v - mean) / var.sqrt()
            };
            assert!((got - expected).abs() < 1e-9, "at step {i}");
        }
    }

    #[test]
    fn normalizer_is_shift_equivariant() {
        let values = [0.3, 1.7, -2.2, 0.0, 5.5, 3.1];
        let mut a = RunningNormalizer::new(4);
        let mut b = RunningNormalizer::new(4);
        for v in values {
            let x = a.push_and_standardize(v);
            let y = b.push_and_standardize(v + 100.0);
            assert!((x - y).abs() < 1e-9);
        }
    }
}
