//! Response ranking on top of pairwise judgments: single comparison,
//! voting@k, linear and tournament best-of-n selection, full ranking.

use crate::backend::{BackendError, SamplingParams, TextBackend};
use crate::rationale::parse_rationale;
use crate::templates::{TemplateError, TemplateSet};
use crate::types::{Label, LabelDistribution, PromptContext, RationaleBlock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("judge output unparseable after retry")]
    MalformedOutput,
    #[error("no candidates")]
    EmptyCandidates,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone)]
pub struct Judgment {
    pub label: Label,
    pub rationale: RationaleBlock,
    pub dist: LabelDistribution,
}

pub struct Ranker<'a, B: TextBackend> {
    backend: &'a B,
    templates: &'a TemplateSet,
    params: SamplingParams,
    base_seed: u64,
    /// Evaluate each comparison twice with responses swapped and keep the
    /// result only if consistent; off by default.
    pub position_debias: bool,
}

impl<'a, B: TextBackend> Ranker<'a, B> {
    pub fn new(backend: &'a B, templates: &'a TemplateSet, base_seed: u64) -> Self {
        Ranker {
            backend,
            templates,
            params: SamplingParams::default(),
            base_seed,
            position_debias: false,
        }
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = params;
        self
    }

    fn judge_once(&self, prompt: &PromptContext, seed: u64) -> Result<Judgment, RankError> {
        let params = SamplingParams {
            n_samples: 1,
            seed: Some(seed),
            ..self.params.clone()
        };
        let mut attempts = 0;
        loop {
            let completion = self
                .backend
                .generate(prompt, &params)?
                .into_iter()
                .next()
                .ok_or(RankError::MalformedOutput)?;
            match parse_rationale(&completion.text) {
                Ok(rationale) => {
                    let dist = self.backend.label_logprobs(prompt, Some(&completion.text))?;
                    return Ok(Judgment {
                        label: rationale.answer,
                        rationale,
                        dist,
                    });
                }
                Err(_) if attempts == 0 => {
                    attempts = 1;
                    continue;
                }
                Err(_) => return Err(RankError::MalformedOutput),
            }
        }
    }

    fn compare_run(
        &self,
        x: &str,
        y_a: &str,
        y_b: &str,
        run: u64,
    ) -> Result<Judgment, RankError> {
        let prompt = self.templates.render_reward_prompt(x, y_a, y_b, true)?;
        let seed = self.base_seed.wrapping_add(run);
        let forward = self.judge_once(&prompt, seed)?;
        if !self.position_debias {
            return Ok(forward);
        }
        let swapped_prompt = self.templates.render_reward_prompt(x, y_b, y_a, true)?;
        let swapped = self.judge_once(&swapped_prompt, seed)?;
        // A swapped verdict for the swapped order agrees with the forward one.
        if swapped.label == forward.label.other() {
            return Ok(forward);
        }
        // Inconsistent: fall back to summed probabilities of each response.
        let p_a = forward.dist.prob_a + swapped.dist.prob_b;
        let p_b = forward.dist.prob_b + swapped.dist.prob_a;
        if p_a >= p_b {
            Ok(forward)
        } else {
            Ok(Judgment {
                label: Label::B,
                rationale: forward.rationale,
                dist: forward.dist,
            })
        }
    }

    /// One judged comparison: label, rationale, and the answer-position
    /// label distribution.
    pub fn compare(&self, x: &str, y_a: &str, y_b: &str) -> Result<Judgment, RankError> {
        self.compare_run(x, y_a, y_b, 0)
    }

    /// Majority label over k independent runs. Exact ties resolve by the
    /// greater summed winner-probability, then to A.
    pub fn vote_at_k(&self, x: &str, y_a: &str, y_b: &str, k: usize) -> Result<Label, RankError> {
        let mut judgments = Vec::with_capacity(k);
        let mut last_err = None;
        for run in 0..k.max(1) as u64 {
            match self.compare_run(x, y_a, y_b, run) {
                Ok(j) => judgments.push(j),
                Err(e) => last_err = Some(e),
            }
        }
        if judgments.is_empty() {
            return Err(last_err.unwrap_or(RankError::MalformedOutput));
        }
        let votes_a = judgments.iter().filter(|j| j.label == Label::A).count();
        let votes_b = judgments.len() - votes_a;
        Ok(match votes_a.cmp(&votes_b) {
            std::cmp::Ordering::Greater => Label::A,
            std::cmp::Ordering::Less => Label::B,
            std::cmp::Ordering::Equal => {
                let sum_a: f64 = judgments.iter().map(|j| j.dist.prob_a).sum();
                let sum_b: f64 = judgments.iter().map(|j| j.dist.prob_b).sum();
                if sum_b > sum_a {
                    Label::B
                } else {
                    Label::A
                }
            }
        })
    }

    /// Linear best-of-n scan: hold the current best, replace it whenever a
    /// challenger is preferred. Exactly n-1 comparisons.
    pub fn best_of_n_linear(&self, x: &str, candidates: &[String]) -> Result<usize, RankError> {
        if candidates.is_empty() {
            return Err(RankError::EmptyCandidates);
        }
        let mut best = 0;
        for i in 1..candidates.len() {
            let j = self.compare(x, &candidates[best], &candidates[i])?;
            if j.label == Label::B {
                best = i;
            }
        }
        Ok(best)
    }

    /// Single-elimination tournament over adjacent pairs; the odd one out
    /// gets a bye. Also exactly n-1 comparisons.
    pub fn best_of_n_dnc(&self, x: &str, candidates: &[String]) -> Result<usize, RankError> {
        if candidates.is_empty() {
            return Err(RankError::EmptyCandidates);
        }
        let mut round: Vec<usize> = (0..candidates.len()).collect();
        while round.len() > 1 {
            let mut next = Vec::with_capacity(round.len().div_ceil(2));
            for pair in round.chunks(2) {
                match pair {
                    [a, b] => {
                        let j = self.compare(x, &candidates[*a], &candidates[*b])?;
                        next.push(if j.label == Label::A { *a } else { *b });
                    }
                    [bye] => next.push(*bye),
                    _ => unreachable!(),
                }
            }
            round = next;
        }
        Ok(round[0])
    }

    /// Full ranking (best first) by repeatedly selecting the best response
    /// from the remaining set.
    pub fn full_ranking(&self, x: &str, candidates: &[String]) -> Result<Vec<usize>, RankError> {
        if candidates.is_empty() {
            return Err(RankError::EmptyCandidates);
        }
        let mut remaining: Vec<usize> = (0..candidates.len()).collect();
        let mut ranking = Vec::with_capacity(candidates.len());
        while !remaining.is_empty() {
            let texts: Vec<String> = remaining
                .iter()
                .map(|&i| candidates[i].clone())
                .collect();
            let winner_pos = self.best_of_n_linear(x, &texts)?;
            ranking.push(remaining.remove(winner_pos));
        }
        Ok(ranking)
    }
}
