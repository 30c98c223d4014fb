//! Deterministic mock backend.
//!
//! A pure function of (MockSpec, inputs, seed): table lookups where the
//! spec provides entries, seeded-hash fallbacks everywhere else, so the
//! mock never fails on unseen inputs.

use super::{BackendError, Completion, FinishReason, SamplingParams, TextBackend};
use crate::types::{Label, LabelDistribution, PromptContext};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Stable 64-bit hash of a sequence of string parts.
pub fn stable_hash(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Short stable digest used to key mock tables by prompt text.
pub fn digest(text: &str) -> String {
    format!("{:016x}", stable_hash(&[text]))
}

#[derive(Debug, Clone, Default)]
pub struct MockSpec {
    /// (input, response_a, response_b) -> preferred label.
    pub preference_table: HashMap<(String, String, String), Label>,
    /// prompt digest -> raw (logit_a, logit_b) at the answer position.
    pub label_logit_table: HashMap<String, (f64, f64)>,
    /// (prefix digest, continuation digest) -> summed logprob.
    pub sequence_logprob_table: HashMap<(String, String), f64>,
    /// prompt digest -> canned generations, indexed by (seed + sample).
    pub canned_generations: HashMap<String, Vec<String>>,
    /// Seed mixed into every hash fallback.
    pub default_logit_noise_seed: u64,
}

impl MockSpec {
    pub fn with_preference(mut self, x: &str, a: &str, b: &str, label: Label) -> Self {
        self.preference_table
            .insert((x.into(), a.into(), b.into()), label);
        self
    }

    pub fn with_canned(mut self, prompt_text: &str, generations: Vec<String>) -> Self {
        self.canned_generations.insert(digest(prompt_text), generations);
        self
    }

    pub fn with_label_logits(mut self, prompt_key: &str, logit_a: f64, logit_b: f64) -> Self {
        self.label_logit_table
            .insert(digest(prompt_key), (logit_a, logit_b));
        self
    }

    pub fn with_sequence_logprob(mut self, prefix: &str, continuation: &str, lp: f64) -> Self {
        self.sequence_logprob_table
            .insert((digest(prefix), digest(continuation)), lp);
        self
    }
}

pub struct MockBackend {
    spec: MockSpec,
    generate_calls: AtomicUsize,
    score_calls: AtomicUsize,
}

/// Pull (input, response_a, response_b) back out of a rendered prompt.
pub fn extract_prompt_sections(prompt_text: &str) -> Option<(String, String, String)> {
    let x = between(
        prompt_text,
        "[User Question]\n",
        "\n\n[The Start of Assistant A's Response]",
    )?;
    let a = between(
        prompt_text,
        "[The Start of Assistant A's Response]\n",
        "\n\n[The End of Assistant A's Response]",
    )?;
    let b = between(
        prompt_text,
        "[The Start of Assistant B's Response]\n",
        "\n\n[The End of Assistant B's Response]",
    )?;
    Some((x, a, b))
}

fn between(haystack: &str, start: &str, end: &str) -> Option<String> {
    let s = haystack.find(start)? + start.len();
    let e = haystack[s..].find(end)? + s;
    Some(haystack[s..e].to_string())
}

impl MockBackend {
    pub fn new(spec: MockSpec) -> Self {
        MockBackend {
            spec,
            generate_calls: AtomicUsize::new(0),
            score_calls: AtomicUsize::new(0),
        }
    }

    /// Number of generate() invocations, for comparison-count assertions.
    pub fn generate_calls(&self) -> usize {
        self.generate_calls.load(Ordering::SeqCst)
    }

    pub fn score_calls(&self) -> usize {
        self.score_calls.load(Ordering::SeqCst)
    }

    pub fn reset_counters(&self) {
        self.generate_calls.store(0, Ordering::SeqCst);
        self.score_calls.store(0, Ordering::SeqCst);
    }

    fn seed_str(&self) -> String {
        self.spec.default_logit_noise_seed.to_string()
    }

    /// Label the mock "believes" for a comparison: table entry if present,
    /// otherwise a seeded-hash coin.
    fn preferred_label(&self, x: &str, a: &str, b: &str) -> Label {
        if let Some(l) = self
            .spec
            .preference_table
            .get(&(x.to_string(), a.to_string(), b.to_string()))
        {
            return *l;
        }
        if stable_hash(&["pref", &self.seed_str(), x, a, b]) % 2 == 0 {
            Label::A
        } else {
            Label::B
        }
    }

    fn synthesize_output(&self, prompt_text: &str, sample_salt: u64) -> String {
        // Prover prompts end with the label-disclosure line.
        if let Some(rest) = prompt_text
            .rfind("The selected response is: Response ")
            .map(|p| &prompt_text[p + "The selected response is: Response ".len()..])
        {
            let label = Label::parse(&rest.trim_end_matches('.').trim().chars().take(1).collect::<String>())
                .unwrap_or(Label::A);
            let other = label.other();
            return format!(
                "Here is my justification for why the selected response is the better one.\n\n\
                 First, Response {label} is clear and addresses the request (variant {sample_salt}). Response {other} is weaker on the key requirement.\n\n\
                 Then, Response {label} is better than Response {other} because it follows the instruction more closely.\n\n\
                 Thus, Response {label} is better."
            );
        }
        // Judge prompts carry the three section markers.
        if let Some((x, a, b)) = extract_prompt_sections(prompt_text) {
            let label = self.preferred_label(&x, &a, &b);
            let other = label.other();
            return format!(
                "<think>Feedback: Response {label} is helpful (variant {sample_salt}). Response {other} is less helpful.\n\
                 Comparison: Response {label} is better than Response {other}.\n\
                 Conclusion: Response {label} is better.</think><answer>{label}</answer>"
            );
        }
        format!("mock-output-{:016x}", stable_hash(&[prompt_text, &sample_salt.to_string()]))
    }

    /// Per-token logprob in [-4.5, -0.5], a pure function of the full token
    /// context so summed scores are additive over token boundaries.
    fn token_logprob(&self, context: &[&str], token: &str) -> f64 {
        let ctx = context.join(" ");
        let h = stable_hash(&["tok", &self.seed_str(), &ctx, token]);
        -(0.5 + (h % 4000) as f64 / 1000.0)
    }
}

impl TextBackend for MockBackend {
    fn generate(
        &self,
        prompt: &PromptContext,
        params: &SamplingParams,
    ) -> Result<Vec<Completion>, BackendError> {
        self.generate_calls.fetch_add(1, Ordering::SeqCst);
        let seed = params.seed.unwrap_or(0);
        let key = digest(&prompt.prompt_text);
        let mut out = Vec::with_capacity(params.n_samples);
        for i in 0..params.n_samples {
            let text = match self.spec.canned_generations.get(&key) {
                Some(list) if !list.is_empty() => {
                    list[(seed as usize + i) % list.len()].clone()
                }
                _ => {
                    // temperature 0 collapses to a single distinct sample
                    let salt = if params.temperature == 0.0 {
                        0
                    } else {
                        stable_hash(&["gen", &self.seed_str(), &seed.to_string(), &i.to_string()]) % 1000
                    };
                    self.synthesize_output(&prompt.prompt_text, salt)
                }
            };
            let mut ctx: Vec<&str> = Vec::new();
            let tokens: Vec<&str> = text.split_whitespace().collect();
            let mut token_logprobs = Vec::with_capacity(tokens.len());
            for t in tokens {
                token_logprobs.push((t.to_string(), self.token_logprob(&ctx, t)));
                ctx.push(t);
            }
            out.push(Completion {
                text,
                token_logprobs,
                finish_reason: FinishReason::Stop,
            });
        }
        Ok(out)
    }

    fn score_sequence(&self, prefix: &str, continuation: &str) -> Result<f64, BackendError> {
        self.score_calls.fetch_add(1, Ordering::SeqCst);
        if continuation.is_empty() {
            return Err(BackendError::EmptyContinuation);
        }
        if let Some(lp) = self
            .spec
            .sequence_logprob_table
            .get(&(digest(prefix), digest(continuation)))
        {
            return Ok(*lp);
        }
        let mut ctx: Vec<&str> = prefix.split_whitespace().collect();
        let mut sum = 0.0;
        for t in continuation.split_whitespace() {
            sum += self.token_logprob(&ctx, t);
            ctx.push(t);
        }
        Ok(sum)
    }

    fn label_logprobs(
        &self,
        prompt: &PromptContext,
        rationale_prefix: Option<&str>,
    ) -> Result<LabelDistribution, BackendError> {
        let key = match rationale_prefix {
            Some(p) => format!("{}\n{p}", prompt.prompt_text),
            None => prompt.prompt_text.clone(),
        };
        let (la, lb) = match self.spec.label_logit_table.get(&digest(&key)) {
            Some(pair) => *pair,
            None => {
                // Deterministic fallback biased toward the preferred label
                // when the comparison is known to the preference table.
                let h = stable_hash(&["logit", &self.seed_str(), &key]);
                let spread = 0.5 + (h % 2000) as f64 / 1000.0;
                let winner = extract_prompt_sections(&prompt.prompt_text)
                    .map(|(x, a, b)| self.preferred_label(&x, &a, &b))
                    .unwrap_or(Label::A);
                match winner {
                    Label::A => (0.0, -spread),
                    Label::B => (-spread, 0.0),
                }
            }
        };
        Ok(LabelDistribution::from_logits(la, lb))
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}
