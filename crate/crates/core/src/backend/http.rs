//! Wire client for a chat-completions-compatible endpoint with token
//! logprobs.

use super::{
    BackendError, Completion, FinishReason, RetryPolicy, SamplingParams, TextBackend, with_retry,
};
use crate::types::{LabelDistribution, PromptContext};
use serde::Deserialize;
use serde_json::json;

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the credential.
    pub api_key_env: Option<String>,
    pub max_concurrency: usize,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            max_concurrency: 8,
            timeout_ms: 120_000,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Logprobs {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend { client, config })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn api_key(&self) -> Option<String> {
        self.config
            .api_key_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok())
    }

    fn post_chat(&self, body: serde_json::Value, idempotency_key: &str) -> Result<ChatResponse, BackendError> {
        let url = format!("{}/chat/completions", self.config.url.trim_end_matches('/'));
        let (result, attempts) = with_retry(&self.config.retry, || {
            let mut req = self
                .client
                .post(&url)
                .header("Idempotency-Key", idempotency_key)
                .json(&body);
            if let Some(key) = self.api_key() {
                req = req.bearer_auth(key);
            }
            let resp = req
                .send()
                .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
            match resp.status().as_u16() {
                200 => resp
                    .json::<ChatResponse>()
                    .map_err(|e| BackendError::BackendUnavailable(format!("bad response: {e}"))),
                429 => Err(BackendError::RateLimited),
                413 => Err(BackendError::ContextOverflow),
                code if code >= 500 => {
                    Err(BackendError::BackendUnavailable(format!("status {code}")))
                }
                code => Err(BackendError::BackendUnavailable(format!(
                    "unexpected status {code}"
                ))),
            }
        });
        if attempts > 1 {
            log::info!("chat request took {attempts} attempts");
        }
        result
    }

    fn request_body(
        &self,
        prompt: &PromptContext,
        params: &SamplingParams,
        assistant_prefix: Option<&str>,
        logprobs: bool,
        top_logprobs: Option<u32>,
    ) -> serde_json::Value {
        let mut messages = vec![json!({"role": "user", "content": prompt.prompt_text})];
        if let Some(prefix) = assistant_prefix {
            messages.push(json!({"role": "assistant", "content": prefix}));
        }
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "n": params.n_samples,
            "logprobs": logprobs,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        if let Some(k) = top_logprobs {
            body["top_logprobs"] = json!(k);
        }
        body
    }
}

fn idempotency_key(prompt: &PromptContext, params: &SamplingParams, tag: &str) -> String {
    let params_repr = format!(
        "{}:{}:{}:{}:{:?}",
        params.temperature, params.top_p, params.max_tokens, params.n_samples, params.seed
    );
    super::mock::digest(&format!("{tag}\u{1f}{}\u{1f}{params_repr}", prompt.prompt_text))
}

impl TextBackend for HttpBackend {
    fn generate(
        &self,
        prompt: &PromptContext,
        params: &SamplingParams,
    ) -> Result<Vec<Completion>, BackendError> {
        let body = self.request_body(prompt, params, None, true, None);
        let resp = self.post_chat(body, &idempotency_key(prompt, params, "gen"))?;
        let completions = resp
            .choices
            .into_iter()
            .map(|c| Completion {
                text: c.message.content.unwrap_or_default(),
                token_logprobs: c
                    .logprobs
                    .map(|lp| lp.content.into_iter().map(|t| (t.token, t.logprob)).collect())
                    .unwrap_or_default(),
                finish_reason: match c.finish_reason.as_deref() {
                    Some("stop") => FinishReason::Stop,
                    Some("length") => FinishReason::Length,
                    _ => FinishReason::Error,
                },
            })
            .collect();
        Ok(completions)
    }

    fn score_sequence(&self, _prefix: &str, continuation: &str) -> Result<f64, BackendError> {
        if continuation.is_empty() {
            return Err(BackendError::EmptyContinuation);
        }
        // Chat-completions endpoints cannot teacher-force an arbitrary
        // continuation; callers degrade per their own contract.
        Err(BackendError::ScoringUnsupported)
    }

    fn label_logprobs(
        &self,
        prompt: &PromptContext,
        rationale_prefix: Option<&str>,
    ) -> Result<LabelDistribution, BackendError> {
        let params = SamplingParams {
            temperature: 0.0,
            max_tokens: 1,
            n_samples: 1,
            ..Default::default()
        };
        let body = self.request_body(prompt, &params, rationale_prefix, true, Some(20));
        let resp = self.post_chat(body, &idempotency_key(prompt, &params, "label"))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::BackendUnavailable("no choices".into()))?;
        let first = choice
            .logprobs
            .and_then(|lp| lp.content.into_iter().next())
            .ok_or(BackendError::LabelTokensUnavailable)?;
        let mut logit_a = None;
        let mut logit_b = None;
        let mut candidates: Vec<(String, f64)> = first
            .top_logprobs
            .into_iter()
            .map(|t| (t.token, t.logprob))
            .collect();
        candidates.push((first.token, first.logprob));
        for (token, lp) in candidates {
            match token.trim() {
                "A" => logit_a.get_or_insert(lp),
                "B" => logit_b.get_or_insert(lp),
                _ => continue,
            };
        }
        match (logit_a, logit_b) {
            (None, None) => Err(BackendError::LabelTokensUnavailable),
            // A label absent from the returned top-logprobs is far below
            // the present one; floor it rather than fail.
            (a, b) => {
                let floor = a.unwrap_or(f64::NEG_INFINITY).min(b.unwrap_or(f64::NEG_INFINITY)) - 20.0;
                Ok(LabelDistribution::from_logits(
                    a.unwrap_or(floor),
                    b.unwrap_or(floor),
                ))
            }
        }
    }

    fn count_tokens(&self, text: &str) -> usize {
        // Whitespace approximation; tokenizer parity with the served model
        // is out of scope.
        text.split_whitespace().count()
    }
}
