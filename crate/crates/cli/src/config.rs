//! Config-file handling: key=value settings for the HTTP backend and a
//! JSON on-disk format for mock backend specs.

use anyhow::Context;
use rrm_core::backend::{HttpBackendConfig, MockSpec};
use rrm_core::types::Label;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Flat key=value settings. Lines starting with '#' are comments.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", lineno + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// HTTP backend settings with file values layered over the defaults.
    pub fn http_config(&self) -> HttpBackendConfig {
        let mut cfg = HttpBackendConfig::default();
        if let Some(v) = self.get("http.url") {
            cfg.url = v.to_string();
        }
        if let Some(v) = self.get("http.model") {
            cfg.model = v.to_string();
        }
        if let Some(v) = self.get("http.api_key_env") {
            cfg.api_key_env = Some(v.to_string());
        }
        if let Some(v) = self.get("http.max_concurrency").and_then(|v| v.parse().ok()) {
            cfg.max_concurrency = v;
        }
        if let Some(v) = self.get("http.timeout_ms").and_then(|v| v.parse().ok()) {
            cfg.timeout_ms = v;
        }
        cfg
    }
}

// Serde-friendly mirror of MockSpec for the on-disk JSON format.
#[derive(Debug, Default, Deserialize)]
struct MockSpecFile {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    preferences: Vec<PreferenceEntry>,
    #[serde(default)]
    canned: Vec<CannedEntry>,
    #[serde(default)]
    label_logits: Vec<LabelLogitEntry>,
    #[serde(default)]
    sequence_logprobs: Vec<SequenceLogprobEntry>,
}

#[derive(Debug, Deserialize)]
struct PreferenceEntry {
    input: String,
    response_a: String,
    response_b: String,
    label: Label,
}

#[derive(Debug, Deserialize)]
struct CannedEntry {
    prompt: String,
    generations: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct LabelLogitEntry {
    prompt: String,
    logit_a: f64,
    logit_b: f64,
}

#[derive(Debug, Deserialize)]
struct SequenceLogprobEntry {
    prefix: String,
    continuation: String,
    logprob: f64,
}

pub fn load_mock_spec(path: &Path) -> anyhow::Result<MockSpec> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: MockSpecFile = serde_json::from_str(&text).context("parsing mock spec JSON")?;
    let mut spec = MockSpec {
        default_logit_noise_seed: file.seed,
        ..Default::default()
    };
    for p in file.preferences {
        spec = spec.with_preference(&p.input, &p.response_a, &p.response_b, p.label);
    }
    for c in file.canned {
        spec = spec.with_canned(&c.prompt, c.generations);
    }
    for l in file.label_logits {
        spec = spec.with_label_logits(&l.prompt, l.logit_a, l.logit_b);
    }
    for s in file.sequence_logprobs {
        spec = spec.with_sequence_logprob(&s.prefix, &s.continuation, s.logprob);
    }
    Ok(spec)
}
