//! Self-training orchestration: pseudo-label an unlabeled batch, denoise,
//! synthesize rationales for the survivors, merge into the accumulated
//! set, and emit training-ready files plus an audit manifest.
//!
//! Model retraining happens outside this process; an optional hook command
//! is invoked with the emitted training file path.

use crate::backend::{stable_hash, SamplingParams, TextBackend};
use crate::dataset::{read_jsonl, write_jsonl, DatasetError, TrainingExample};
use crate::denoise::{denoise_batch, DenoiseConfig, PseudoLabeledRecord, StageCounts};
use crate::proof::{ProofSelectionError, ProofSelector, ProverConfig};
use crate::rationale::{parse_rationale, rationale_to_proof, validate_rationale_rules};
use crate::templates::TemplateSet;
use crate::types::{IterationManifest, PreferenceRecord, RationaleBlock};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelfTrainError {
    #[error("state directory missing: {0}")]
    StatePathMissing(PathBuf),
    #[error("write failure: {0}")]
    WriteFailure(#[from] DatasetError),
    #[error("record {0} has no rationale")]
    MissingRationale(String),
    #[error(transparent)]
    Proof(#[from] ProofSelectionError),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SelfTrainState {
    pub iteration_index: u64,
    pub accumulated_records_path: PathBuf,
    pub manifests: Vec<IterationManifest>,
    pub rng_seed: u64,
}

impl SelfTrainState {
    pub fn new(state_dir: &Path, rng_seed: u64) -> Self {
        SelfTrainState {
            iteration_index: 0,
            accumulated_records_path: state_dir.join("accumulated.jsonl"),
            manifests: Vec::new(),
            rng_seed,
        }
    }

    pub fn load(state_dir: &Path) -> Result<Option<Self>, SelfTrainError> {
        let path = state_dir.join("state.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(DatasetError::Io)?;
        let state = serde_json::from_str(&text)
            .map_err(|e| DatasetError::Malformed(0, e))?;
        Ok(Some(state))
    }

    fn save(&self, state_dir: &Path) -> Result<(), SelfTrainError> {
        let path = state_dir.join("state.json");
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        std::fs::write(&tmp, text).map_err(DatasetError::Io)?;
        std::fs::rename(&tmp, &path).map_err(DatasetError::Io)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SelfTrainConfig {
    pub denoise: DenoiseConfig,
    pub prover: ProverConfig,
    /// Sampling used for the per-run pseudo-label predictions.
    pub vote_params: SamplingParams,
    /// Command run with the emitted training file path appended.
    pub retrain_hook: Option<String>,
}

impl SelfTrainConfig {
    /// Stable digest of every value that affects outputs.
    pub fn digest(&self) -> String {
        let repr = format!(
            "m={};tau={};max_tokens={};top_n={:?};k={};eps={};prover_t={};prover_p={};vote_t={};vote_p={}",
            self.denoise.vote_runs,
            self.denoise.confidence_threshold,
            self.denoise.rule_config.max_tokens,
            self.denoise.top_n,
            self.prover.k,
            self.prover.epsilon,
            self.prover.params.temperature,
            self.prover.params.top_p,
            self.vote_params.temperature,
            self.vote_params.top_p,
        );
        crate::backend::digest(&repr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingFormat {
    /// Prompt plus think/answer target for reward-model tuning.
    RewardSft,
    /// Prover prompt plus proof-form target.
    ProverSft,
}

/// Derive a per-record, per-run sampling seed from the run seed.
pub fn derive_seed(run_seed: u64, record_id: &str, run_index: u64) -> u64 {
    stable_hash(&[
        "seed",
        &run_seed.to_string(),
        record_id,
        &run_index.to_string(),
    ])
}

pub struct Orchestrator<'a, B: TextBackend> {
    backend: &'a B,
    templates: &'a TemplateSet,
    config: SelfTrainConfig,
}

#[derive(Debug)]
pub struct IterationOutput {
    pub state: SelfTrainState,
    pub manifest: IterationManifest,
    pub training_file: PathBuf,
}

impl<'a, B: TextBackend> Orchestrator<'a, B> {
    pub fn new(backend: &'a B, templates: &'a TemplateSet, config: SelfTrainConfig) -> Self {
        Orchestrator {
            backend,
            templates,
            config,
        }
    }

    pub fn config(&self) -> &SelfTrainConfig {
        &self.config
    }

    /// Predict labels for each unlabeled record over m inference runs.
    /// A run whose output fails the format rules marks the record with the
    /// run's violations; a run that errors at the backend is skipped with
    /// a warning.
    pub fn pseudo_label(
        &self,
        batch: &[PreferenceRecord],
        vote_runs: usize,
        run_seed: u64,
    ) -> Vec<PseudoLabeledRecord> {
        let mut out = Vec::with_capacity(batch.len());
        for rec in batch {
            let mut votes = Vec::new();
            let mut dists = Vec::new();
            let mut violations = Vec::new();
            let prompt = match self.templates.render_reward_prompt(
                &rec.input_text,
                &rec.response_a,
                &rec.response_b,
                true,
            ) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("record {}: cannot render prompt ({e}); marking invalid", rec.id);
                    out.push(PseudoLabeledRecord {
                        record: rec.clone(),
                        votes,
                        dists,
                        rule_violations: vec![crate::rationale::RuleViolation::MissingThink],
                    });
                    continue;
                }
            };
            for run in 0..vote_runs {
                let params = SamplingParams {
                    n_samples: 1,
                    seed: Some(derive_seed(run_seed, &rec.id, run as u64)),
                    ..self.config.vote_params.clone()
                };
                let completion = match self.backend.generate(&prompt, &params) {
                    Ok(mut c) if !c.is_empty() => c.remove(0),
                    Ok(_) => continue,
                    Err(e) => {
                        log::warn!("record {} run {run}: backend error {e}", rec.id);
                        continue;
                    }
                };
                let parsed = parse_rationale(&completion.text).ok();
                let report = validate_rationale_rules(
                    &completion.text,
                    parsed.as_ref(),
                    self.backend.count_tokens(&completion.text),
                    &self.config.denoise.rule_config,
                );
                if !report.is_empty() || parsed.is_none() {
                    violations.extend(report);
                    continue;
                }
                let rationale = parsed.unwrap();
                match self.backend.label_logprobs(&prompt, Some(&completion.text)) {
                    Ok(d) => {
                        votes.push(rationale.answer);
                        dists.push(d);
                    }
                    Err(e) => {
                        log::warn!("record {} run {run}: logprobs failed ({e})", rec.id);
                    }
                }
            }
            out.push(PseudoLabeledRecord {
                record: rec.clone(),
                votes,
                dists,
                rule_violations: violations,
            });
        }
        out
    }

    /// One full self-training iteration over an unlabeled batch.
    pub fn run_iteration(
        &self,
        state: &SelfTrainState,
        state_dir: &Path,
        batch: &[PreferenceRecord],
    ) -> Result<IterationOutput, SelfTrainError> {
        if !state_dir.is_dir() {
            return Err(SelfTrainError::StatePathMissing(state_dir.to_path_buf()));
        }
        let iteration = state.iteration_index;
        let iter_seed = stable_hash(&["iter", &state.rng_seed.to_string(), &iteration.to_string()]);

        let pseudo = self.pseudo_label(batch, self.config.denoise.vote_runs, iter_seed);
        let outcome = denoise_batch(pseudo, &self.config.denoise);
        let mut counts = outcome.counts;

        let selector = ProofSelector::new(self.backend, self.templates, self.config.prover.clone());
        let mut synthesized = Vec::new();
        for kept in outcome.kept {
            let seed = derive_seed(iter_seed, &kept.record.id, u64::MAX);
            match selector.synthesize_rationale(&kept.record, Some(seed)) {
                Ok(rec) => synthesized.push(rec),
                Err(ProofSelectionError::AllCandidatesUnparseable) => {
                    // Synthesis failures count as format rejections.
                    counts.n_format_rejected += 1;
                    counts.n_kept -= 1;
                }
                Err(e) => return Err(e.into()),
            }
        }

        let accumulated = self.merge_accumulated(&state.accumulated_records_path, &synthesized)?;
        write_jsonl(&state.accumulated_records_path, &accumulated)?;

        let training_file = state_dir.join(format!("train_reward_iter{iteration:04}.jsonl"));
        emit_training_file(
            self.templates,
            &synthesized,
            &training_file,
            TrainingFormat::RewardSft,
        )?;

        let manifest = self.build_manifest(iteration, counts, state.rng_seed);
        let mut new_state = state.clone();
        new_state.iteration_index += 1;
        new_state.manifests.push(manifest.clone());
        write_jsonl(&state_dir.join("manifests.jsonl"), &new_state.manifests)?;
        new_state.save(state_dir)?;

        if let Some(hook) = &self.config.retrain_hook {
            run_retrain_hook(hook, &training_file);
        }

        Ok(IterationOutput {
            state: new_state,
            manifest,
            training_file,
        })
    }

    fn merge_accumulated(
        &self,
        path: &Path,
        new_records: &[PreferenceRecord],
    ) -> Result<Vec<PreferenceRecord>, SelfTrainError> {
        let mut by_id: BTreeMap<String, PreferenceRecord> = BTreeMap::new();
        if path.exists() {
            for rec in read_jsonl::<PreferenceRecord>(path)? {
                by_id.insert(rec.id.clone(), rec);
            }
        }
        // new over old
        for rec in new_records {
            by_id.insert(rec.id.clone(), rec.clone());
        }
        Ok(by_id.into_values().collect())
    }

    fn build_manifest(&self, iteration: u64, counts: StageCounts, seed: u64) -> IterationManifest {
        let mut extensions = BTreeMap::new();
        if counts.n_topn_rejected > 0 {
            extensions.insert("topn_rejected".to_string(), counts.n_topn_rejected);
        }
        IterationManifest {
            iteration_index: iteration,
            n_input: counts.n_input,
            n_format_rejected: counts.n_format_rejected,
            n_vote_rejected: counts.n_vote_rejected,
            n_confidence_rejected: counts.n_confidence_rejected,
            n_kept: counts.n_kept,
            config_digest: self.config.digest(),
            seed,
            extensions,
        }
    }
}

fn run_retrain_hook(hook: &str, training_file: &Path) {
    let mut parts = hook.split_whitespace();
    let Some(program) = parts.next() else {
        return;
    };
    let status = std::process::Command::new(program)
        .args(parts)
        .arg(training_file)
        .status();
    match status {
        Ok(s) if s.success() => log::info!("retrain hook succeeded"),
        Ok(s) => log::warn!("retrain hook exited with {s}"),
        Err(e) => log::warn!("retrain hook failed to start: {e}"),
    }
}

/// The reply-format string a reward model is trained to emit.
pub fn rationale_target(r: &RationaleBlock) -> String {
    format!(
        "<think>Feedback: {}\nComparison: {}\nConclusion: {}</think><answer>{}</answer>",
        r.feedback, r.comparison, r.conclusion, r.answer
    )
}

/// Write one prompt/target pair per record; returns lines written.
pub fn emit_training_file(
    templates: &TemplateSet,
    records: &[PreferenceRecord],
    path: &Path,
    format: TrainingFormat,
) -> Result<usize, SelfTrainError> {
    let mut examples = Vec::with_capacity(records.len());
    for rec in records {
        let (Some(label), Some(rationale)) = (rec.label, rec.rationale.as_ref()) else {
            return Err(SelfTrainError::MissingRationale(rec.id.clone()));
        };
        let example = match format {
            TrainingFormat::RewardSft => TrainingExample {
                prompt: templates
                    .render_reward_prompt(&rec.input_text, &rec.response_a, &rec.response_b, true)
                    .map_err(|_| SelfTrainError::MissingRationale(rec.id.clone()))?
                    .prompt_text,
                target: rationale_target(rationale),
            },
            TrainingFormat::ProverSft => TrainingExample {
                prompt: templates
                    .render_prover_prompt(&rec.input_text, &rec.response_a, &rec.response_b, label)
                    .map_err(|_| SelfTrainError::MissingRationale(rec.id.clone()))?
                    .prompt_text,
                target: rationale_to_proof(rationale),
            },
        };
        examples.push(example);
    }
    Ok(write_jsonl(path, &examples)?)
}
