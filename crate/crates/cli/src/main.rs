mod config;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rrm_core::backend::{HttpBackend, MockBackend, SamplingParams, TextBackend};
use rrm_core::dataset::{read_jsonl, write_jsonl};
use rrm_core::denoise::DenoiseConfig;
use rrm_core::eval::{pairwise_accuracy, EvalConfig};
use rrm_core::proof::{ProofSelector, ProverConfig};
use rrm_core::ranking::Ranker;
use rrm_core::reward::{reference_reward, scaled_reward};
use rrm_core::selftrain::{Orchestrator, SelfTrainConfig, SelfTrainState};
use rrm_core::templates::TemplateSet;
use rrm_core::types::PreferenceRecord;
use std::path::PathBuf;
use std::process::ExitCode;

// stable exit codes: 2 bad args, 3 IO, 4 backend
const EXIT_BAD_ARGS: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_BACKEND: u8 = 4;

#[derive(Parser)]
#[command(name = "rrm", about = "Reward-reasoning pipeline CLI", version)]
struct Cli {
    /// Backend spec: "mock", "mock:<spec-file>", or "http".
    #[arg(long, global = true, default_value = "mock")]
    backend: String,

    /// Config file of key=value lines (CLI flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global cap on backend parallelism.
    #[arg(long, global = true)]
    max_concurrency: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize rationales for labeled, rationale-free records.
    SynthRationales {
        in_file: PathBuf,
        out_file: PathBuf,
        /// Candidate proofs sampled per record.
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.7)]
        temperature: f64,
        #[arg(long, default_value_t = 0.95)]
        top_p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one self-training iteration over an unlabeled batch.
    SelfTrain {
        state_dir: PathBuf,
        batch_file: PathBuf,
        /// Confidence threshold (mandatory; there is no safe default).
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 3)]
        votes: usize,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        retrain_hook: Option<String>,
    },
    /// Select the best candidate response (or rank them all).
    Rank {
        /// The input/question text.
        #[arg(long)]
        input: String,
        /// File with one candidate response per line.
        candidates_file: PathBuf,
        #[arg(long, default_value = "linear")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        vote_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pairwise accuracy of the judge over a labeled dataset.
    Eval {
        dataset_file: PathBuf,
        #[arg(long, default_value_t = 1)]
        vote_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reference-based scalar reward for one sampled response.
    Reward {
        #[arg(long)]
        input: String,
        #[arg(long)]
        response: String,
        #[arg(long)]
        reference: String,
        #[arg(long, default_value_t = 10.0)]
        gamma: f64,
        /// Skip the reasoning pass before reading label probabilities.
        #[arg(long)]
        no_reasoning: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify_error(&err))
        }
    }
}

fn classify_error(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<rrm_core::dataset::DatasetError>().is_some()
        {
            return EXIT_IO;
        }
        if cause.downcast_ref::<rrm_core::backend::BackendError>().is_some() {
            return EXIT_BACKEND;
        }
    }
    EXIT_BAD_ARGS
}

fn build_backend(cli: &Cli, file_cfg: &config::FileConfig) -> anyhow::Result<Box<dyn TextBackend>> {
    let spec = cli.backend.as_str();
    if spec == "mock" {
        return Ok(Box::new(MockBackend::new(Default::default())));
    }
    if let Some(path) = spec.strip_prefix("mock:") {
        let spec = config::load_mock_spec(std::path::Path::new(path))
            .with_context(|| format!("loading mock spec {path}"))?;
        return Ok(Box::new(MockBackend::new(spec)));
    }
    if spec == "http" {
        let mut cfg = file_cfg.http_config();
        if let Some(mc) = cli.max_concurrency {
            cfg.max_concurrency = mc;
        }
        let backend = HttpBackend::new(cfg).map_err(anyhow::Error::new)?;
        return Ok(Box::new(backend));
    }
    anyhow::bail!("unknown backend spec {spec:?} (use mock, mock:<file>, or http)");
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file_cfg = match &cli.config {
        Some(path) => config::FileConfig::load(path).context("reading config file")?,
        None => config::FileConfig::default(),
    };
    let backend = build_backend(&cli, &file_cfg)?;
    let templates = TemplateSet::default();

    match cli.command {
        Command::SynthRationales {
            in_file,
            out_file,
            k,
            temperature,
            top_p,
            seed,
        } => {
            let records: Vec<PreferenceRecord> =
                read_jsonl(&in_file).with_context(|| format!("reading {}", in_file.display()))?;
            let prover = ProverConfig {
                k,
                params: SamplingParams {
                    temperature,
                    top_p,
                    seed: Some(seed),
                    ..Default::default()
                },
                ..Default::default()
            };
            let selector = ProofSelector::new(&backend, &templates, prover);
            let mut out = Vec::new();
            let mut failures = 0usize;
            for (i, rec) in records.iter().enumerate() {
                match selector.synthesize_rationale(rec, Some(seed.wrapping_add(i as u64))) {
                    Ok(r) => out.push(r),
                    Err(e) => {
                        log::warn!("record {}: {e}", rec.id);
                        failures += 1;
                    }
                }
            }
            write_jsonl(&out_file, &out).context("writing output")?;
            println!("synthesized {} of {} records ({failures} failed)", out.len(), records.len());
            if failures > 0 {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SelfTrain {
            state_dir,
            batch_file,
            tau,
            votes,
            top_n,
            seed,
            retrain_hook,
        } => {
            if !(0.0..=1.0).contains(&tau) {
                anyhow::bail!("--tau must be in [0,1]");
            }
            std::fs::create_dir_all(&state_dir).context("creating state dir")?;
            let batch: Vec<PreferenceRecord> = read_jsonl(&batch_file)
                .with_context(|| format!("reading {}", batch_file.display()))?;
            let mut denoise = DenoiseConfig::new(votes, tau);
            denoise.top_n = top_n;
            let cfg = SelfTrainConfig {
                denoise,
                prover: ProverConfig::default(),
                vote_params: SamplingParams::default(),
                retrain_hook,
            };
            let state = SelfTrainState::load(&state_dir)
                .map_err(anyhow::Error::new)?
                .unwrap_or_else(|| SelfTrainState::new(&state_dir, seed));
            let orch = Orchestrator::new(&backend, &templates, cfg);
            println!("config digest: {}", orch.config().digest());
            let out = orch
                .run_iteration(&state, &state_dir, &batch)
                .map_err(anyhow::Error::new)?;
            let m = &out.manifest;
            println!(
                "iteration {}: input={} format_rejected={} vote_rejected={} confidence_rejected={} kept={}",
                m.iteration_index,
                m.n_input,
                m.n_format_rejected,
                m.n_vote_rejected,
                m.n_confidence_rejected,
                m.n_kept
            );
            println!("training file: {}", out.training_file.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Rank {
            input,
            candidates_file,
            mode,
            vote_k,
            seed,
        } => {
            let text = std::fs::read_to_string(&candidates_file)
                .with_context(|| format!("reading {}", candidates_file.display()))?;
            let candidates: Vec<String> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect();
            if candidates.is_empty() {
                eprintln!("error: no candidates in {}", candidates_file.display());
                return Ok(ExitCode::from(EXIT_BAD_ARGS));
            }
            let ranker = Ranker::new(&backend, &templates, seed);
            match mode.as_str() {
                "linear" => println!("{}", ranker.best_of_n_linear(&input, &candidates)?),
                "dnc" => println!("{}", ranker.best_of_n_dnc(&input, &candidates)?),
                "full" => {
                    for idx in ranker.full_ranking(&input, &candidates)? {
                        println!("{idx}");
                    }
                }
                "vote" => {
                    // voting applies to a single pair
                    if candidates.len() != 2 {
                        anyhow::bail!("--mode vote requires exactly 2 candidates");
                    }
                    let label = ranker.vote_at_k(&input, &candidates[0], &candidates[1], vote_k)?;
                    println!("{label}");
                }
                other => anyhow::bail!("unknown mode {other:?} (linear|dnc|full|vote)"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            dataset_file,
            vote_k,
            seed,
        } => {
            let records: Vec<PreferenceRecord> = read_jsonl(&dataset_file)
                .with_context(|| format!("reading {}", dataset_file.display()))?;
            if records.is_empty() {
                eprintln!("error: empty dataset");
                return Ok(ExitCode::from(EXIT_BAD_ARGS));
            }
            let report = pairwise_accuracy(
                &backend,
                &templates,
                &records,
                &EvalConfig { vote_k, seed },
            )
            .map_err(anyhow::Error::new)?;
            // ties/abstentions and errored evaluations count as incorrect
            println!("{}", serde_json::to_string(&report)?);
            eprintln!(
                "accuracy {:.4} over {} records ({} errors)",
                report.accuracy, report.n, report.n_errors
            );
            for (tag, stats) in &report.per_tag {
                eprintln!("  {tag}: {:.4} ({} records)", stats.accuracy(), stats.n);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Reward {
            input,
            response,
            reference,
            gamma,
            no_reasoning,
        } => {
            let raw = reference_reward(
                &backend,
                &templates,
                &input,
                &response,
                &reference,
                !no_reasoning,
            )?;
            println!("{raw}");
            println!("{}", scaled_reward(raw, gamma));
            Ok(ExitCode::SUCCESS)
        }
    }
}
