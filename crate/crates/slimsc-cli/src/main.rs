//! Command-line driver: dataset loading, run configuration, and
//! orchestration across questions.
//!
//! Exit codes: 0 success, 1 configuration error, 2 backend error,
//! 3 run finished with partial failures.

use std::collections::HashSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use slimsc::backend::http::{HttpBackend, HttpBackendConfig};
use slimsc::backend::mock::{MockBackend, TraceSet};
use slimsc::backend::GenerationBackend;
use slimsc::chain::{AnswerFormat, RunConfig, SamplingParams, Strategy};
use slimsc::dataset::{load_dataset, Dataset, DatasetName, PromptTemplate};
use slimsc::defaults::{self, ModelFamily};
use slimsc::embedder::{
    EmbeddingProvider, HttpEmbedder, HttpEmbedderConfig, MockEmbedder,
};
use slimsc::metrics::ReplayConfig;
use slimsc::runner::{self, RunnerOptions};

#[derive(Parser)]
#[command(name = "slimsc", version, about = "Self-consistency scaling with similarity-based chain pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a strategy over a dataset and emit reports.
    Run(RunArgs),
    /// Offline analyses over a finished run directory.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Strategy: cot, sc, esc, ccot-sc, slim-sc-rp, slim-sc-dp,
    /// global-rp, least-sim-p.
    #[arg(long)]
    strategy: Strategy,

    /// Dataset name: gpqa-diamond, aime-2024, aqua-rat, custom.
    #[arg(long)]
    dataset: DatasetName,

    /// Path to the dataset JSONL file.
    #[arg(long)]
    data: PathBuf,

    /// Answer format for custom datasets: boxed-integer or
    /// multiple-choice-letter.
    #[arg(long)]
    answer_format: Option<String>,

    /// Prompt template file overriding the built-in template.
    #[arg(long)]
    template_file: Option<PathBuf>,

    /// Number of chains N (default: tuned per model family and dataset).
    #[arg(long)]
    n: Option<u32>,

    /// Similarity threshold; values above 1.0 disable pruning.
    #[arg(long)]
    tau_sim: Option<f64>,

    /// Analysis steps to wait before pruning may fire.
    #[arg(long)]
    delay_steps: Option<u64>,

    /// ESC window size W (default: max(2, ceil(N / 8))).
    #[arg(long)]
    window: Option<u32>,

    /// Analysis-step interval in milliseconds (live backends).
    #[arg(long, default_value_t = defaults::DEFAULT_STEP_INTERVAL_MS)]
    step_interval_ms: u64,

    /// Extra stop words appended to the default list.
    #[arg(long = "stop-word")]
    stop_words: Vec<String>,

    /// Served model name (selects tuned defaults for N and tau).
    #[arg(long, default_value = "mock")]
    model: String,

    /// OpenAI-compatible streaming completions endpoint
    /// (env: SLIMSC_BACKEND_URL).
    #[arg(long, env = "SLIMSC_BACKEND_URL")]
    backend_url: Option<String>,

    /// Prometheus metrics endpoint of the serving engine for KV-cache
    /// sampling (env: SLIMSC_METRICS_URL).
    #[arg(long, env = "SLIMSC_METRICS_URL")]
    metrics_url: Option<String>,

    /// OpenAI-compatible embeddings endpoint (env: SLIMSC_EMBED_URL).
    #[arg(long, env = "SLIMSC_EMBED_URL")]
    embed_url: Option<String>,

    /// Embedding model name.
    #[arg(long, default_value = defaults::DEFAULT_EMBED_MODEL)]
    embed_model: String,

    /// Embedding dimension.
    #[arg(long, default_value_t = defaults::DEFAULT_EMBED_DIM)]
    embed_dim: usize,

    /// API key for backend and embedder (env: SLIMSC_API_KEY).
    #[arg(long, env = "SLIMSC_API_KEY")]
    api_key: Option<String>,

    /// Scripted trace file; replaces the live backend with the
    /// deterministic mock.
    #[arg(long)]
    mock_trace: Option<PathBuf>,

    /// KV-cache capacity (tokens) for the mock's usage proxy.
    #[arg(long, default_value_t = 1_000_000)]
    mock_kv_capacity: u64,

    /// Base RNG seed; run r uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,

    /// Comma-separated question ids to run (default: all).
    #[arg(long, value_delimiter = ',')]
    questions: Vec<String>,

    /// Independent repetitions; each writes to run_<i>/ under --out-dir.
    #[arg(long, default_value_t = 3)]
    runs: u32,

    /// Dump per-thought embeddings to the sidecar for offline analyses.
    #[arg(long)]
    dump_embeddings: bool,

    #[arg(long, default_value_t = 0.6)]
    temperature: f64,

    #[arg(long, default_value_t = 0.95)]
    top_p: f64,

    #[arg(long, default_value_t = 32_768)]
    max_tokens: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory produced by `slimsc run`.
    #[arg(long)]
    run_dir: PathBuf,

    /// Dataset name (for ground truths and answer format).
    #[arg(long)]
    dataset: DatasetName,

    /// Path to the dataset JSONL file.
    #[arg(long)]
    data: PathBuf,

    /// Answer format for custom datasets.
    #[arg(long)]
    answer_format: Option<String>,

    /// Similarity thresholds to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = [0.95, 0.98])]
    thresholds: Vec<f64>,

    /// Tokens per analysis step for the replay clock.
    #[arg(long, default_value_t = defaults::TOKENS_PER_REPLAY_STEP)]
    tokens_per_step: u64,

    /// Replay pruning delay in steps.
    #[arg(long, default_value_t = defaults::DEFAULT_DELAY_STEPS)]
    delay_steps: u64,
}

fn parse_answer_format(s: &str) -> anyhow::Result<AnswerFormat> {
    match s.to_ascii_lowercase().as_str() {
        "boxed-integer" | "boxed" => Ok(AnswerFormat::BoxedInteger),
        "multiple-choice-letter" | "letter" | "mc" => Ok(AnswerFormat::MultipleChoiceLetter),
        other => bail!("unknown answer format '{other}'"),
    }
}

fn load_dataset_arg(
    name: DatasetName,
    data: &std::path::Path,
    answer_format: Option<&str>,
    template_file: Option<&std::path::Path>,
) -> anyhow::Result<Dataset> {
    let custom_format = answer_format.map(parse_answer_format).transpose()?;
    let mut dataset = load_dataset(data, name, custom_format)
        .with_context(|| format!("loading dataset from {}", data.display()))?;
    if let Some(path) = template_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading template {}", path.display()))?;
        dataset.template = PromptTemplate::from_text(&text);
    }
    Ok(dataset)
}

fn build_config(args: &RunArgs, dataset: &Dataset, run_index: u32) -> anyhow::Result<RunConfig> {
    let family = ModelFamily::from_model_name(&args.model);
    let n_chains = args
        .n
        .unwrap_or_else(|| defaults::default_n_chains(family, dataset.name));
    let tau_sim = args
        .tau_sim
        .unwrap_or_else(|| defaults::default_tau_sim(args.strategy, family, dataset.name));
    let mut stop_words = defaults::default_stop_words();
    stop_words.extend(args.stop_words.iter().cloned());
    let config = RunConfig {
        strategy: args.strategy,
        n_chains,
        tau_sim,
        delay_steps: args.delay_steps.unwrap_or(defaults::DEFAULT_DELAY_STEPS),
        step_interval_ms: args.step_interval_ms,
        stop_words,
        esc_window: args.window,
        sampling: SamplingParams {
            temperature: args.temperature,
            top_p: args.top_p,
            max_tokens: args.max_tokens,
        },
        seed: args.seed + run_index as u64,
        ..RunConfig::default()
    };
    config.validated().map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))
}

fn build_backend(args: &RunArgs) -> anyhow::Result<Box<dyn GenerationBackend>> {
    if let Some(trace_path) = &args.mock_trace {
        let traces = TraceSet::load(trace_path)
            .with_context(|| format!("loading trace {}", trace_path.display()))?;
        return Ok(Box::new(
            MockBackend::new(traces).with_kv_capacity(args.mock_kv_capacity),
        ));
    }
    let Some(url) = &args.backend_url else {
        bail!("either --backend-url or --mock-trace is required");
    };
    let mut config = HttpBackendConfig::new(url.clone(), args.model.clone());
    config.api_key = args.api_key.clone();
    config.metrics_url = args.metrics_url.clone();
    let backend = HttpBackend::new(config).context("constructing HTTP backend")?;
    backend
        .probe()
        .context("backend unreachable; aborting before the run starts")?;
    Ok(Box::new(backend))
}

fn build_embedder(args: &RunArgs, run_seed: u64) -> anyhow::Result<Option<Box<dyn EmbeddingProvider>>> {
    if !args.strategy.needs_embeddings() {
        return Ok(None);
    }
    if let Some(url) = &args.embed_url {
        let mut config = HttpEmbedderConfig::new(url.clone());
        config.model_name = args.embed_model.clone();
        config.dimension = args.embed_dim;
        config.api_key = args.api_key.clone();
        return Ok(Some(Box::new(HttpEmbedder::new(config))));
    }
    if args.mock_trace.is_some() {
        // Scripted runs pair with the deterministic mock embedder.
        return Ok(Some(Box::new(MockEmbedder::new(run_seed, args.embed_dim))));
    }
    bail!("strategy {:?} needs --embed-url (or --mock-trace for the mock embedder)", args.strategy);
}

/// Errors that should exit with code 2 rather than 1.
fn is_backend_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.downcast_ref::<slimsc::backend::BackendError>().is_some()
            || cause.to_string().contains("backend unreachable")
    })
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let dataset = load_dataset_arg(
        args.dataset,
        &args.data,
        args.answer_format.as_deref(),
        args.template_file.as_deref(),
    )?;
    let backend = build_backend(&args)?;
    let options = RunnerOptions {
        dump_embeddings: args.dump_embeddings,
        question_filter: if args.questions.is_empty() {
            None
        } else {
            Some(args.questions.iter().cloned().collect::<HashSet<_>>())
        },
    };

    let mut any_failures = false;
    for run_index in 0..args.runs {
        let config = build_config(&args, &dataset, run_index)?;
        let embedder = build_embedder(&args, config.seed)?;
        let out_dir = if args.runs == 1 {
            args.out_dir.clone()
        } else {
            args.out_dir.join(format!("run_{run_index}"))
        };
        let outcome = runner::run(
            &config,
            &dataset,
            backend.as_ref(),
            embedder.as_deref(),
            &out_dir,
            &options,
        )?;
        let report = &outcome.report;
        println!(
            "run {} [{}]: {} questions ({} new, {} resumed), accuracy {}, mean latency {:.3}s, mean tokens {:.1}, prunes {}",
            run_index,
            config.strategy.as_str(),
            report.n_questions,
            outcome.executed,
            outcome.resumed,
            report
                .accuracy
                .map(|a| format!("{:.1}%", a * 100.0))
                .unwrap_or_else(|| "n/a".into()),
            report.mean_latency_s,
            report.mean_completion_tokens,
            report.total_prune_events,
        );
        println!("  report: {}", out_dir.join("report.json").display());
        for (question, error) in &outcome.failures {
            eprintln!("  failed question {question}: {error}");
            any_failures = true;
        }
    }
    Ok(if any_failures {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<ExitCode> {
    let dataset = load_dataset_arg(args.dataset, &args.data, args.answer_format.as_deref(), None)?;
    let replay = ReplayConfig {
        tokens_per_step: args.tokens_per_step,
        delay_steps: args.delay_steps,
    };
    let (breakdowns, cdf) = runner::analyze_run(&args.run_dir, &dataset, &args.thresholds, replay)?;
    for b in &breakdowns {
        match b.proportions {
            Some((cc, ii, ci)) => println!(
                "threshold {:.3}: {} pairs  CC {:.3}  II {:.3}  CI {:.3}",
                b.threshold, b.pair_count, cc, ii, ci
            ),
            None => println!("threshold {:.3}: no similar pairs", b.threshold),
        }
    }
    if !cdf.has_correct() && !cdf.has_incorrect() {
        println!("token CDF: no voting chains recorded");
    }
    println!(
        "wrote {} and {}",
        args.run_dir.join("pairs_by_threshold.csv").display(),
        args.run_dir.join("token_cdf.csv").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_backend_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
