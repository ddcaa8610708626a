use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bubblesim_core::catalog::{generate_fixture, load_catalog, BranchingShape, Catalog};
use bubblesim_core::metrics::{
    demographic_ecdf, whole_run_values, write_ecdf_csv, write_metrics_csv, write_summary_csv,
    DemographicFeature, IterationMetrics, MetricWindow, MetricsConfig, ValueKind, WatchedMode,
};
use bubblesim_core::simulation::{
    load_run_dir, run_sweep, run_to_dir, Backend, IterationSummary, SimulationConfig, SweepAxis,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

const AFTER_HELP: &str = "\
Environment variables (LLM backend only; never written to run directories):
  BUBBLESIM_API_KEY         bearer token for the chat-completion endpoint
                            (the variable name can be changed with llm.api_key_env)
  BUBBLESIM_LLM_BASE_URL    overrides llm.base_url, e.g. https://api.example.com/v1
  BUBBLESIM_LLM_MODEL       overrides llm.model
  RUST_LOG                  log filter, e.g. info or bubblesim_core=debug

Exit codes: 0 success, 1 usage or input error, 2 runtime failure.";

#[derive(Parser)]
#[command(
    name = "bubblesim",
    version,
    about = "Filter-bubble simulation of a short-video recommender"
)]
#[command(after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation into a fresh run directory.
    Run(RunArgs),
    /// Run one simulation per (axis value, seed).
    Sweep(SweepArgs),
    /// Recompute metrics from a run directory's log.
    Metrics(MetricsArgs),
    /// Write a synthetic catalog as JSONL.
    Fixture(FixtureArgs),
    /// Export per-demographic-group ECDFs of whole-run diversity.
    Ecdf(EcdfArgs),
}

#[derive(Args)]
struct SimArgs {
    /// JSON config; fields left out take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog JSONL.
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's agent backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Transcript JSONL for the transcript backend.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// One of cscmr, strategy, motivation, model.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Run directory.
    #[arg(long = "run")]
    run_dir: PathBuf,
    /// Metric window; defaults to the run's own setting.
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    /// Which records count as watched; defaults to the run's own setting.
    #[arg(long, value_enum)]
    watched: Option<WatchedArg>,
    /// Output CSV (default: <run>/metrics.recomputed.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 4000)]
    n_items: usize,
    /// Branching shape "roots,avg_l2_per_root,avg_l3_per_l2" or "short-video"
    /// (21 roots, 55 level-2 and 232 level-3 categories).
    #[arg(long, default_value = "short-video")]
    shape: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EcdfArgs {
    #[arg(long = "run")]
    run_dir: PathBuf,
    /// age, gender, city_level, phone_price or all.
    #[arg(long, default_value = "all")]
    feature: String,
    #[arg(long, value_enum, default_value = "entropy")]
    value: ValueArg,
    /// Category level 1-3.
    #[arg(long, default_value_t = 1)]
    level: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Rule,
    Llm,
    Transcript,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    PerIteration,
    Cumulative,
}

#[derive(Clone, Copy, ValueEnum)]
enum WatchedArg {
    Positive,
    AllShown,
}

#[derive(Clone, Copy, ValueEnum)]
enum ValueArg {
    Entropy,
    Coverage,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Fixture(args) => cmd_fixture(args),
        Command::Ecdf(args) => cmd_ecdf(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_inputs(sim: &SimArgs) -> Outcome<(SimulationConfig, Catalog)> {
    let mut config = match &sim.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .usage()?;
            SimulationConfig::from_json(&text)
                .with_context(|| format!("invalid config {}", path.display()))
                .usage()?
        }
        None => SimulationConfig::default(),
    };
    if let Some(b) = sim.backend {
        config.backend = match b {
            BackendArg::Rule => Backend::Rule,
            BackendArg::Llm => Backend::Llm,
            BackendArg::Transcript => Backend::Transcript,
        };
    }
    if let Some(t) = &sim.transcript {
        config.transcript = Some(t.clone());
    }
    config.validate().context("invalid config").usage()?;
    let catalog = load_catalog(&sim.catalog)
        .with_context(|| format!("loading catalog {}", sim.catalog.display()))
        .usage()?;
    Ok((config, catalog))
}

fn print_header() {
    println!(
        "{:>9}  {:>15}  {:>17}  {:>9}",
        "iteration", "mean_entropy_l1", "mean_satisfaction", "bubble_l1"
    );
}

fn print_summary(s: &IterationSummary) {
    println!(
        "{:>9}  {:>15.4}  {:>17.4}  {:>9.3}",
        s.iteration, s.mean_entropy[0], s.mean_satisfaction, s.bubble_proportion[0]
    );
}

fn ensure_clean(dir: &Path) -> Outcome {
    if dir.exists() {
        let mut entries = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))
            .usage()?;
        if entries.next().is_some() {
            return Err(Failure::Usage(anyhow!(
                "output directory {} is not empty",
                dir.display()
            )));
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Outcome {
    let (config, catalog) = load_inputs(&args.sim)?;
    ensure_clean(&args.sim.out)?;
    print_header();
    run_to_dir(
        &config,
        &catalog,
        &args.sim.out,
        &mut |m: &IterationMetrics| {
            print_summary(&IterationSummary::from(m));
        },
    )
    .context("simulation failed")
    .runtime()?;
    println!("run directory: {}", args.sim.out.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Outcome {
    let axis: SweepAxis = args.axis.parse().usage()?;
    let (config, catalog) = load_inputs(&args.sim)?;
    for value in &args.values {
        axis.apply(&config, value).usage()?;
    }
    ensure_clean(&args.sim.out)?;
    fs::create_dir_all(&args.sim.out)
        .with_context(|| format!("creating {}", args.sim.out.display()))
        .runtime()?;
    let report = run_sweep(
        &config,
        axis,
        &args.values,
        &args.seeds,
        &catalog,
        Some(&args.sim.out),
    )
    .usage()?;

    let summary = args.sim.out.join("sweep_summary.csv");
    report.write_summary_csv(create(&summary)?).runtime()?;
    let aggregate = args.sim.out.join("sweep_aggregate.csv");
    report.write_aggregate_csv(create(&aggregate)?).runtime()?;

    println!(
        "{:>12}  {:>6}  {:>15}  {:>17}",
        "value", "seed", "final_entropy_l1", "final_satisfaction"
    );
    for run in &report.runs {
        match &run.outcome {
            Ok(s) => {
                let last = s.last().expect("at least one iteration");
                println!(
                    "{:>12}  {:>6}  {:>15.4}  {:>17.4}",
                    run.value, run.seed, last.mean_entropy[0], last.mean_satisfaction
                );
            }
            Err(e) => println!("{:>12}  {:>6}  failed: {e}", run.value, run.seed),
        }
    }
    println!("sweep summary: {}", summary.display());
    let failed = report.failures().count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!(
            "{failed} of {} runs failed",
            report.runs.len()
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .runtime()
}

fn window_name(w: MetricWindow) -> &'static str {
    match w {
        MetricWindow::PerIteration => "per_iteration",
        MetricWindow::Cumulative => "cumulative",
    }
}

fn watched_name(w: WatchedMode) -> &'static str {
    match w {
        WatchedMode::Positive => "positive",
        WatchedMode::AllShown => "all_shown",
    }
}

fn cmd_metrics(args: MetricsArgs) -> Outcome {
    let run = load_run_dir(&args.run_dir)
        .with_context(|| format!("loading run {}", args.run_dir.display()))
        .runtime()?;
    let original = run.config.metrics;
    let config = MetricsConfig {
        window: match args.window {
            Some(WindowArg::PerIteration) => MetricWindow::PerIteration,
            Some(WindowArg::Cumulative) => MetricWindow::Cumulative,
            None => original.window,
        },
        watched: match args.watched {
            Some(WatchedArg::Positive) => WatchedMode::Positive,
            Some(WatchedArg::AllShown) => WatchedMode::AllShown,
            None => original.watched,
        },
    };
    let metrics = run.metrics(config).runtime()?;
    let out = args
        .out
        .unwrap_or_else(|| args.run_dir.join("metrics.recomputed.csv"));

    let mut bytes = Vec::new();
    if config != original {
        writeln!(
            bytes,
            "# window={} watched={} (run used window={} watched={})",
            window_name(config.window),
            watched_name(config.watched),
            window_name(original.window),
            watched_name(original.watched)
        )
        .expect("write to memory");
    }
    write_metrics_csv(&metrics, &mut bytes).runtime()?;
    fs::write(&out, &bytes)
        .with_context(|| format!("writing {}", out.display()))
        .runtime()?;

    if config == original {
        let in_run = fs::read(args.run_dir.join("metrics.csv"))
            .context("reading in-run metrics.csv")
            .runtime()?;
        if in_run != bytes {
            return Err(Failure::Runtime(anyhow!(
                "recomputed metrics differ from {}",
                args.run_dir.join("metrics.csv").display()
            )));
        }
        println!("recomputed metrics identical to in-run metrics.csv");
    } else {
        let summary = out.with_file_name("summary.recomputed.csv");
        write_summary_csv(&metrics, create(&summary)?).runtime()?;
        println!(
            "metrics recomputed with window={} watched={} (differs from the run's settings)",
            window_name(config.window),
            watched_name(config.watched)
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_fixture(args: FixtureArgs) -> Outcome {
    let shape: BranchingShape = args.shape.parse().usage()?;
    let catalog = generate_fixture(args.seed, args.n_items, shape).usage()?;
    catalog.save(&args.out).runtime()?;
    let stats = catalog.stats();
    println!(
        "wrote {} items to {} (categories per level {:?})",
        catalog.len(),
        args.out.display(),
        stats.unique_counts
    );
    Ok(())
}

fn cmd_ecdf(args: EcdfArgs) -> Outcome {
    let features: Vec<DemographicFeature> = if args.feature == "all" {
        DemographicFeature::ALL.to_vec()
    } else {
        vec![args.feature.parse().usage()?]
    };
    if !(1..=3).contains(&args.level) {
        return Err(Failure::Usage(anyhow!("level must be 1, 2 or 3")));
    }
    let run = load_run_dir(&args.run_dir)
        .with_context(|| format!("loading run {}", args.run_dir.display()))
        .runtime()?;
    let kind = match args.value {
        ValueArg::Entropy => ValueKind::Entropy,
        ValueArg::Coverage => ValueKind::Coverage,
    };
    let values = whole_run_values(
        &run.user_ids(),
        &run.catalog,
        &run.records,
        args.level,
        kind,
        run.config.metrics.watched,
    )
    .runtime()?;
    let mut bytes = Vec::new();
    for (i, feature) in features.into_iter().enumerate() {
        let curves = demographic_ecdf(&run.profiles, &values, feature).runtime()?;
        let mut chunk = Vec::new();
        write_ecdf_csv(feature, &curves, &mut chunk).runtime()?;
        // Keep one header row when several features share the file.
        let body = if i == 0 {
            &chunk[..]
        } else {
            let start = chunk
                .iter()
                .position(|&b| b == b'\n')
                .map_or(chunk.len(), |p| p + 1);
            &chunk[start..]
        };
        bytes.extend_from_slice(body);
    }
    fs::write(&args.out, bytes)
        .with_context(|| format!("writing {}", args.out.display()))
        .runtime()?;
    println!("wrote {}", args.out.display());
    Ok(())
}
