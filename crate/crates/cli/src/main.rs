use std::env;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rwc_core::grouping::parse_rules;
use rwc_core::pipeline::{analyze_run, AnalysisOptions, Grouping};
use rwc_core::report::{aggregate_to_csv, parse_curves_csv, render_svg, series_to_csv, trend_to_json, PlotSpec, YScale};
use rwc_core::trainer::{train, TrainerConfig};
use rwc_core::{aggregate_runs, trend_report, NameFilter, Preset, RwcMode, Weighting, Window, WindowLength};

const THREADS_VAR: &str = "RWC_THREADS";

/// Layer-wise relative weight change: train, measure, aggregate, summarise, plot.
#[derive(Debug, Parser)]
#[command(name = "rwc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the desk-scale MLP and write one snapshot per epoch plus a manifest.
    TrainDemo(TrainDemoArgs),
    /// Per-layer (or per-group) RWC series for one run, as CSV.
    Analyze(AnalyzeArgs),
    /// Mean and sample standard deviation across several runs, as CSV.
    Aggregate(AggregateArgs),
    /// Window means, pairwise dominance and ordering of the curves in a CSV, as JSON.
    Trends(TrendsArgs),
    /// Line chart of the curves in a CSV, as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct TrainDemoArgs {
    /// Seed for data, initialisation and batch order [default: 0, or the config file's value]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of training epochs, at least 1 [default: 60, or the config file's value]
    #[arg(long)]
    epochs: Option<u64>,
    /// Run directory to create
    #[arg(long)]
    out: PathBuf,
    /// JSON trainer config; --seed and --epochs override its values [default: built-in desk config]
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectionArgs {
    /// RWC formulation: norm (L1 ratio) or element (mean elementwise ratio)
    #[arg(long, default_value = "norm")]
    mode: RwcMode,
    /// Glob selecting parameter names; `*` also matches dots
    #[arg(long, default_value = "*.weight")]
    filter: NameFilter,
    /// Built-in grouping: resnet18, vgg19 or alexnet [default: none, one series per layer]
    #[arg(long, conflicts_with = "rules")]
    preset: Option<Preset>,
    /// JSON file of group rules [default: none, one series per layer]
    #[arg(long)]
    rules: Option<PathBuf>,
    /// How layers combine into a group: unweighted or paramcount
    #[arg(long, default_value = "unweighted")]
    weighting: Weighting,
}

impl SelectionArgs {
    fn options(&self) -> Result<AnalysisOptions> {
        let grouping = match (&self.preset, &self.rules) {
            (Some(p), _) => Grouping::Preset(*p),
            (None, Some(path)) => {
                let text = read_text(path, "--rules")?;
                Grouping::Rules(parse_rules(&text).with_context(|| format!("invalid --rules {}", path.display()))?)
            }
            (None, None) => Grouping::PerLayer,
        };
        Ok(AnalysisOptions {
            mode: self.mode,
            filter: self.filter.clone(),
            grouping,
            weighting: self.weighting,
        })
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Run directory holding manifest.json and the snapshots
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Run directories, one per seed
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrendsArgs {
    /// Series or aggregate CSV
    #[arg(long)]
    input: PathBuf,
    /// Leading transitions to ignore
    #[arg(long, default_value_t = 0)]
    skip: usize,
    /// Transitions to average after the skip: a positive integer or `all`
    #[arg(long, default_value = "all")]
    window: WindowLength,
    /// Output JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Series or aggregate CSV
    #[arg(long)]
    input: PathBuf,
    /// Logarithmic y axis; every value must be positive [default: off]
    #[arg(long)]
    log_y: bool,
    /// Chart title
    #[arg(long, default_value = "Relative weight change")]
    title: String,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path, flag: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {flag} {}", path.display()))
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create directory for --out {}", path.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write --out {}", path.display()))
}

fn train_demo(args: &TrainDemoArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => TrainerConfig::from_json(&read_text(path, "--config")?)
            .with_context(|| format!("invalid --config {}", path.display()))?,
        None => TrainerConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        if epochs < 1 {
            bail!("invalid value for --epochs: epochs must be >= 1 (got {epochs})");
        }
        config.epochs = epochs;
    }
    train(&config, &args.out).with_context(|| format!("training into --out {} failed", args.out.display()))?;
    println!("{}", args.out.join(rwc_core::manifest::MANIFEST_FILE).display());
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let options = args.selection.options()?;
    let analysis = analyze_run(&args.run, &options).with_context(|| format!("cannot analyze --run {}", args.run.display()))?;
    let run_id = analysis.manifest.run_id.as_str();
    let csv = series_to_csv(analysis.series.values().map(|s| (run_id, s)));
    write_output(&args.out, &csv)
}

fn aggregate(args: &AggregateArgs) -> Result<()> {
    let options = args.selection.options()?;
    let aggregates = aggregate_runs(&args.runs, &options).context("aggregation failed")?;
    write_output(&args.out, &aggregate_to_csv(aggregates.values()))
}

fn trends(args: &TrendsArgs) -> Result<()> {
    let table = parse_curves_csv(&read_text(&args.input, "--input")?)
        .with_context(|| format!("cannot parse --input {}", args.input.display()))?;
    let window = Window {
        skip_initial: args.skip,
        length: args.window,
    };
    let report = trend_report(&table.curves, window).context("trend analysis failed")?;
    write_output(&args.out, &trend_to_json(&report))
}

fn plot(args: &PlotArgs) -> Result<()> {
    let table = parse_curves_csv(&read_text(&args.input, "--input")?)
        .with_context(|| format!("cannot parse --input {}", args.input.display()))?;
    let mut spec = PlotSpec::new(args.title.clone(), table.curves.into_iter().collect());
    if args.log_y {
        spec.y_scale = YScale::Log10;
    }
    let svg = render_svg(&spec).context("cannot render plot")?;
    write_output(&args.out, &svg)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = match raw.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => bail!("{THREADS_VAR} must be a positive integer, got `{raw}`"),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow!("cannot start {threads} worker threads: {e}"))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::TrainDemo(args) => train_demo(args),
        Command::Analyze(args) => analyze(args),
        Command::Aggregate(args) => aggregate(args),
        Command::Trends(args) => trends(args),
        Command::Plot(args) => plot(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
