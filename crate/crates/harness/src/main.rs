use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use perq_harness::config::{ExperimentConfig, ExperimentKind, Seeds};
use perq_harness::output::write_atomic;
use perq_harness::plot;
use perq_harness::runner::{output_dir, read_aggregate, run_experiment, RunOptions, OUT_DIR_VAR};
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiments with persistent Q-learning.
#[derive(Parser)]
#[command(name = "perq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Online training curves for tabular agents.
    Train(RunArgs),
    /// Synchronous learning error curves.
    Sync(RunArgs),
    /// Kemeny constant and entropy of persistent random policies.
    Kemeny(RunArgs),
    /// MountainCar visitation counts of random option policies.
    Heatmap(RunArgs),
    /// Replay-buffer training under a step budget.
    ReplayTrain(RunArgs),
    /// Renders plot.svg from the aggregate.csv of a finished run.
    Report {
        /// Run directory holding aggregate.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seeds: `N`, `a..b` or `a,b,c`.
    #[arg(long)]
    seeds: Option<Seeds>,
    /// Output root; the run is written to `<out>/<name>`.
    #[arg(long, env = OUT_DIR_VAR)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

fn run(kind: ExperimentKind, args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        bail!("{} is a {} config, not {kind}", args.config.display(), cfg.kind);
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
        cfg.validate()?;
    }
    let dir = output_dir(args.out.as_deref(), &cfg);
    let manifest = run_experiment(&cfg, &dir, RunOptions { jobs: args.jobs, svg: args.svg })?;
    println!("{}", dir.display());
    let failed = manifest.failed_cells();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see {}", manifest.cells.len(), dir.join("manifest.json").display());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(dir: PathBuf) -> anyhow::Result<ExitCode> {
    let rows = read_aggregate(&dir)?;
    let title = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
    let target = dir.join("plot.svg");
    write_atomic(&target, plot::line_chart(&title, "index", &rows).as_bytes()).with_context(|| format!("writing {}", target.display()))?;
    println!("{}", target.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run(ExperimentKind::Train, a),
        Command::Sync(a) => run(ExperimentKind::Sync, a),
        Command::Kemeny(a) => run(ExperimentKind::Kemeny, a),
        Command::Heatmap(a) => run(ExperimentKind::Heatmap, a),
        Command::ReplayTrain(a) => run(ExperimentKind::ReplayTrain, a),
        Command::Report { out } => report(out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
