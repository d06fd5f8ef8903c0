//! Executes the (series, seed) cells of an experiment and writes the run
//! directory.
//!
//! Every experiment kind has a `*_cells` function returning in-memory cell
//! results; [`run_experiment`] runs the same functions and serializes them.

use crate::aggregate::{aggregate_runs, mean_band, welch_greater};
use crate::config::{Algorithm, ExperimentConfig, ExperimentKind, SamplingConfig, SyncModeConfig};
use crate::output::{AggregateRow, CellEntry, CellStatus, Manifest, RunDir, AGGREGATE, MANIFEST, RAW_DIR};
use crate::plot;
use anyhow::{anyhow, Context};
use perq_core::agents::{
    greedy_success_rate, synchronous_train, train_msa_q, train_perq, train_q_learning, Hyperparams, RunRecord, SyncCurves, SyncMode,
};
use perq_core::analysis::{kemeny_sweep, uniform_action_policy, visitation_heatmap, with_episodic_restart, Heatmap, KemenyRow, PersistenceSampling};
use perq_core::environments::{build_named, DiscretizedMountainCar, EnvironmentName, MountainCarParams};
use perq_core::mdp::{Environment, MdpEnv, OptionQTable, TabularMdp};
use perq_core::operators::{value_iteration_options, DEFAULT_MAX_ITERS};
use perq_core::replay::train_replay_agent;
use perq_core::stream_rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Confidence level of every aggregate band.
pub const CONFIDENCE: f64 = 0.95;
/// Environment variable naming the default output root.
pub const OUT_DIR_VAR: &str = "PERQ_OUT_DIR";

/// Stream of a seed that draws randomly generated maps.
const MAP_STREAM: u64 = 0x6d61_7073;
/// Offset between a training seed and its evaluation seed.
const EVAL_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone)]
pub struct Cell<T> {
    pub series: String,
    pub seed: u64,
    pub wall_clock_secs: f64,
    pub outcome: Result<T, String>,
}

impl<T> Cell<T> {
    pub fn ok(&self) -> Option<&T> {
        self.outcome.as_ref().ok()
    }
}

/// Runs `f` for every key on a pool of `jobs` threads. Errors and panics
/// are recorded per cell; results keep the order of `keys`.
pub fn run_cells<T, F>(keys: Vec<(String, u64)>, jobs: usize, f: F) -> anyhow::Result<Vec<Cell<T>>>
where
    T: Send,
    F: Fn(&str, u64) -> anyhow::Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(|| {
        keys.into_par_iter()
            .map(|(series, seed)| {
                let started = Instant::now();
                let outcome = match catch_unwind(AssertUnwindSafe(|| f(&series, seed))) {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(e)) => Err(format!("{e:#}")),
                    Err(panic) => Err(panic_message(panic.as_ref())),
                };
                if let Err(e) = &outcome {
                    log::warn!("cell {series} seed {seed} failed: {e}");
                }
                Cell { series, seed, wall_clock_secs: started.elapsed().as_secs_f64(), outcome }
            })
            .collect()
    }))
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    let text = panic.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| panic.downcast_ref::<String>().cloned());
    format!("panic: {}", text.unwrap_or_else(|| "unknown payload".into()))
}

fn keys(series: &[String], seeds: &[u64]) -> Vec<(String, u64)> {
    series.iter().flat_map(|s| seeds.iter().map(move |&seed| (s.clone(), seed))).collect()
}

/// The environment of one cell.
pub enum Task {
    Grid(TabularMdp),
    Car(MountainCarParams),
}

impl Task {
    /// Randomly generated maps are drawn from a dedicated stream of `seed`.
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Self> {
        Ok(match cfg.environment_name()? {
            EnvironmentName::MountainCar => Task::Car(cfg.mountain_car_params()),
            name => Task::Grid(build_named(name, &cfg.env_options(), &mut stream_rng(seed, MAP_STREAM))?),
        })
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Task::Grid(mdp) => mdp.gamma(),
            Task::Car(p) => p.gamma,
        }
    }

    pub fn mdp(&self) -> anyhow::Result<&TabularMdp> {
        match self {
            Task::Grid(mdp) => Ok(mdp),
            Task::Car(_) => Err(anyhow!("this experiment needs a tabular environment")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainCell {
    pub record: RunRecord,
    pub greedy_success: f64,
    pub tail_mean_return: f64,
}

fn train_on<E: Environment>(
    mut make: impl FnMut() -> anyhow::Result<E>,
    algorithm: Algorithm,
    hyper: &Hyperparams,
    seed: u64,
    tail: usize,
    eval_episodes: usize,
) -> anyhow::Result<TrainCell> {
    let train = match algorithm {
        Algorithm::Perq => train_perq::<E>,
        Algorithm::Qlearning => train_q_learning::<E>,
        Algorithm::Msa => train_msa_q::<E>,
    };
    let (q, record) = train(&mut make()?, hyper, seed)?;
    let greedy_success = evaluate(&mut make()?, &q, hyper, eval_episodes, seed)?;
    let tail_mean_return = record.tail_mean_return(tail);
    Ok(TrainCell { record, greedy_success, tail_mean_return })
}

fn evaluate<E: Environment>(env: &mut E, q: &OptionQTable, hyper: &Hyperparams, episodes: usize, seed: u64) -> anyhow::Result<f64> {
    Ok(greedy_success_rate(env, q, hyper.gamma, hyper.step_cap, episodes, seed.wrapping_add(EVAL_SEED_OFFSET))?)
}

fn algorithm_named(name: &str) -> Algorithm {
    [Algorithm::Perq, Algorithm::Qlearning, Algorithm::Msa].into_iter().find(|a| a.as_str() == name).expect("series names come from the config")
}

/// One cell per (algorithm, seed); Q-learning always runs with `K_max = 1`.
pub fn train_cells(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Vec<Cell<TrainCell>>> {
    let series: Vec<String> = cfg.algorithms.iter().map(|a| a.as_str().to_string()).collect();
    run_cells(keys(&series, &cfg.seeds.to_vec()), jobs, |name, seed| {
        let algorithm = algorithm_named(name);
        let task = Task::build(cfg, seed)?;
        let k_max = if algorithm == Algorithm::Qlearning { 1 } else { cfg.agent.k_max };
        let hyper = cfg.agent.hyperparams(task.gamma(), k_max);
        let (tail, eval) = (cfg.agent.tail, cfg.agent.eval_episodes);
        match &task {
            Task::Grid(mdp) => train_on(|| Ok(MdpEnv::new(mdp)), algorithm, &hyper, seed, tail, eval),
            Task::Car(p) => train_on(|| Ok(DiscretizedMountainCar::new(*p)?), algorithm, &hyper, seed, tail, eval),
        }
    })
}

fn sync_mode(name: &str) -> SyncModeConfig {
    if name == "perq" {
        SyncModeConfig::Perq
    } else {
        SyncModeConfig::Vanilla
    }
}

fn sync_mode_name(mode: SyncModeConfig) -> &'static str {
    match mode {
        SyncModeConfig::Perq => "perq",
        SyncModeConfig::Vanilla => "vanilla",
    }
}

/// One cell per (mode, seed). PerQ is measured against `Q*_K` with
/// `K = sync.k_max`, vanilla against `Q*`. Random maps are drawn once, from
/// the first seed, so that all cells share the reference tables.
pub fn sync_cells(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Vec<Cell<SyncCurves>>> {
    let seeds = cfg.seeds.to_vec();
    let task = Task::build(cfg, seeds[0])?;
    let mdp = task.mdp()?;
    let reference = |k: usize| -> anyhow::Result<OptionQTable> { Ok(value_iteration_options(mdp, k, cfg.sync.reference_tol, DEFAULT_MAX_ITERS)?.q) };
    let perq_ref = reference(cfg.sync.k_max)?;
    let vanilla_ref = reference(1)?;
    let series: Vec<String> = cfg.sync.modes.iter().map(|&m| sync_mode_name(m).to_string()).collect();
    run_cells(keys(&series, &seeds), jobs, |name, seed| {
        let (reference, mode) = match sync_mode(name) {
            SyncModeConfig::Perq => (&perq_ref, SyncMode::PerQ),
            SyncModeConfig::Vanilla => (&vanilla_ref, SyncMode::Vanilla),
        };
        Ok(synchronous_train(mdp, reference, cfg.sync.alpha, cfg.sync.iterations, mode, seed, None)?.1)
    })
}

/// One cell per seed: the Kemeny sweep of the uniform policy. Episodic
/// environments restart from the start distribution on termination.
pub fn kemeny_cells(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Vec<Cell<Vec<KemenyRow>>>> {
    run_cells(keys(&["kemeny".to_string()], &cfg.seeds.to_vec()), jobs, |_, seed| {
        let task = Task::build(cfg, seed)?;
        let mut mdp = task.mdp()?.clone();
        if mdp.terminal_mask().iter().any(|&t| t) {
            mdp = with_episodic_restart(&mdp)?;
        }
        let pi = uniform_action_policy(&mdp);
        Ok(kemeny_sweep(&mdp, &pi, &cfg.kemeny.k_values, cfg.kemeny.horizon, cfg.kemeny.normalization.into())?)
    })
}

fn heatmap_series(k: usize) -> String {
    format!("k{k}")
}

/// One cell per (K, seed) of random-option MountainCar rollouts.
pub fn heatmap_cells(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Vec<Cell<Heatmap>>> {
    let params = cfg.mountain_car_params();
    let series: Vec<String> = cfg.heatmap.k_values.iter().map(|&k| heatmap_series(k)).collect();
    run_cells(keys(&series, &cfg.seeds.to_vec()), jobs, |name, seed| {
        let k: usize = name[1..].parse()?;
        let sampling = match cfg.heatmap.sampling {
            SamplingConfig::Uniform => PersistenceSampling::UniformUpTo(k),
            SamplingConfig::Fixed => PersistenceSampling::Fixed(k),
        };
        Ok(visitation_heatmap(&params, sampling, cfg.heatmap.episodes, seed)?)
    })
}

#[derive(Debug, Clone)]
pub struct ReplayCell {
    pub record: RunRecord,
    /// Fraction of greedy evaluation episodes that reach the goal.
    pub eval_success: f64,
}

/// One cell per (variant, seed) of replay training under a step budget.
pub fn replay_cells(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<Vec<Cell<ReplayCell>>> {
    let variants = &cfg.replay.variants;
    let series: Vec<String> = variants.iter().map(|v| v.label()).collect();
    run_cells(keys(&series, &cfg.seeds.to_vec()), jobs, |name, seed| {
        let variant = variants.iter().find(|v| v.label() == name).expect("series names come from the config");
        let task = Task::build(cfg, seed)?;
        let hyper = cfg.agent.hyperparams(task.gamma(), variant.k_max);
        let replay = cfg.replay.replay_config(variant.tails);
        let eval = cfg.replay.eval_episodes;
        let (record, eval_success) = match &task {
            Task::Grid(mdp) => {
                let (q, record) = train_replay_agent(&mut MdpEnv::new(mdp), &hyper, &replay, seed)?;
                (record, evaluate(&mut MdpEnv::new(mdp), &q, &hyper, eval, seed)?)
            }
            Task::Car(p) => {
                let (q, record) = train_replay_agent(&mut DiscretizedMountainCar::new(*p)?, &hyper, &replay, seed)?;
                (record, evaluate(&mut DiscretizedMountainCar::new(*p)?, &q, &hyper, eval, seed)?)
            }
        };
        Ok(ReplayCell { record, eval_success })
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub jobs: usize,
    /// Also render SVG plots.
    pub svg: bool,
}

/// Where a run goes: the CLI `--out` root, else the config's `output`,
/// else `$PERQ_OUT_DIR`, else `runs`; then the config name below it.
pub fn output_dir(cli_root: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    let root = cli_root
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(&cfg.name)
}

/// What the serialization of one kind produces besides raw files.
struct Written {
    cells: Vec<CellEntry>,
    aggregate: Vec<AggregateRow>,
}

fn entry<T>(cell: &Cell<T>, metrics: BTreeMap<String, f64>) -> CellEntry {
    CellEntry {
        series: cell.series.clone(),
        seed: cell.seed,
        status: if cell.outcome.is_ok() { CellStatus::Ok } else { CellStatus::Error },
        wall_clock_secs: cell.wall_clock_secs,
        metrics,
        error: cell.outcome.as_ref().err().cloned(),
    }
}

fn raw_path(stem: &str, seed: u64) -> String {
    format!("{RAW_DIR}/{stem}_seed{seed}.csv")
}

fn band_rows(series: &str, runs: &[Vec<f64>], first_index: usize) -> anyhow::Result<Vec<AggregateRow>> {
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    Ok(aggregate_runs(runs, CONFIDENCE)?
        .into_iter()
        .enumerate()
        .map(|(i, b)| AggregateRow { series: series.to_string(), index: first_index + i, n: b.n, mean: b.mean, ci_low: b.ci_low, ci_high: b.ci_high })
        .collect())
}

fn scalar_row(series: &str, index: usize, samples: &[f64]) -> anyhow::Result<Option<AggregateRow>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let b = mean_band(samples, CONFIDENCE)?;
    Ok(Some(AggregateRow { series: series.to_string(), index, n: b.n, mean: b.mean, ci_low: b.ci_low, ci_high: b.ci_high }))
}

fn ok_values<'a, T, U>(cells: &'a [Cell<T>], series: &str, f: impl Fn(&'a T) -> U) -> Vec<U> {
    cells.iter().filter(|c| c.series == series).filter_map(|c| c.ok()).map(f).collect()
}

fn series_names<T>(cells: &[Cell<T>]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for c in cells {
        if !names.contains(&c.series) {
            names.push(c.series.clone());
        }
    }
    names
}

#[derive(serde::Serialize)]
struct EpisodeRow {
    episode: usize,
    #[serde(rename = "return")]
    ret: f64,
    steps: usize,
    reached_goal: bool,
}

fn write_episodes(run: &RunDir, path: &str, record: &RunRecord) -> anyhow::Result<()> {
    run.write_csv(
        path,
        (0..record.episodes()).map(|e| EpisodeRow { episode: e, ret: record.returns[e], steps: record.steps[e], reached_goal: record.reached_goal[e] }),
    )
}

#[derive(serde::Serialize)]
struct ComparisonRow {
    series_a: String,
    series_b: String,
    metric: &'static str,
    mean_a: f64,
    mean_b: f64,
    t: f64,
    df: f64,
    p_value: f64,
}

fn write_train(cfg: &ExperimentConfig, run: &RunDir, cells: &[Cell<TrainCell>], svg: bool) -> anyhow::Result<Written> {
    let mut entries = Vec::new();
    for c in cells {
        let mut metrics = BTreeMap::new();
        if let Some(t) = c.ok() {
            write_episodes(run, &raw_path(&c.series, c.seed), &t.record)?;
            metrics.insert("tail_mean_return".into(), t.tail_mean_return);
            metrics.insert("greedy_success".into(), t.greedy_success);
        }
        entries.push(entry(c, metrics));
    }
    let mut aggregate = Vec::new();
    let names = series_names(cells);
    for name in &names {
        aggregate.extend(band_rows(name, &ok_values(cells, name, |t| t.record.returns.clone()), 0)?);
    }
    for name in &names {
        aggregate.extend(scalar_row(&format!("{name}:tail_mean_return"), 0, &ok_values(cells, name, |t| t.tail_mean_return))?);
        aggregate.extend(scalar_row(&format!("{name}:greedy_success"), 0, &ok_values(cells, name, |t| t.greedy_success))?);
    }
    if names.len() >= 2 && cfg.seeds.to_vec().len() >= 2 {
        let first = &names[0];
        let a = ok_values(cells, first, |t| t.tail_mean_return);
        let mut rows = Vec::new();
        for other in &names[1..] {
            let b = ok_values(cells, other, |t| t.tail_mean_return);
            if let Ok(w) = welch_greater(&a, &b) {
                rows.push(ComparisonRow {
                    series_a: first.clone(),
                    series_b: other.clone(),
                    metric: "tail_mean_return",
                    mean_a: w.mean_a,
                    mean_b: w.mean_b,
                    t: w.t,
                    df: w.df,
                    p_value: w.p_value,
                });
            }
        }
        run.write_csv("comparisons.csv", rows)?;
    }
    if svg {
        let curves: Vec<AggregateRow> = aggregate.iter().filter(|r| !r.series.contains(':')).cloned().collect();
        run.write("returns.svg", plot::line_chart(&cfg.name, "episode", &curves).as_bytes())?;
    }
    Ok(Written { cells: entries, aggregate })
}

fn write_sync(cfg: &ExperimentConfig, run: &RunDir, cells: &[Cell<SyncCurves>], svg: bool) -> anyhow::Result<Written> {
    let mut entries = Vec::new();
    for c in cells {
        let mut metrics = BTreeMap::new();
        if let Some(curves) = c.ok() {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["iteration".to_string(), "linf".to_string()];
            header.extend((1..=curves.per_k.len()).map(|k| format!("err_k{k}")));
            w.write_record(&header)?;
            for t in 0..curves.linf.len() {
                let mut record = vec![t.to_string(), format!("{:?}", curves.linf[t])];
                record.extend(curves.per_k.iter().map(|e| format!("{:?}", e[t])));
                w.write_record(&record)?;
            }
            run.write(&raw_path(&c.series, c.seed), &w.into_inner().map_err(|e| anyhow!("flushing CSV: {e}"))?)?;
            metrics.insert("final_linf".into(), *curves.linf.last().expect("initial error is recorded"));
        }
        entries.push(entry(c, metrics));
    }
    let mut aggregate = Vec::new();
    for name in series_names(cells) {
        aggregate.extend(band_rows(&format!("{name}:linf"), &ok_values(cells, &name, |c| c.linf.clone()), 0)?);
        let k_max = cells.iter().filter(|c| c.series == name).find_map(|c| c.ok()).map_or(0, |c| c.per_k.len());
        for k in 1..=k_max {
            aggregate.extend(band_rows(&format!("{name}:k{k}"), &ok_values(cells, &name, |c| c.per_k[k - 1].clone()), 0)?);
        }
    }
    if svg {
        let linf: Vec<AggregateRow> = aggregate.iter().filter(|r| r.series.ends_with(":linf")).cloned().collect();
        run.write("linf.svg", plot::line_chart(&cfg.name, "iteration", &linf).as_bytes())?;
    }
    Ok(Written { cells: entries, aggregate })
}

#[derive(serde::Serialize)]
struct KemenyCsvRow<'a> {
    env: &'a str,
    k_max: usize,
    horizon: usize,
    kemeny: f64,
    kemeny_normalized: f64,
    entropy: f64,
}

fn write_kemeny(cfg: &ExperimentConfig, run: &RunDir, cells: &[Cell<Vec<KemenyRow>>], svg: bool) -> anyhow::Result<Written> {
    let mut entries = Vec::new();
    for c in cells {
        let mut metrics = BTreeMap::new();
        if let Some(rows) = c.ok() {
            run.write_csv(
                &raw_path(&c.series, c.seed),
                rows.iter().map(|r| KemenyCsvRow {
                    env: &cfg.environment,
                    k_max: r.k_max,
                    horizon: r.horizon,
                    kemeny: r.kemeny,
                    kemeny_normalized: r.kemeny_normalized,
                    entropy: r.entropy,
                }),
            )?;
            if let Some(best) = rows.iter().min_by(|a, b| a.kemeny.total_cmp(&b.kemeny)) {
                metrics.insert("argmin_k_max".into(), best.k_max as f64);
            }
        }
        entries.push(entry(c, metrics));
    }
    let mut aggregate = Vec::new();
    let ok: Vec<&Vec<KemenyRow>> = cells.iter().filter_map(|c| c.ok()).collect();
    type Column = fn(&KemenyRow) -> f64;
    let pick: [(&str, Column); 3] = [("kemeny", |r| r.kemeny), ("kemeny_normalized", |r| r.kemeny_normalized), ("entropy", |r| r.entropy)];
    for (name, f) in pick {
        for (i, &k) in cfg.kemeny.k_values.iter().enumerate() {
            let samples: Vec<f64> = ok.iter().map(|rows| f(&rows[i])).collect();
            aggregate.extend(scalar_row(name, k, &samples)?);
        }
    }
    if svg {
        let curve: Vec<AggregateRow> = aggregate.iter().filter(|r| r.series == "kemeny_normalized").cloned().collect();
        run.write("kemeny.svg", plot::line_chart(&cfg.name, "K_max", &curve).as_bytes())?;
    }
    Ok(Written { cells: entries, aggregate })
}

fn heatmap_csv(map: &Heatmap) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["position_bin".to_string()];
    header.extend((0..map.velocity_bins).map(|v| format!("v{v}")));
    w.write_record(&header)?;
    for p in 0..map.position_bins {
        let mut record = vec![p.to_string()];
        record.extend((0..map.velocity_bins).map(|v| map.count(p, v).to_string()));
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| anyhow!("flushing CSV: {e}"))
}

/// Fraction of grid cells visited at least once.
pub fn coverage(map: &Heatmap) -> f64 {
    map.counts.iter().filter(|&&c| c > 0).count() as f64 / map.counts.len() as f64
}

fn write_heatmap(cfg: &ExperimentConfig, run: &RunDir, cells: &[Cell<Heatmap>], svg: bool) -> anyhow::Result<Written> {
    let mut entries = Vec::new();
    for c in cells {
        let mut metrics = BTreeMap::new();
        if let Some(map) = c.ok() {
            run.write(&raw_path(&format!("heatmap_{}", c.series), c.seed), &heatmap_csv(map)?)?;
            metrics.insert("goal_fraction".into(), map.goal_fraction());
            metrics.insert("coverage".into(), coverage(map));
            metrics.insert("total_steps".into(), map.total_steps as f64);
        }
        entries.push(entry(c, metrics));
    }
    let mut aggregate = Vec::new();
    for &k in &cfg.heatmap.k_values {
        let name = heatmap_series(k);
        aggregate.extend(scalar_row("goal_fraction", k, &ok_values(cells, &name, Heatmap::goal_fraction))?);
        aggregate.extend(scalar_row("coverage", k, &ok_values(cells, &name, coverage))?);
    }
    if svg {
        for &k in &cfg.heatmap.k_values {
            let name = heatmap_series(k);
            if let Some(map) = cells.iter().find(|c| c.series == name).and_then(|c| c.ok()) {
                let title = format!("{} K={k} seed {}", cfg.name, cells.iter().find(|c| c.series == name).map_or(0, |c| c.seed));
                run.write(&format!("heatmap_{name}.svg"), plot::heatmap(&title, map.position_bins, map.velocity_bins, &map.counts).as_bytes())?;
            }
        }
    }
    Ok(Written { cells: entries, aggregate })
}

fn write_replay(cfg: &ExperimentConfig, run: &RunDir, cells: &[Cell<ReplayCell>], svg: bool) -> anyhow::Result<Written> {
    let mut entries = Vec::new();
    for c in cells {
        let mut metrics = BTreeMap::new();
        if let Some(r) = c.ok() {
            write_episodes(run, &raw_path(&c.series, c.seed), &r.record)?;
            metrics.insert("eval_success".into(), r.eval_success);
        }
        entries.push(entry(c, metrics));
    }
    let mut aggregate = Vec::new();
    for name in series_names(cells) {
        aggregate.extend(scalar_row(&name, 0, &ok_values(cells, &name, |r| r.eval_success))?);
    }
    if svg {
        let points: Vec<AggregateRow> =
            aggregate.iter().enumerate().map(|(i, r)| AggregateRow { index: i, ..r.clone() }).collect();
        run.write("eval_success.svg", plot::line_chart(&cfg.name, "variant", &points).as_bytes())?;
    }
    Ok(Written { cells: entries, aggregate })
}

/// Runs every cell of `cfg` and writes raw CSVs, `aggregate.csv` and
/// `manifest.json` into `dir`. Failed cells are recorded in the manifest.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, opts: RunOptions) -> anyhow::Result<Manifest> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix_secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let run = RunDir::create(dir).with_context(|| format!("creating {}", dir.display()))?;
    let jobs = if opts.jobs == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { opts.jobs };
    log::info!("{} ({}) on {}: {} seeds, {jobs} jobs", cfg.name, cfg.kind, cfg.environment, cfg.seeds.to_vec().len());
    let written = match cfg.kind {
        ExperimentKind::Train => write_train(cfg, &run, &train_cells(cfg, jobs)?, opts.svg)?,
        ExperimentKind::Sync => write_sync(cfg, &run, &sync_cells(cfg, jobs)?, opts.svg)?,
        ExperimentKind::Kemeny => write_kemeny(cfg, &run, &kemeny_cells(cfg, jobs)?, opts.svg)?,
        ExperimentKind::Heatmap => write_heatmap(cfg, &run, &heatmap_cells(cfg, jobs)?, opts.svg)?,
        ExperimentKind::ReplayTrain => write_replay(cfg, &run, &replay_cells(cfg, jobs)?, opts.svg)?,
    };
    run.write_csv(AGGREGATE, &written.aggregate)?;
    let manifest = Manifest {
        name: cfg.name.clone(),
        kind: cfg.kind.to_string(),
        config_hash: cfg.hash(),
        config: serde_json::from_str(&cfg.canonical_json())?,
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: perq_core::VERSION.to_string(),
        started_unix_secs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        jobs,
        cells: written.cells,
        files: run.files(),
    };
    run.write(MANIFEST, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads `aggregate.csv` of a finished run.
pub fn read_aggregate(dir: &Path) -> anyhow::Result<Vec<AggregateRow>> {
    let path = dir.join(AGGREGATE);
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}
