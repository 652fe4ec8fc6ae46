//! Experiment specs, single runs, the benchmark grid and the identity
//! verification suite.

mod spec;
mod trace;
pub mod verify;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use spec::{DataSource, ExperimentSpec, Strategy, StrategyOverride, DESK_SPEC};
pub use trace::{parse_trace_csv, trace_csv, write_trace_files, TraceRow, TRACE_HEADER};

use crate::data::{load_csv, synth_gmm, Dataset};
use crate::diagnostics::{aggregate_strategy, export_bench, BenchResult};
use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, GmmParams, RepairConfig};
use crate::samplers::{split_rng, BatchSpec};
use crate::solvers::{
    batch_em_run, ceil_sqrt, gspider_run, online_em_run, spider_strategy, RunConfig, RunTrace, StepSchedule,
    StreamPurpose,
};
use crate::stats::StatVector;

/// Loads or generates the dataset named by the spec.
pub fn load_dataset(spec: &ExperimentSpec) -> Result<Dataset> {
    match &spec.data {
        DataSource::Csv { path, has_header } => load_csv(path, *has_header),
        DataSource::Synth { g, d, n, separation, seed } => Ok(synth_gmm(*g, *d, *n, *separation, *seed)?.0),
    }
}

pub fn build_model(spec: &ExperimentSpec, data: Dataset) -> Result<GaussianMixture> {
    let repair = RepairConfig {
        covariance_floor: spec.covariance_floor,
        ..RepairConfig::default()
    };
    GaussianMixture::with_repair(data, spec.components, repair)
}

/// `θ_init` and `Ŝ_init = s̄(θ_init)` of a replication, from its own stream.
/// Every strategy of the same replication starts from the same point.
pub fn initial_point(model: &GaussianMixture, seed: u64, replication: u64) -> Result<(GmmParams, StatVector)> {
    let mut rng = split_rng(seed, (replication << 8) | StreamPurpose::Init as u64);
    let theta = model.init_params(&mut rng)?;
    let s = model.initial_statistic(&theta)?;
    Ok((theta, s))
}

/// The solver configuration a spec implies for one strategy.
pub fn run_config(spec: &ExperimentSpec, strategy: &Strategy, n: usize, seed: u64, replication: u64) -> Result<RunConfig> {
    let b = spec.batch.unwrap_or_else(|| ceil_sqrt(n));
    let (inner, reset) = spec.step_for(strategy);
    let mut cfg = RunConfig::for_n(n);
    cfg.batch = if spec.replacement {
        BatchSpec::with_replacement(b)
    } else {
        BatchSpec::without_replacement(b)
    };
    cfg.k_out = spec.k_out;
    cfg.steps = StepSchedule { inner, reset };
    cfg.warmstart_epochs = spec.warmstart_epochs;
    cfg.warmstart_gamma = spec.warmstart_gamma;
    cfg.seed = seed;
    cfg.replication = replication;
    cfg.termination = spec.termination;
    if let Strategy::Spider(name) = strategy {
        let (schedule, policy) = spider_strategy(name, n, b)?;
        cfg.schedule = schedule;
        cfg.reset = policy;
    }
    cfg.validate(n)?;
    Ok(cfg)
}

/// Runs one strategy on one replication.
pub fn run_strategy(
    model: &GaussianMixture,
    spec: &ExperimentSpec,
    strategy: &Strategy,
    seed: u64,
    replication: u64,
) -> Result<RunTrace<GmmParams>> {
    use crate::model::ModelSpec;
    let n = model.n_examples();
    let cfg = run_config(spec, strategy, n, seed, replication)?;
    let (theta, s) = initial_point(model, seed, replication)?;
    let mut trace = match strategy {
        Strategy::Spider(_) => gspider_run(model, &s, &cfg)?,
        Strategy::OnlineEm => online_em_run(model, &s, &cfg)?,
        Strategy::BatchEm => batch_em_run(model, &theta, spec.k_out, 0.0)?,
    };
    trace.label = strategy.name().to_string();
    Ok(trace)
}

/// A run of the grid that stopped with an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub strategy: String,
    pub replication: u64,
    pub message: String,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub result: BenchResult,
    pub failures: Vec<RunFailure>,
    /// Every run, grouped by strategy in spec order, replications ascending.
    pub runs: Vec<(String, Vec<Result<RunTrace<GmmParams>>>)>,
}

/// Runs the strategy × replication grid on a bounded pool and aggregates it.
///
/// Runs share nothing mutable and results are collected in grid order, so
/// the outcome does not depend on scheduling.
pub fn run_bench(spec: &ExperimentSpec) -> Result<BenchOutcome> {
    spec.validate()?;
    let model = build_model(spec, load_dataset(spec)?)?;
    run_bench_on(&model, spec)
}

pub fn run_bench_on(model: &GaussianMixture, spec: &ExperimentSpec) -> Result<BenchOutcome> {
    use crate::model::ModelSpec;
    let n = model.n_examples();
    // Reject bad configs before any computation.
    for s in &spec.strategies {
        run_config(spec, s, n, spec.seed, 0)?;
    }
    let jobs: Vec<(usize, u64)> = (0..spec.strategies.len())
        .flat_map(|s| (0..spec.replications as u64).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let mut results: Vec<Result<RunTrace<GmmParams>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| run_strategy(model, spec, &spec.strategies[s], spec.seed, r))
            .collect()
    });

    let mut runs = Vec::with_capacity(spec.strategies.len());
    let mut failures = Vec::new();
    let mut result = BenchResult {
        strategies: Vec::new(),
        replications: spec.replications,
    };
    for strategy in &spec.strategies {
        let mine: Vec<_> = results.drain(..spec.replications).collect();
        for (r, run) in mine.iter().enumerate() {
            if let Err(e) = run {
                failures.push(RunFailure {
                    strategy: strategy.name().to_string(),
                    replication: r as u64,
                    message: e.to_string(),
                });
            }
        }
        let refs: Vec<_> = mine.iter().map(|r| r.as_ref()).collect();
        result
            .strategies
            .push((strategy.name().to_string(), aggregate_strategy(&refs, spec.k_out)?));
        runs.push((strategy.name().to_string(), mine));
    }
    Ok(BenchOutcome { result, failures, runs })
}

/// Writes `bench.csv`, the figure files and a failure log into `dir`.
pub fn export_outcome(outcome: &BenchOutcome, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = export_bench(&outcome.result, dir)?;
    let path = dir.join("failures.csv");
    let mut text = String::from("strategy,replication,message\n");
    for f in &outcome.failures {
        text.push_str(&format!("{},{},\"{}\"\n", f.strategy, f.replication, f.message.replace('"', "'")));
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(files)
}
