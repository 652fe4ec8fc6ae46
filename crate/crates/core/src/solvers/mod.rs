//! Batch EM, Online-EM and g-SPIDER-EM in the expectation space.

mod batch;
mod online;
mod spider;
mod strategy;

use std::time::Duration;

use rand::Rng;

pub use batch::batch_em_run;
pub use online::{online_em_epochs, online_em_run, OnlineSteps};
pub use spider::{gspider_run, spider_estimator_step};
pub use strategy::{spider_strategy, SPIDER_STRATEGIES};

use crate::error::{Error, Result};
use crate::model::Counters;
use crate::samplers::{split_rng, BatchSpec, EpochSchedule, StreamRng};
use crate::stats::StatVector;

/// How the estimator is refreshed at the start of each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResetPolicy {
    /// Exact full pass over the data.
    Full,
    /// Mean over a uniform subset of `round(f n)` examples.
    Fraction(f64),
    /// Mean over a subset of `min(n, max(c1 t^2, n / c2))` examples at
    /// epoch `t`.
    Growth { c1: f64, c2: f64 },
}

impl ResetPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ResetPolicy::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::config(format!("reset fraction must be in (0, 1], got {f}")))
            }
            ResetPolicy::Growth { c1, c2 } if !(c1 > 0.0 && c2 > 0.0) => {
                Err(Error::config("growth reset needs c1, c2 > 0"))
            }
            _ => Ok(()),
        }
    }

    /// Number of examples used by the reset opening epoch `t` (1-based).
    pub fn size(&self, n: usize, t: usize) -> usize {
        match *self {
            ResetPolicy::Full => n,
            ResetPolicy::Fraction(f) => ((f * n as f64).round() as usize).clamp(1, n),
            ResetPolicy::Growth { c1, c2 } => crate::samplers::growth_size(c1, c2, n, t),
        }
    }
}

/// Inner step size of the stochastic-approximation updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `alpha / L` with `L` estimated by secants around the initial point.
    Auto { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub inner: StepSize,
    /// The step applied right after each reset (`γ_{t,0}`).
    pub reset: f64,
}

impl StepSchedule {
    pub fn constant(gamma: f64) -> Self {
        StepSchedule {
            inner: StepSize::Fixed(gamma),
            reset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match self.inner {
            StepSize::Fixed(g) if !(g > 0.0 && g.is_finite()) => {
                errs.push(format!("inner step size must be positive, got {g}"))
            }
            StepSize::Auto { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                errs.push(format!("step rule alpha must be positive, got {alpha}"))
            }
            _ => {}
        }
        if !(self.reset >= 0.0 && self.reset.is_finite()) {
            errs.push(format!("reset step size must be nonnegative, got {}", self.reset));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Termination {
    /// Return the last epoch.
    #[default]
    None,
    /// Return the end of an epoch drawn uniformly among all epochs.
    RandomizedUniform,
}

/// Settings of one stochastic run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub batch: BatchSpec,
    /// Number of epochs after the warm start.
    pub k_out: usize,
    pub schedule: EpochSchedule,
    pub reset: ResetPolicy,
    pub steps: StepSchedule,
    /// Online-EM epochs run before variance reduction starts.
    pub warmstart_epochs: usize,
    pub warmstart_gamma: f64,
    pub seed: u64,
    /// Replication index; selects the RNG streams of the run.
    pub replication: u64,
    /// Evaluate `‖h‖²` and `F` at the end of every epoch.
    pub diagnostics: bool,
    pub termination: Termination,
}

impl RunConfig {
    /// Defaults for `n` examples: `b = ceil(sqrt(n))` with replacement, full
    /// resets, `k_in = ceil(n / 2b)`, γ = 0.01, two warm-start epochs.
    pub fn for_n(n: usize) -> Self {
        let b = ceil_sqrt(n);
        RunConfig {
            batch: BatchSpec::with_replacement(b),
            k_out: 10,
            schedule: EpochSchedule::Constant {
                k_in: n.div_ceil(2 * b),
            },
            reset: ResetPolicy::Full,
            steps: StepSchedule::constant(0.01),
            warmstart_epochs: 2,
            warmstart_gamma: 0.01,
            seed: 0,
            replication: 0,
            diagnostics: true,
            termination: Termination::None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut errs = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(Error::InvalidConfig(v)) = r {
                errs.extend(v);
            }
        };
        push(self.batch.validate(n));
        push(self.schedule.validate());
        push(self.reset.validate());
        push(self.steps.validate());
        if self.k_out == 0 {
            errs.push("k_out must be at least 1".into());
        }
        if self.warmstart_epochs > 0 && !(self.warmstart_gamma > 0.0 && self.warmstart_gamma <= 1.0) {
            errs.push(format!(
                "warm-start step size must be in (0, 1], got {}",
                self.warmstart_gamma
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub(crate) fn stream(&self, purpose: StreamPurpose) -> StreamRng {
        split_rng(self.seed, (self.replication << 8) | purpose as u64)
    }
}

/// Stream ids within a replication.
#[derive(Debug, Clone, Copy)]
pub enum StreamPurpose {
    Init = 0,
    Warmstart = 1,
    Batches = 2,
    EpochLengths = 3,
    Resets = 4,
    Termination = 5,
    StepRule = 6,
}

/// `ceil(sqrt(n))`, exact for every `usize`.
pub fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Per-epoch record of a run.
///
/// For batch EM each record is one iteration `k`: `start_stat = s_{k-1}`,
/// `end_stat = s_k = s̄∘T(s_{k-1})`, and `h_norm_sq` is `‖h(s_{k-1})‖²`,
/// obtained for free from the update.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index (after the warm start).
    pub epoch: usize,
    /// Number of inner iterations `ξ_t`.
    pub xi: usize,
    /// `ξ_t` was truncated at the schedule cap.
    pub xi_clamped: bool,
    /// Examples used by the reset opening this epoch (0 if none).
    pub reset_size: usize,
    /// `‖h(Ŝ_{t,ξ_t})‖²`, NaN when diagnostics are off.
    pub h_norm_sq: f64,
    /// `F(T(Ŝ_{t,ξ_t}))`, NaN when diagnostics are off.
    pub objective: f64,
    pub cum_ce: u64,
    pub cum_opt: u64,
    /// Wall-clock since the start of the run.
    pub elapsed: Duration,
    /// `Ŝ_{t,-1}`.
    pub start_stat: StatVector,
    /// `Ŝ_{t,0}`, after the reset step.
    pub after_reset_stat: StatVector,
    /// The reset estimator `𝖲_{t,0}`.
    pub reset_estimate: StatVector,
    /// `Ŝ_{t,ξ_t}`.
    pub end_stat: StatVector,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunTrace<P> {
    pub label: String,
    pub records: Vec<EpochRecord>,
    /// Cost of the Online-EM warm start, reported apart from the records.
    pub warmstart: Counters,
    /// `F` at the initial statistic (uncounted).
    pub initial_objective: f64,
    /// Inner step size actually used.
    pub gamma_inner: f64,
    pub final_stat: StatVector,
    pub final_params: P,
    /// Epoch and statistic picked by randomized termination, if requested.
    pub terminal: Option<(usize, StatVector)>,
}

impl<P> RunTrace<P> {
    pub fn counters(&self) -> Counters {
        self.records
            .last()
            .map(|r| Counters {
                ce: r.cum_ce,
                opt: r.cum_opt,
            })
            .unwrap_or_default()
    }
}

/// Draws `T` uniformly in `{1, ..., k_out}` and returns the stored end of
/// epoch `T`.
pub fn randomized_terminate<P, R: Rng + ?Sized>(trace: &RunTrace<P>, rng: &mut R) -> Result<(usize, StatVector)> {
    if trace.records.is_empty() {
        return Err(Error::config("cannot terminate an empty trace"));
    }
    let t = rng.random_range(1..=trace.records.len());
    Ok((t, trace.records[t - 1].end_stat.clone()))
}
