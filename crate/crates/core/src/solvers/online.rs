use std::time::Instant;

use rand::Rng;

use super::{ceil_sqrt, EpochRecord, RunConfig, RunTrace, StepSize, StreamPurpose};
use crate::diagnostics::evaluate_point;
use crate::error::{Error, Result};
use crate::model::{batch_mean, Counters, ModelSpec};
use crate::samplers::{draw_minibatch, BatchSpec};
use crate::stats::StatVector;

/// Shape of a block of Online-EM epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineSteps {
    pub gamma: f64,
    pub batch: BatchSpec,
    pub updates_per_epoch: usize,
}

/// Runs `epochs` epochs of the stochastic-approximation scheme
/// `Ŝ ← Ŝ + γ (b⁻¹ Σ_{i∈B} s̄_i(T(Ŝ)) - Ŝ)`, calling `on_epoch` with the
/// statistic after each epoch.
pub fn online_em_epochs<M, R, F>(
    model: &M,
    s: &mut StatVector,
    steps: OnlineSteps,
    epochs: usize,
    rng: &mut R,
    counters: &mut Counters,
    mut on_epoch: F,
) -> Result<()>
where
    M: ModelSpec,
    R: Rng + ?Sized,
    F: FnMut(usize, &StatVector, &Counters) -> Result<()>,
{
    let n = model.n_examples();
    for e in 1..=epochs {
        for _ in 0..steps.updates_per_epoch {
            let theta = model.t_map(s)?;
            let batch = draw_minibatch(rng, n, steps.batch)?;
            let target = batch_mean(model, &batch, &theta, counters)?;
            *s = s.step_towards(&target, steps.gamma);
            counters.opt += 1;
            if let Some(pos) = s.first_non_finite() {
                return Err(Error::Diverged {
                    epoch: e,
                    what: format!("statistic entry {pos} is not finite"),
                });
            }
        }
        on_epoch(e, s, counters)?;
    }
    Ok(())
}

/// Online-EM: `warmstart_epochs` epochs at the warm-start step size, then
/// `k_out` recorded epochs at the inner step size. One epoch is
/// `ceil(sqrt(n))` updates with batches of `config.batch.size`.
pub fn online_em_run<M: ModelSpec>(
    model: &M,
    s_init: &StatVector,
    config: &RunConfig,
) -> Result<RunTrace<M::Params>> {
    let n = model.n_examples();
    config.validate(n)?;
    let gamma = match config.steps.inner {
        StepSize::Fixed(g) => g,
        StepSize::Auto { .. } => {
            return Err(Error::config("Online-EM takes a fixed step size"));
        }
    };
    if gamma > 1.0 {
        return Err(Error::config(format!("Online-EM step size must be in (0, 1], got {gamma}")));
    }
    let start = Instant::now();
    let updates = ceil_sqrt(n);
    let mut s = s_init.clone();
    s.check_finite()?;
    let initial_objective = model.objective(&model.t_map(&s)?);

    let mut warm = Counters::default();
    if config.warmstart_epochs > 0 {
        let mut rng = config.stream(StreamPurpose::Warmstart);
        let steps = OnlineSteps {
            gamma: config.warmstart_gamma,
            batch: BatchSpec::with_replacement(updates),
            updates_per_epoch: updates,
        };
        online_em_epochs(model, &mut s, steps, config.warmstart_epochs, &mut rng, &mut warm, |_, _, _| Ok(()))?;
    }

    let mut rng = config.stream(StreamPurpose::Batches);
    let mut counters = Counters::default();
    let mut records = Vec::with_capacity(config.k_out);
    let steps = OnlineSteps {
        gamma,
        batch: config.batch,
        updates_per_epoch: updates,
    };
    let mut prev = s.clone();
    online_em_epochs(model, &mut s, steps, config.k_out, &mut rng, &mut counters, |e, cur, c| {
        let (h_norm_sq, objective) = if config.diagnostics {
            evaluate_point(model, cur)?
        } else {
            (f64::NAN, f64::NAN)
        };
        records.push(EpochRecord {
            epoch: e,
            xi: updates,
            xi_clamped: false,
            reset_size: 0,
            h_norm_sq,
            objective,
            cum_ce: c.ce,
            cum_opt: c.opt,
            elapsed: start.elapsed(),
            start_stat: prev.clone(),
            after_reset_stat: prev.clone(),
            reset_estimate: prev.clone(),
            end_stat: cur.clone(),
        });
        prev = cur.clone();
        Ok(())
    })?;
    let final_params = model.t_map(&s)?;
    let mut trace = RunTrace {
        label: "online-em".into(),
        records,
        warmstart: warm,
        initial_objective,
        gamma_inner: gamma,
        final_stat: s,
        final_params,
        terminal: None,
    };
    if config.termination == super::Termination::RandomizedUniform {
        let mut rng = config.stream(StreamPurpose::Termination);
        trace.terminal = Some(super::randomized_terminate(&trace, &mut rng)?);
    }
    Ok(trace)
}
