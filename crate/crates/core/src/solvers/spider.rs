use std::time::Instant;

use rand::Rng;

use super::{
    ceil_sqrt, online_em_epochs, EpochRecord, OnlineSteps, ResetPolicy, RunConfig, RunTrace, StepSize, StreamPurpose,
    Termination,
};
use crate::diagnostics::evaluate_point;
use crate::error::{Error, Result};
use crate::gmm::estimate_lipschitz;
use crate::model::{batch_mean, full_mean, Counters, ModelSpec};
use crate::samplers::{draw_epoch_length, draw_minibatch, BatchSpec};
use crate::stats::StatVector;

/// One path-integrated update of the estimator:
/// `𝖲 + b⁻¹ Σ_{i∈B} (s̄_i(θ_cur) - s̄_i(θ_prev))`, both terms on the same
/// batch. Costs `2 b` conditional expectations.
pub fn spider_estimator_step<M: ModelSpec>(
    model: &M,
    batch: &[usize],
    theta_cur: &M::Params,
    theta_prev: &M::Params,
    estimator: &StatVector,
    counters: &mut Counters,
) -> Result<StatVector> {
    let cur = batch_mean(model, batch, theta_cur, counters)?;
    let prev = batch_mean(model, batch, theta_prev, counters)?;
    let mut out = estimator.clone();
    out.axpy(1.0, &cur);
    out.axpy(-1.0, &prev);
    Ok(out)
}

fn reset_estimate<M: ModelSpec, R: Rng + ?Sized>(
    model: &M,
    theta: &M::Params,
    policy: ResetPolicy,
    t: usize,
    rng: &mut R,
    counters: &mut Counters,
) -> Result<(StatVector, usize)> {
    let n = model.n_examples();
    let size = policy.size(n, t);
    if size == n {
        return Ok((full_mean(model, theta, counters)?, n));
    }
    let subset = draw_minibatch(rng, n, BatchSpec::without_replacement(size))?;
    Ok((batch_mean(model, &subset, theta, counters)?, size))
}

fn finite_or_diverged(s: &StatVector, epoch: usize) -> Result<()> {
    match s.first_non_finite() {
        Some(pos) => Err(Error::Diverged {
            epoch,
            what: format!("statistic entry {pos} is not finite"),
        }),
        None => Ok(()),
    }
}

/// g-SPIDER-EM.
///
/// After the optional Online-EM warm start, `Ŝ_{1,0} = Ŝ_{1,-1}` is the
/// current statistic and `𝖲_{1,0}` its reset estimate. Epoch `t` runs `ξ_t`
/// inner iterations
///
/// ```text
/// 𝖲_{t,k+1} = 𝖲_{t,k} + b⁻¹ Σ_{i∈B} (s̄_i∘T(Ŝ_{t,k}) - s̄_i∘T(Ŝ_{t,k-1}))
/// Ŝ_{t,k+1} = Ŝ_{t,k} + γ (𝖲_{t,k+1} - Ŝ_{t,k})
/// ```
///
/// then hands off `Ŝ_{t+1,-1} = Ŝ_{t,ξ_t}`, resets the estimator per the
/// policy and takes the `γ_{t+1,0}` step. With a constant `k_in` and full
/// resets the counters end at `n + n k_out + 2 b k_in k_out` conditional
/// expectations and `k_out + k_in k_out` optimization steps.
pub fn gspider_run<M: ModelSpec>(
    model: &M,
    s_init: &StatVector,
    config: &RunConfig,
) -> Result<RunTrace<M::Params>> {
    let n = model.n_examples();
    config.validate(n)?;
    s_init.check_finite()?;
    let start = Instant::now();
    let mut s_cur = s_init.clone();
    let initial_objective = model.objective(&model.t_map(&s_cur)?);

    let mut warm = Counters::default();
    if config.warmstart_epochs > 0 {
        let mut rng = config.stream(StreamPurpose::Warmstart);
        let b = ceil_sqrt(n);
        let steps = OnlineSteps {
            gamma: config.warmstart_gamma,
            batch: BatchSpec::with_replacement(b),
            updates_per_epoch: b,
        };
        online_em_epochs(model, &mut s_cur, steps, config.warmstart_epochs, &mut rng, &mut warm, |_, _, _| Ok(()))?;
    }

    let gamma = match config.steps.inner {
        StepSize::Fixed(g) => g,
        StepSize::Auto { alpha } => {
            let radius = 1e-3 * s_cur.norm().max(1.0);
            let seed = config.stream(StreamPurpose::StepRule).random();
            let l = estimate_lipschitz(model, &s_cur, 8, radius, seed)?;
            if !(l > 0.0) {
                return Err(Error::config("step rule: estimated Lipschitz constant is zero"));
            }
            alpha / l
        }
    };
    let gamma_reset = config.steps.reset;

    let mut batch_rng = config.stream(StreamPurpose::Batches);
    let mut epoch_rng = config.stream(StreamPurpose::EpochLengths);
    let mut reset_rng = config.stream(StreamPurpose::Resets);
    let mut counters = Counters::default();

    // Ŝ_{1,0} = Ŝ_{1,-1}: no reset step before the first epoch.
    let mut s_prev = s_cur.clone();
    let mut theta_prev = model.t_map(&s_prev)?;
    let mut theta_cur = theta_prev.clone();
    let (mut estimator, mut reset_size) = reset_estimate(model, &theta_prev, config.reset, 1, &mut reset_rng, &mut counters)?;

    let mut records = Vec::with_capacity(config.k_out);
    for t in 1..=config.k_out {
        let epoch_start = s_prev.clone();
        let after_reset = s_cur.clone();
        let reset_value = estimator.clone();
        let draw = draw_epoch_length(&mut epoch_rng, &config.schedule, t);
        for _ in 0..draw.length {
            let batch = draw_minibatch(&mut batch_rng, n, config.batch)?;
            estimator = spider_estimator_step(model, &batch, &theta_cur, &theta_prev, &estimator, &mut counters)?;
            let next = s_cur.step_towards(&estimator, gamma);
            counters.opt += 1;
            finite_or_diverged(&next, t)?;
            s_cur = next;
            theta_prev = std::mem::replace(&mut theta_cur, model.t_map(&s_cur)?);
        }
        let end_stat = s_cur.clone();

        // Hand-off, reset of the estimator, and the γ_{t+1,0} step.
        s_prev = s_cur.clone();
        theta_prev = theta_cur.clone();
        let (fresh, size) = reset_estimate(model, &theta_prev, config.reset, t + 1, &mut reset_rng, &mut counters)?;
        estimator = fresh;
        let opening_size = std::mem::replace(&mut reset_size, size);
        if gamma_reset > 0.0 {
            s_cur = s_prev.step_towards(&estimator, gamma_reset);
            finite_or_diverged(&s_cur, t)?;
            theta_cur = model.t_map(&s_cur)?;
        }
        counters.opt += 1;

        let (h_norm_sq, objective) = if config.diagnostics {
            evaluate_point(model, &end_stat)?
        } else {
            (f64::NAN, f64::NAN)
        };
        records.push(EpochRecord {
            epoch: t,
            xi: draw.length,
            xi_clamped: draw.clamped,
            reset_size: opening_size,
            h_norm_sq,
            objective,
            cum_ce: counters.ce,
            cum_opt: counters.opt,
            elapsed: start.elapsed(),
            start_stat: epoch_start,
            after_reset_stat: after_reset,
            reset_estimate: reset_value,
            end_stat,
        });
    }

    let final_stat = records.last().map(|r| r.end_stat.clone()).unwrap_or(s_cur);
    let final_params = model.t_map(&final_stat)?;
    let mut trace = RunTrace {
        label: "g-spider-em".into(),
        records,
        warmstart: warm,
        initial_objective,
        gamma_inner: gamma,
        final_stat,
        final_params,
        terminal: None,
    };
    if config.termination == Termination::RandomizedUniform {
        let mut rng = config.stream(StreamPurpose::Termination);
        trace.terminal = Some(super::randomized_terminate(&trace, &mut rng)?);
    }
    Ok(trace)
}
