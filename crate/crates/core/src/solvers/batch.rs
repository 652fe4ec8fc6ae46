use std::time::Instant;

use super::{EpochRecord, RunTrace};
use crate::error::{Error, Result};
use crate::model::{full_mean, Counters, ModelSpec};

/// Batch EM, `τ_{k+1} = T(s̄(τ_k))`, run in the expectation space.
///
/// Stops once `‖h(s_{k-1})‖ <= tol` or after `max_iter` iterations. Every
/// iteration costs exactly `n` conditional expectations; the initial
/// `s̄(θ_init)` costs another `n`.
pub fn batch_em_run<M: ModelSpec>(
    model: &M,
    theta_init: &M::Params,
    max_iter: usize,
    tol: f64,
) -> Result<RunTrace<M::Params>> {
    let start = Instant::now();
    let mut counters = Counters::default();
    let initial_objective = model.objective(theta_init);
    let mut s = full_mean(model, theta_init, &mut counters)?;
    let mut theta = theta_init.clone();
    let mut records = Vec::new();
    for k in 1..=max_iter {
        theta = model.t_map(&s)?;
        let next = full_mean(model, &theta, &mut counters)?;
        counters.opt += 1;
        if let Some(pos) = next.first_non_finite() {
            return Err(Error::Diverged {
                epoch: k,
                what: format!("statistic entry {pos} is not finite"),
            });
        }
        let h_norm_sq = next.sub(&s).norm_sq();
        records.push(EpochRecord {
            epoch: k,
            xi: 1,
            xi_clamped: false,
            reset_size: 0,
            h_norm_sq,
            objective: model.objective(&theta),
            cum_ce: counters.ce,
            cum_opt: counters.opt,
            elapsed: start.elapsed(),
            start_stat: s.clone(),
            after_reset_stat: s.clone(),
            reset_estimate: next.clone(),
            end_stat: next.clone(),
        });
        s = next;
        if h_norm_sq.sqrt() <= tol {
            break;
        }
    }
    Ok(RunTrace {
        label: "batch-em".into(),
        records,
        warmstart: Counters::default(),
        initial_objective,
        gamma_inner: 1.0,
        final_params: theta,
        final_stat: s,
        terminal: None,
    })
}
