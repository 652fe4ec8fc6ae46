//! The model contract shared by every solver.
//!
//! A model lives in the expectation space: it maps a statistic to
//! parameters (the M-step, `t_map`) and parameters back to conditional
//! expectations of per-example sufficient statistics (the E-step).

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::stats::StatVector;

/// A curved-exponential-family latent-variable model over a finite sum of
/// `n` examples.
///
/// Implementations are shared read-only between concurrent runs.
pub trait ModelSpec: Sync {
    type Params: Clone + Debug + Send + Sync;

    /// Number of examples `n`.
    fn n_examples(&self) -> usize;

    /// Dimension `q` of the statistic vectors.
    fn stat_dim(&self) -> usize;

    /// The M-step: the unique parameter maximizing the expected
    /// complete-data log-likelihood given the statistic `s`.
    fn t_map(&self, s: &StatVector) -> Result<Self::Params>;

    /// `acc += scale * sum_{i in indices} s̄_i(theta)`, summing in the order
    /// given. Each index costs one conditional expectation evaluation.
    fn accumulate_expectations(
        &self,
        indices: &[usize],
        theta: &Self::Params,
        scale: f64,
        acc: &mut StatVector,
    ) -> Result<()>;

    /// The finite-sum objective `F(theta) = n^-1 sum_i loss_i(theta)`.
    fn objective(&self, theta: &Self::Params) -> f64;

    /// `s̄_i(theta)` for a single example.
    fn per_example_expectation(&self, i: usize, theta: &Self::Params) -> Result<StatVector> {
        let mut out = StatVector::zeros(self.stat_dim());
        self.accumulate_expectations(&[i], theta, 1.0, &mut out)?;
        Ok(out)
    }

    /// `s̄(theta) = n^-1 sum_i s̄_i(theta)`, ascending index order.
    fn full_expectation(&self, theta: &Self::Params) -> Result<StatVector> {
        let n = self.n_examples();
        let all: Vec<usize> = (0..n).collect();
        let mut out = StatVector::zeros(self.stat_dim());
        self.accumulate_expectations(&all, theta, 1.0 / n as f64, &mut out)?;
        Ok(out)
    }
}

/// Complexity counters: conditional expectation evaluations and
/// optimization (statistic update) steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub ce: u64,
    pub opt: u64,
}

/// Mean of `s̄_i(theta)` over `indices` (a multiset), counting one CE per
/// index.
pub fn batch_mean<M: ModelSpec>(
    model: &M,
    indices: &[usize],
    theta: &M::Params,
    counters: &mut Counters,
) -> Result<StatVector> {
    if indices.is_empty() {
        return Err(Error::InvalidConfig(vec!["empty mini-batch".into()]));
    }
    let mut out = StatVector::zeros(model.stat_dim());
    model.accumulate_expectations(indices, theta, 1.0 / indices.len() as f64, &mut out)?;
    counters.ce += indices.len() as u64;
    Ok(out)
}

/// Full pass `s̄(theta)`, counting `n` CE.
pub fn full_mean<M: ModelSpec>(
    model: &M,
    theta: &M::Params,
    counters: &mut Counters,
) -> Result<StatVector> {
    let out = model.full_expectation(theta)?;
    counters.ce += model.n_examples() as u64;
    Ok(out)
}

fn check_stat<M: ModelSpec>(model: &M, s: &StatVector) -> Result<()> {
    if s.len() != model.stat_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.stat_dim(),
            got: s.len(),
        });
    }
    s.check_finite()
}

/// The mean field `h(s) = s̄∘T(s) - s`, by one full pass over the data.
///
/// When `ce` is given it is incremented by `n`.
pub fn mean_field<M: ModelSpec>(model: &M, s: &StatVector, ce: Option<&mut u64>) -> Result<StatVector> {
    check_stat(model, s)?;
    let theta = model.t_map(s)?;
    let sbar = model.full_expectation(&theta)?;
    if let Some(c) = ce {
        *c += model.n_examples() as u64;
    }
    Ok(sbar.sub(s))
}

/// `W(s) = F(T(s))`, the Lyapunov function of EM in the expectation space.
pub fn lyapunov<M: ModelSpec>(model: &M, s: &StatVector) -> Result<f64> {
    check_stat(model, s)?;
    Ok(model.objective(&model.t_map(s)?))
}
