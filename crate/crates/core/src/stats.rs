//! Points of the expectation space R^q.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// A point in the expectation space: an iterate, an estimator of the full
/// conditional expectation, or a per-example expectation.
///
/// The layout of the entries is defined by the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StatVector(Vec<f64>);

impl StatVector {
    pub fn zeros(q: usize) -> Self {
        StatVector(vec![0.0; q])
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        StatVector(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Position of the first NaN or infinite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(pos) => Err(Error::NonFiniteStatistic(pos)),
            None => Ok(()),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &StatVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    /// `self + gamma * (target - self)`, the stochastic-approximation move.
    pub fn step_towards(&self, target: &StatVector, gamma: f64) -> StatVector {
        debug_assert_eq!(self.len(), target.len());
        StatVector(
            self.0
                .iter()
                .zip(&target.0)
                .map(|(s, t)| s + gamma * (t - s))
                .collect(),
        )
    }

    pub fn sub(&self, other: &StatVector) -> StatVector {
        debug_assert_eq!(self.len(), other.len());
        StatVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &StatVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for StatVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for StatVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for StatVector {
    fn from(v: Vec<f64>) -> Self {
        StatVector(v)
    }
}
