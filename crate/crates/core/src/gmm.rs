//! Gaussian mixture with a shared full covariance, in the expectation space.
//!
//! Statistic layout for `g` components in dimension `d`:
//!
//! | block | length          | content                                   |
//! |-------|-----------------|-------------------------------------------|
//! | 1     | `g`             | mean responsibilities                     |
//! | 2     | `g * d`         | responsibility-weighted observations      |
//! | 3     | `d (d + 1) / 2` | upper triangle of the second moment `yyᵀ` |
//!
//! Block 3 is stored row by row (`(0,0), (0,1), ..., (0,d-1), (1,1), ...`)
//! without off-diagonal scaling.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::samplers::{draw_minibatch, split_rng, BatchSpec};
use crate::stats::StatVector;

/// Floors used when mapping an arbitrary statistic to valid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairConfig {
    /// Block-1 entries are clipped below at this value before renormalizing.
    pub weight_floor: f64,
    /// Minimum eigenvalue of the returned covariance.
    pub covariance_floor: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            weight_floor: 1e-8,
            covariance_floor: 1e-8,
        }
    }
}

/// Offsets of the three blocks of a GMM statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmmStatLayout {
    pub g: usize,
    pub d: usize,
}

impl GmmStatLayout {
    pub fn new(g: usize, d: usize) -> Self {
        GmmStatLayout { g, d }
    }

    pub fn q(&self) -> usize {
        self.g + self.g * self.d + self.svec_len()
    }

    pub fn svec_len(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    pub fn weights_block(&self) -> std::ops::Range<usize> {
        0..self.g
    }

    pub fn means_block(&self) -> std::ops::Range<usize> {
        self.g..self.g + self.g * self.d
    }

    pub fn moment_block(&self) -> std::ops::Range<usize> {
        let start = self.g + self.g * self.d;
        start..start + self.svec_len()
    }

    /// Assembles a statistic from its blocks.
    pub fn assemble(&self, weights: &[f64], weighted_obs: &[f64], moment: &DMatrix<f64>) -> StatVector {
        let mut out = Vec::with_capacity(self.q());
        out.extend_from_slice(weights);
        out.extend_from_slice(weighted_obs);
        out.extend(svec(moment));
        StatVector::from_vec(out)
    }
}

/// Upper-triangular, row-major vectorization of a symmetric matrix.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for a in 0..d {
        for b in a..d {
            out.push(m[(a, b)]);
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn unsvec(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for a in 0..d {
        for b in a..d {
            m[(a, b)] = v[k];
            m[(b, a)] = v[k];
            k += 1;
        }
    }
    m
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward substitution `L x = b` for a dense lower-triangular `L`.
fn solve_lower(l: &DMatrix<f64>, b: &[f64], x: &mut [f64]) {
    let d = b.len();
    for r in 0..d {
        let mut acc = b[r];
        for c in 0..r {
            acc -= l[(r, c)] * x[c];
        }
        x[r] = acc / l[(r, r)];
    }
}

/// Mixture parameters: weights, component means, shared covariance.
///
/// The Cholesky factor of the covariance, its log-determinant and the
/// whitened means `L⁻¹ μ_j` are computed once at construction.
#[derive(Debug, Clone)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<f64>,
    covariance: DMatrix<f64>,
    g: usize,
    d: usize,
    chol: DMatrix<f64>,
    log_det: f64,
    log_weights: Vec<f64>,
    white_means: Vec<f64>,
    ridge: f64,
}

impl GmmParams {
    /// Validates and builds parameters. `means` holds `g` vectors of length `d`.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariance: DMatrix<f64>) -> Result<Self> {
        let g = weights.len();
        if g == 0 || means.len() != g {
            return Err(Error::InvalidParams(format!(
                "{} weights for {} means",
                g,
                means.len()
            )));
        }
        let d = covariance.nrows();
        if d == 0 || covariance.ncols() != d || means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidParams("dimension mismatch between means and covariance".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParams(format!("weights sum to {total}, not 1")));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite mean or covariance entry".into()));
        }
        let scale = covariance.amax().max(1.0);
        for a in 0..d {
            for b in a + 1..d {
                if (covariance[(a, b)] - covariance[(b, a)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParams("covariance is not symmetric".into()));
                }
            }
        }
        let flat: Vec<f64> = means.into_iter().flatten().collect();
        Self::from_parts(weights, flat, covariance, 0.0)
    }

    fn from_parts(weights: Vec<f64>, means: Vec<f64>, covariance: DMatrix<f64>, ridge: f64) -> Result<Self> {
        let g = weights.len();
        let d = covariance.nrows();
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParams("covariance is not positive definite".into()))?
            .l();
        let log_det = 2.0 * (0..d).map(|i| chol[(i, i)].ln()).sum::<f64>();
        let mut white_means = vec![0.0; g * d];
        for j in 0..g {
            solve_lower(&chol, &means[j * d..(j + 1) * d], &mut white_means[j * d..(j + 1) * d]);
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GmmParams {
            weights,
            means,
            covariance,
            g,
            d,
            chol,
            log_det,
            log_weights,
            white_means,
            ridge,
        })
    }

    pub fn components(&self) -> usize {
        self.g
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, j: usize) -> &[f64] {
        &self.means[j * self.d..(j + 1) * self.d]
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Ridge added to the covariance by the feasibility repair (0 if none).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn whiten(&self, y: &[f64], out: &mut [f64]) {
        solve_lower(&self.chol, y, out);
    }

    /// `log w_j - ½‖L⁻¹(y - μ_j)‖²` for each component; `white` is `L⁻¹ y`.
    fn unnormalized_log_posteriors(&self, white: &[f64], out: &mut [f64]) {
        let d = self.d;
        for j in 0..self.g {
            let m = &self.white_means[j * d..(j + 1) * d];
            let dist: f64 = white.iter().zip(m).map(|(u, v)| (u - v) * (u - v)).sum();
            out[j] = self.log_weights[j] - 0.5 * dist;
        }
    }

    fn log_normalizer(&self) -> f64 {
        -0.5 * (self.d as f64 * (2.0 * PI).ln() + self.log_det)
    }

    /// `log(w_j N(y; μ_j, Σ))` for each component.
    pub fn log_joint(&self, y: &[f64]) -> Vec<f64> {
        let mut white = vec![0.0; self.d];
        let mut out = vec![0.0; self.g];
        self.whiten(y, &mut white);
        self.unnormalized_log_posteriors(&white, &mut out);
        let c = self.log_normalizer();
        out.iter_mut().for_each(|v| *v += c);
        out
    }

    /// `log sum_j w_j N(y; μ_j, Σ)`.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        log_sum_exp(&self.log_joint(y))
    }

    /// Posterior probabilities of the component label given `y`.
    pub fn responsibilities(&self, y: &[f64]) -> Vec<f64> {
        let mut white = vec![0.0; self.d];
        let mut r = vec![0.0; self.g];
        self.whiten(y, &mut white);
        self.unnormalized_log_posteriors(&white, &mut r);
        normalize_log_weights(&mut r);
        r
    }
}

/// In-place softmax with max subtraction.
fn normalize_log_weights(r: &mut [f64]) {
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in r.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    r.iter_mut().for_each(|v| *v /= total);
}

/// Posterior responsibilities `r_j ∝ w_j N(y; μ_j, Σ)`.
pub fn posterior_responsibilities(theta: &GmmParams, y: &[f64]) -> Vec<f64> {
    theta.responsibilities(y)
}

/// A `g`-component shared-covariance mixture fitted to a dataset.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    data: Dataset,
    layout: GmmStatLayout,
    repair: RepairConfig,
}

impl GaussianMixture {
    pub fn new(data: Dataset, components: usize) -> Result<Self> {
        Self::with_repair(data, components, RepairConfig::default())
    }

    pub fn with_repair(data: Dataset, components: usize, repair: RepairConfig) -> Result<Self> {
        if components == 0 {
            return Err(Error::config("a mixture needs at least one component"));
        }
        if !(repair.weight_floor > 0.0 && repair.covariance_floor > 0.0) {
            return Err(Error::config("repair floors must be positive"));
        }
        let layout = GmmStatLayout::new(components, data.dim());
        Ok(GaussianMixture { data, layout, repair })
    }

    pub fn layout(&self) -> GmmStatLayout {
        self.layout
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// `s̄(theta)` without touching any counter; used for initialization.
    pub fn initial_statistic(&self, theta: &GmmParams) -> Result<StatVector> {
        self.full_expectation(theta)
    }

    /// Parameter initialization: k-means++ seeding of the means, uniform
    /// weights, empirical covariance of the data.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GmmParams> {
        let g = self.layout.g;
        let n = self.data.len();
        let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
        let mut dist2: Vec<f64> = (0..n)
            .map(|i| sq_dist(self.data.row(i), self.data.row(centers[0])))
            .collect();
        while centers.len() < g {
            let total: f64 = dist2.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, w) in dist2.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            centers.push(next);
            for (i, dv) in dist2.iter_mut().enumerate() {
                *dv = dv.min(sq_dist(self.data.row(i), self.data.row(next)));
            }
        }
        let means: Vec<Vec<f64>> = centers.iter().map(|&c| self.data.row(c).to_vec()).collect();
        let cov = self.data.covariance(false);
        let cov = floor_covariance(cov, self.repair.covariance_floor)?.0;
        GmmParams::new(vec![1.0 / g as f64; g], means, cov)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetrizes and adds the smallest ridge from {0, 1e-8, 1e-6, ...} that
/// brings the minimum eigenvalue to at least `floor` with a successful
/// Cholesky factorization.
fn floor_covariance(cov: DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    let mut sym = (&cov + cov.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unrepairable("non-finite covariance".into()));
    }
    let min_eig = SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut ridge = 0.0;
    let mut next = 1e-8;
    while ridge <= 1e300 {
        if min_eig + ridge >= floor {
            let candidate = &sym + DMatrix::identity(d, d) * ridge;
            if candidate.clone().cholesky().is_some() {
                sym = candidate;
                return Ok((sym, ridge));
            }
        }
        ridge = next;
        next *= 100.0;
    }
    Err(Error::Unrepairable("covariance could not be made positive definite".into()))
}

impl ModelSpec for GaussianMixture {
    type Params = GmmParams;

    fn n_examples(&self) -> usize {
        self.data.len()
    }

    fn stat_dim(&self) -> usize {
        self.layout.q()
    }

    fn t_map(&self, s: &StatVector) -> Result<GmmParams> {
        let GmmStatLayout { g, d } = self.layout;
        if s.len() != self.layout.q() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.q(),
                got: s.len(),
            });
        }
        s.check_finite()?;
        let block1 = &s.as_slice()[self.layout.weights_block()];
        let block2 = &s.as_slice()[self.layout.means_block()];
        let block3 = &s.as_slice()[self.layout.moment_block()];
        let mass: f64 = block1.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::Unrepairable(format!("responsibility block sums to {mass}")));
        }
        let clipped: Vec<f64> = block1.iter().map(|w| w.max(self.repair.weight_floor)).collect();
        let clipped_sum: f64 = clipped.iter().sum();
        let weights: Vec<f64> = clipped.iter().map(|w| w / clipped_sum).collect();
        let mut means = vec![0.0; g * d];
        for j in 0..g {
            for a in 0..d {
                means[j * d + a] = block2[j * d + a] / clipped[j];
            }
        }
        let mut cov = unsvec(block3, d);
        for j in 0..g {
            let mu = &means[j * d..(j + 1) * d];
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] -= clipped[j] * mu[a] * mu[b];
                }
            }
        }
        let (cov, ridge) = floor_covariance(cov, self.repair.covariance_floor)?;
        GmmParams::from_parts(weights, means, cov, ridge)
    }

    fn accumulate_expectations(
        &self,
        indices: &[usize],
        theta: &GmmParams,
        scale: f64,
        acc: &mut StatVector,
    ) -> Result<()> {
        let GmmStatLayout { g, d } = self.layout;
        if theta.g != g || theta.d != d {
            return Err(Error::InvalidParams("parameters do not match the model shape".into()));
        }
        let n = self.data.len();
        let mut white = vec![0.0; d];
        let mut r = vec![0.0; g];
        let (head, moment) = acc.as_mut_slice().split_at_mut(g + g * d);
        let (resp, weighted) = head.split_at_mut(g);
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            let y = self.data.row(i);
            theta.whiten(y, &mut white);
            theta.unnormalized_log_posteriors(&white, &mut r);
            normalize_log_weights(&mut r);
            for j in 0..g {
                let rj = scale * r[j];
                resp[j] += rj;
                for a in 0..d {
                    weighted[j * d + a] += rj * y[a];
                }
            }
            let mut k = 0;
            for a in 0..d {
                let ya = scale * y[a];
                for b in a..d {
                    moment[k] += ya * y[b];
                    k += 1;
                }
            }
        }
        Ok(())
    }

    fn objective(&self, theta: &GmmParams) -> f64 {
        let n = self.data.len();
        let mut white = vec![0.0; theta.d];
        let mut logp = vec![0.0; theta.g];
        let mut total = 0.0;
        for i in 0..n {
            theta.whiten(self.data.row(i), &mut white);
            theta.unnormalized_log_posteriors(&white, &mut logp);
            total += log_sum_exp(&logp);
        }
        -(total / n as f64 + theta.log_normalizer())
    }
}

/// Empirical surrogate for the per-example Lipschitz constant of
/// `s̄_i∘T` near `reference`.
///
/// Draws `probe_count` points in a ball of the given radius around the
/// reference, and returns the largest secant ratio
/// `‖s̄_i∘T(s) - s̄_i∘T(s')‖ / ‖s - s'‖` over all probe pairs and a random
/// subset of examples. Coincident probes are skipped.
pub fn estimate_lipschitz<M: ModelSpec>(
    model: &M,
    reference: &StatVector,
    probe_count: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    if probe_count < 2 {
        return Err(Error::config("at least two probes are needed"));
    }
    let q = model.stat_dim();
    let n = model.n_examples();
    let mut rng = split_rng(seed, 0x11f5);
    let examples = draw_minibatch(&mut rng, n, BatchSpec::without_replacement(n.min(32)))?;
    let mut probes = Vec::with_capacity(probe_count);
    let normal = rand_distr::StandardNormal;
    for _ in 0..probe_count {
        let dir: Vec<f64> = (0..q).map(|_| rng.sample::<f64, _>(normal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let r = radius * rng.random::<f64>();
        let mut s = reference.clone();
        for (k, v) in dir.iter().enumerate() {
            s[k] += r * v / norm;
        }
        let theta = model.t_map(&s)?;
        let images: Vec<StatVector> = examples
            .iter()
            .map(|&i| model.per_example_expectation(i, &theta))
            .collect::<Result<_>>()?;
        probes.push((s, images));
    }
    let mut best = 0.0f64;
    for a in 0..probes.len() {
        for b in a + 1..probes.len() {
            let den = probes[a].0.sub(&probes[b].0).norm();
            if den == 0.0 {
                continue;
            }
            for (ia, ib) in probes[a].1.iter().zip(&probes[b].1) {
                best = best.max(ia.sub(ib).norm() / den);
            }
        }
    }
    Ok(best)
}
