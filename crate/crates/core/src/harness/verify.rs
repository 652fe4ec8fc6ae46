//! Identity checks behind the solvers: unbiasedness and variance of the
//! path-integrated estimator, the geometric stopping lemma, and the
//! closed-form complexity counters.
//!
//! Exact checks enumerate every mini-batch of a tiny problem; Monte-Carlo
//! checks report their deviation in standard errors.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::{synth_gmm, Dataset};
use crate::error::{Error, Result};
use crate::gmm::{GaussianMixture, GmmParams};
use crate::model::{Counters, ModelSpec};
use crate::samplers::{default_geometric_cap, draw_epoch_length, draw_minibatch, split_rng, BatchSpec, EpochSchedule};
use crate::solvers::{gspider_run, spider_estimator_step, ResetPolicy, RunConfig, StepSchedule};
use crate::stats::StatVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bias,
    Variance,
    Geom,
    Counters,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias" => Ok(Suite::Bias),
            "variance" => Ok(Suite::Variance),
            "geom" => Ok(Suite::Geom),
            "counters" => Ok(Suite::Counters),
            "all" => Ok(Suite::All),
            _ => Err(Error::config(format!("unknown suite {s:?}"))),
        }
    }
}

/// Unit of a reported deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Absolute,
    StdErrors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub deviation: f64,
    pub threshold: f64,
    pub unit: Unit,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: impl Into<String>, deviation: f64, threshold: f64, unit: Unit) -> Self {
        CheckReport {
            name: name.into(),
            deviation,
            threshold,
            unit,
            passed: deviation <= threshold,
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = match self.unit {
            Unit::Absolute => "",
            Unit::StdErrors => " se",
        };
        write!(
            f,
            "{} {}: deviation {:.3e}{unit} (threshold {:.1e}{unit})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.deviation,
            self.threshold
        )
    }
}

/// Settings of a suite run. `trials` overrides every Monte-Carlo sample
/// size when set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub trials: Option<u64>,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { trials: None, seed: 2021 }
    }
}

pub fn run_suite(suite: Suite, cfg: VerifyConfig) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Bias | Suite::All) {
        out.extend(bias_exact()?);
        out.push(bias_monte_carlo(cfg.trials.unwrap_or(100_000), cfg.seed)?);
    }
    if matches!(suite, Suite::Variance | Suite::All) {
        out.extend(variance_exact()?);
    }
    if matches!(suite, Suite::Geom | Suite::All) {
        out.extend(geometric_analytic());
        out.extend(geometric_monte_carlo(cfg.trials.unwrap_or(1_000_000), cfg.seed));
    }
    if matches!(suite, Suite::Counters | Suite::All) {
        out.push(counters_constant(cfg.seed)?);
        out.extend(counters_geometric(200, cfg.seed)?);
    }
    Ok(out)
}

/// The toy mixture on `{-2, -1, 1, 2}` (first `n` points), two components
/// in one dimension, and two nearby parameters.
fn toy(n: usize) -> Result<(GaussianMixture, GmmParams, GmmParams)> {
    let points = [-2.0, -1.0, 1.0, 2.0];
    let data = Dataset::new(n, 1, points[..n].to_vec())?;
    let model = GaussianMixture::new(data, 2)?;
    let prev = GmmParams::new(vec![0.4, 0.6], vec![vec![-1.5], vec![1.2]], DMatrix::from_element(1, 1, 0.8))?;
    let cur = GmmParams::new(vec![0.45, 0.55], vec![vec![-1.3], vec![1.4]], DMatrix::from_element(1, 1, 0.9))?;
    Ok((model, prev, cur))
}

fn for_each_tuple(n: usize, b: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx = vec![0usize; b];
    loop {
        f(&idx)?;
        let mut k = 0;
        loop {
            if k == b {
                return Ok(());
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn subsets(n: usize, b: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == b)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// Unbiasedness of one estimator step, by enumerating every batch of size 2
/// out of 4 examples, with and without replacement.
pub fn bias_exact() -> Result<Vec<CheckReport>> {
    let (model, prev, cur) = toy(4)?;
    let mut estimator = model.full_expectation(&cur)?;
    for (k, v) in estimator.as_mut_slice().iter_mut().enumerate() {
        *v += 0.1 * (k as f64 + 1.0);
    }
    let mut target = estimator.clone();
    target.axpy(1.0, &model.full_expectation(&cur)?);
    target.axpy(-1.0, &model.full_expectation(&prev)?);

    let mut reports = Vec::new();
    let mut counters = Counters::default();
    let mut mean = StatVector::zeros(model.stat_dim());
    let mut count = 0usize;
    for_each_tuple(4, 2, |batch| {
        let mut sorted = batch.to_vec();
        sorted.sort_unstable();
        let s = spider_estimator_step(&model, &sorted, &cur, &prev, &estimator, &mut counters)?;
        mean.axpy(1.0, &s);
        count += 1;
        Ok(())
    })?;
    mean.scale(1.0 / count as f64);
    reports.push(CheckReport::new(
        "bias/exact n=4 b=2 with replacement",
        mean.max_abs_diff(&target),
        1e-12,
        Unit::Absolute,
    ));

    let all = subsets(4, 2);
    let mut mean = StatVector::zeros(model.stat_dim());
    for batch in &all {
        let s = spider_estimator_step(&model, batch, &cur, &prev, &estimator, &mut counters)?;
        mean.axpy(1.0, &s);
    }
    mean.scale(1.0 / all.len() as f64);
    reports.push(CheckReport::new(
        "bias/exact n=4 b=2 without replacement",
        mean.max_abs_diff(&target),
        1e-12,
        Unit::Absolute,
    ));
    Ok(reports)
}

/// Unbiasedness by simulation: n = 200, b = 10, `trials` batches drawn with
/// replacement; worst component in standard errors.
pub fn bias_monte_carlo(trials: u64, seed: u64) -> Result<CheckReport> {
    if trials < 2 {
        return Err(Error::config("Monte-Carlo checks need at least 2 trials"));
    }
    let (data, _) = synth_gmm(3, 2, 200, 3.0, seed)?;
    let model = GaussianMixture::new(data, 3)?;
    let mut rng = split_rng(seed, 0xb1a5);
    let prev = model.init_params(&mut rng)?;
    let cur = model.t_map(&model.full_expectation(&prev)?)?;
    let estimator = model.full_expectation(&prev)?;
    let mut target = estimator.clone();
    target.axpy(1.0, &model.full_expectation(&cur)?);
    target.axpy(-1.0, &model.full_expectation(&prev)?);

    let q = model.stat_dim();
    let mut mean = vec![0.0; q];
    let mut m2 = vec![0.0; q];
    let mut counters = Counters::default();
    for k in 1..=trials {
        let batch = draw_minibatch(&mut rng, 200, BatchSpec::with_replacement(10))?;
        let s = spider_estimator_step(&model, &batch, &cur, &prev, &estimator, &mut counters)?;
        for c in 0..q {
            let delta = s[c] - mean[c];
            mean[c] += delta / k as f64;
            m2[c] += delta * (s[c] - mean[c]);
        }
    }
    let mut worst = 0.0f64;
    for c in 0..q {
        let se = (m2[c] / (trials - 1) as f64 / trials as f64).sqrt();
        let diff = (mean[c] - target[c]).abs();
        let scale = target[c].abs().max(1.0);
        let z = if se > 1e-14 * scale {
            diff / se
        } else if diff <= 1e-10 * scale {
            // Constant component: it must match to rounding.
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(CheckReport::new(
        format!("bias/monte-carlo n=200 b=10 M={trials}"),
        worst,
        5.0,
        Unit::StdErrors,
    ))
}

/// Variance of the mini-batch mean of `δ_i = s̄_i(θ_cur) - s̄_i(θ_prev)`
/// against `b⁻¹ (n⁻¹ Σ‖δ_i‖² - ‖δ̄‖²)` (with replacement) and the same times
/// `(n - b) / (n - 1)` (without), by full enumeration for n ≤ 4, b ≤ 3.
pub fn variance_exact() -> Result<Vec<CheckReport>> {
    let mut with = 0.0f64;
    let mut without = 0.0f64;
    for n in 1..=4 {
        let (model, prev, cur) = toy(n)?;
        let deltas: Vec<StatVector> = (0..n)
            .map(|i| Ok(model.per_example_expectation(i, &cur)?.sub(&model.per_example_expectation(i, &prev)?)))
            .collect::<Result<_>>()?;
        let mut dbar = StatVector::zeros(model.stat_dim());
        for d in &deltas {
            dbar.axpy(1.0 / n as f64, d);
        }
        let spread = deltas.iter().map(|d| d.norm_sq()).sum::<f64>() / n as f64 - dbar.norm_sq();
        for b in 1..=3 {
            let mut acc = 0.0;
            let mut count = 0usize;
            for_each_tuple(n, b, |batch| {
                let mut m = StatVector::zeros(model.stat_dim());
                for &i in batch {
                    m.axpy(1.0 / b as f64, &deltas[i]);
                }
                acc += m.sub(&dbar).norm_sq();
                count += 1;
                Ok(())
            })?;
            with = with.max((acc / count as f64 - spread / b as f64).abs());

            if b <= n {
                let all = subsets(n, b);
                let mut acc = 0.0;
                for batch in &all {
                    let mut m = StatVector::zeros(model.stat_dim());
                    for &i in batch {
                        m.axpy(1.0 / b as f64, &deltas[i]);
                    }
                    acc += m.sub(&dbar).norm_sq();
                }
                let expected = if n == 1 {
                    0.0
                } else {
                    spread / b as f64 * (n - b) as f64 / (n - 1) as f64
                };
                without = without.max((acc / all.len() as f64 - expected).abs());
            }
        }
    }
    Ok(vec![
        CheckReport::new("variance/exact n<=4 b<=3 with replacement", with, 1e-12, Unit::Absolute),
        CheckReport::new("variance/exact n<=4 b<=3 without replacement", without, 1e-12, Unit::Absolute),
    ])
}

type Sequence = (&'static str, fn(u64) -> f64);

const SEQUENCES: [Sequence; 3] = [
    ("D_k = k", |k| k as f64),
    ("D_k = k^2", |k| (k * k) as f64),
    ("D_k = 2^-k", |k| 0.5f64.powi(k as i32)),
];

const RHOS: [f64; 2] = [0.3, 0.9];

/// Compensated summation.
fn neumaier(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `E[D_{Ξ-1}] = ρ E[D_Ξ] + (1-ρ) D_0` for `Ξ` geometric on {1, 2, ...} with
/// success probability `1 - ρ`, by truncated summation of both laws.
pub fn geometric_analytic() -> Vec<CheckReport> {
    let mut out = Vec::new();
    for (label, d) in SEQUENCES {
        for rho in RHOS {
            let terms = 4000u64;
            let p = |k: u64| (1.0 - rho) * rho.powi(k as i32 - 1);
            let lhs = neumaier((1..=terms).map(|k| p(k) * d(k - 1)));
            let e_xi = neumaier((1..=terms).map(|k| p(k) * d(k)));
            let rhs = rho * e_xi + (1.0 - rho) * d(0);
            out.push(CheckReport::new(
                format!("geom/analytic {label} rho={rho}"),
                (lhs - rhs).abs(),
                1e-12,
                Unit::Absolute,
            ));
        }
    }
    out
}

/// The same identity by sampling `Ξ` from the solver's epoch-length law:
/// the mean of `D_{Ξ-1} - ρ D_Ξ - (1-ρ) D_0` in standard errors.
pub fn geometric_monte_carlo(trials: u64, seed: u64) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for (s, (label, d)) in SEQUENCES.into_iter().enumerate() {
        for (r, rho) in RHOS.into_iter().enumerate() {
            let mut rng = split_rng(seed, 0x9e0 + (s * 2 + r) as u64);
            // A cap far beyond any plausible draw leaves the law untouched.
            let schedule = EpochSchedule::Geometric {
                rho,
                cap: 1_000_000 * default_geometric_cap(rho),
            };
            let (mut mean, mut m2) = (0.0f64, 0.0f64);
            for k in 1..=trials.max(2) {
                let xi = draw_epoch_length(&mut rng, &schedule, 1).length as u64;
                let z = d(xi - 1) - rho * d(xi) - (1.0 - rho) * d(0);
                let delta = z - mean;
                mean += delta / k as f64;
                m2 += delta * (z - mean);
            }
            let m = trials.max(2) as f64;
            let se = (m2 / (m - 1.0) / m).sqrt();
            out.push(CheckReport::new(
                format!("geom/monte-carlo {label} rho={rho} M={trials}"),
                mean.abs() / se,
                4.0,
                Unit::StdErrors,
            ));
        }
    }
    out
}

fn counter_model(n: usize, seed: u64) -> Result<(GaussianMixture, StatVector)> {
    let (data, _) = synth_gmm(2, 2, n, 4.0, seed)?;
    let model = GaussianMixture::new(data, 2)?;
    let theta = model.init_params(&mut split_rng(seed, 0xc0))?;
    let s = model.initial_statistic(&theta)?;
    Ok((model, s))
}

/// `K_CE = n + n k_out + 2 b k_in k_out` and `K_Opt = k_out + k_in k_out` on
/// five random constant-schedule configurations with full resets.
pub fn counters_constant(seed: u64) -> Result<CheckReport> {
    let mut rng = split_rng(seed, 0xc1);
    let mut worst = 0.0f64;
    for rep in 0..5 {
        let n = rng.random_range(50..=300);
        let b = rng.random_range(1..=20);
        let k_in = rng.random_range(1..=10);
        let k_out = rng.random_range(1..=5);
        let (model, s) = counter_model(n, seed + rep)?;
        let mut cfg = RunConfig::for_n(n);
        cfg.batch = BatchSpec::with_replacement(b);
        cfg.schedule = EpochSchedule::Constant { k_in };
        cfg.reset = ResetPolicy::Full;
        cfg.k_out = k_out;
        cfg.steps = StepSchedule::constant(0.05);
        cfg.warmstart_epochs = 0;
        cfg.diagnostics = false;
        cfg.seed = seed;
        cfg.replication = rep;
        let c = gspider_run(&model, &s, &cfg)?.counters();
        let ce = (n + n * k_out + 2 * b * k_in * k_out) as f64;
        let opt = (k_out + k_in * k_out) as f64;
        worst = worst.max((c.ce as f64 - ce).abs()).max((c.opt as f64 - opt).abs());
    }
    Ok(CheckReport::new("counters/constant 5 configs", worst, 0.0, Unit::Absolute))
}

/// Geometric schedules match the closed forms in expectation:
/// `E[K_CE] = n + n k_out + 2 b k_out E[ξ]`, `E[K_Opt] = k_out + k_out E[ξ]`,
/// with `E[ξ] = (1 - ρ^cap) / (1 - ρ)` for the clamped law.
pub fn counters_geometric(replications: u64, seed: u64) -> Result<Vec<CheckReport>> {
    let (n, b, k_out) = (200usize, 10usize, 3usize);
    let (model, s) = counter_model(n, seed)?;
    let schedule = EpochSchedule::geometric_with_mean(n as f64 / (2 * b) as f64)?;
    let EpochSchedule::Geometric { rho, cap } = schedule else {
        unreachable!()
    };
    let e_xi = (1.0 - rho.powi(cap as i32)) / (1.0 - rho);
    let var_xi = rho / (1.0 - rho).powi(2);
    let mut ce = Vec::new();
    let mut opt = Vec::new();
    for rep in 0..replications {
        let mut cfg = RunConfig::for_n(n);
        cfg.batch = BatchSpec::with_replacement(b);
        cfg.schedule = schedule;
        cfg.k_out = k_out;
        cfg.steps = StepSchedule::constant(0.05);
        cfg.warmstart_epochs = 0;
        cfg.diagnostics = false;
        cfg.seed = seed;
        cfg.replication = rep;
        let c = gspider_run(&model, &s, &cfg)?.counters();
        ce.push(c.ce as f64);
        opt.push(c.opt as f64);
    }
    let m = replications as f64;
    let z = |xs: &[f64], expected: f64, sd: f64| (xs.iter().sum::<f64>() / m - expected).abs() / (sd / m.sqrt());
    let kf = k_out as f64;
    let ce_expected = (n + n * k_out) as f64 + 2.0 * b as f64 * kf * e_xi;
    let ce_sd = 2.0 * b as f64 * (kf * var_xi).sqrt();
    let opt_expected = kf + kf * e_xi;
    let opt_sd = (kf * var_xi).sqrt();
    Ok(vec![
        CheckReport::new(
            format!("counters/geometric K_CE over {replications} runs"),
            z(&ce, ce_expected, ce_sd),
            4.0,
            Unit::StdErrors,
        ),
        CheckReport::new(
            format!("counters/geometric K_Opt over {replications} runs"),
            z(&opt, opt_expected, opt_sd),
            4.0,
            Unit::StdErrors,
        ),
    ])
}
