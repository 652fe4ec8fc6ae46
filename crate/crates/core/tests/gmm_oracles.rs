//! The mixture backend against independent oracles on small problems.

use nalgebra::DMatrix;
use spider_em::data::{synth_gmm, Dataset};
use spider_em::diagnostics::h_norm_sq;
use spider_em::gmm::estimate_lipschitz;
use spider_em::model::lyapunov;
use spider_em::samplers::split_rng;
use spider_em::solvers::batch_em_run;
use spider_em::{mean_field, GaussianMixture, GmmParams, ModelSpec, StatVector};

const TOY: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

fn toy() -> GaussianMixture {
    GaussianMixture::new(Dataset::new(4, 1, TOY.to_vec()).unwrap(), 2).unwrap()
}

fn params(w: [f64; 2], mu: [f64; 2], var: f64) -> GmmParams {
    GmmParams::new(w.to_vec(), vec![vec![mu[0]], vec![mu[1]]], DMatrix::from_element(1, 1, var)).unwrap()
}

fn normal(y: f64, mu: f64, var: f64) -> f64 {
    (-(y - mu) * (y - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `s̄_i(θ)` by direct density evaluation: (r_1, r_2, r_1 y, r_2 y, y²).
fn oracle_stat(y: f64, w: [f64; 2], mu: [f64; 2], var: f64) -> [f64; 5] {
    let a = w[0] * normal(y, mu[0], var);
    let b = w[1] * normal(y, mu[1], var);
    let (r1, r2) = (a / (a + b), b / (a + b));
    [r1, r2, r1 * y, r2 * y, y * y]
}

fn oracle_mean(w: [f64; 2], mu: [f64; 2], var: f64) -> [f64; 5] {
    let mut acc = [0.0; 5];
    for y in TOY {
        for (a, v) in acc.iter_mut().zip(oracle_stat(y, w, mu, var)) {
            *a += v / 4.0;
        }
    }
    acc
}

fn unpack(theta: &GmmParams) -> ([f64; 2], [f64; 2], f64) {
    (
        [theta.weights()[0], theta.weights()[1]],
        [theta.mean(0)[0], theta.mean(1)[0]],
        theta.covariance()[(0, 0)],
    )
}

#[test]
fn mean_field_matches_enumeration() {
    let model = toy();
    for (w, mu, var) in [([0.4, 0.6], [-1.5, 1.2], 0.8), ([0.9, 0.1], [0.3, 0.2], 2.5)] {
        let s = model.initial_statistic(&params(w, mu, var)).unwrap();
        let (w2, mu2, var2) = unpack(&model.t_map(&s).unwrap());
        let expected = oracle_mean(w2, mu2, var2);
        let h = mean_field(&model, &s, None).unwrap();
        for k in 0..5 {
            assert!((h[k] - (expected[k] - s[k])).abs() < 1e-12, "component {k}");
        }
        let h2: f64 = (0..5).map(|k| (expected[k] - s[k]).powi(2)).sum();
        assert!((h_norm_sq(&model, &s).unwrap() - h2).abs() < 1e-12);
    }
}

#[test]
fn mean_field_counts_and_rejects_nan() {
    let model = toy();
    let s = model.initial_statistic(&params([0.5, 0.5], [-1.0, 1.0], 1.0)).unwrap();
    let mut ce = 0;
    mean_field(&model, &s, Some(&mut ce)).unwrap();
    assert_eq!(ce, 4);
    let mut bad = s.clone();
    bad[2] = f64::NAN;
    assert!(mean_field(&model, &bad, None).is_err());
}

#[test]
fn per_example_blocks_from_oracle() {
    let model = toy();
    let theta = params([0.3, 0.7], [0.0, 2.0], 1.0);
    for (i, y) in TOY.iter().enumerate() {
        let s = model.per_example_expectation(i, &theta).unwrap();
        let o = oracle_stat(*y, [0.3, 0.7], [0.0, 2.0], 1.0);
        for k in 0..5 {
            assert!((s[k] - o[k]).abs() < 1e-12);
        }
        assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn objective_matches_direct_evaluation() {
    let model = toy();
    for (w, mu, var) in [([0.4, 0.6], [-1.5, 1.2], 0.8), ([0.05, 0.95], [3.0, -0.5], 0.3)] {
        let direct = -TOY
            .iter()
            .map(|&y| (w[0] * normal(y, mu[0], var) + w[1] * normal(y, mu[1], var)).ln())
            .sum::<f64>()
            / 4.0;
        assert!((model.objective(&params(w, mu, var)) - direct).abs() < 1e-12);
    }
}

/// Minimizes `f` from `x0` with a plain Nelder-Mead simplex.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let d = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..d {
        let mut p = x0.to_vec();
        p[k] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if vals[d] - vals[0] < 1e-15 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|k| pts[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|k| centroid[k] + t * (pts[d][k] - centroid[k])).collect() };
        let r = along(-1.0);
        let fr = f(&r);
        if fr < vals[0] {
            let e = along(-2.0);
            let fe = f(&e);
            if fe < fr {
                pts[d] = e;
                vals[d] = fe;
            } else {
                pts[d] = r;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            pts[d] = r;
            vals[d] = fr;
        } else {
            let c = if fr < vals[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&c);
            if fc < vals[d].min(fr) {
                pts[d] = c;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    pts[i] = (0..d).map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k])).collect();
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    pts[best].clone()
}

#[test]
fn t_map_matches_numerical_m_step() {
    let model = toy();
    let theta0 = params([0.35, 0.65], [-1.2, 0.9], 1.3);
    let s = model.initial_statistic(&theta0).unwrap();
    // -(<s, φ(θ)> - ψ(θ)) in (logit w_1, μ_1, μ_2, log σ²).
    let neg = |x: &[f64]| {
        let w1 = 1.0 / (1.0 + (-x[0]).exp());
        let w = [w1, 1.0 - w1];
        let var = x[3].exp();
        let mut l = -s[4] / (2.0 * var);
        for j in 0..2 {
            let mu = x[1 + j];
            l += s[j] * (w[j].ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln() - mu * mu / (2.0 * var));
            l += s[2 + j] * mu / var;
        }
        -l
    };
    let mut x = vec![(0.35f64 / 0.65).ln(), -1.2, 0.9, 1.3f64.ln()];
    for step in [0.5, 0.05, 0.005, 5e-4] {
        x = nelder_mead(neg, &x, step, 20_000);
    }
    let (w, mu, var) = unpack(&model.t_map(&s).unwrap());
    let w1 = 1.0 / (1.0 + (-x[0]).exp());
    assert!((w[0] - w1).abs() < 1e-6, "{} vs {w1}", w[0]);
    assert!((mu[0] - x[1]).abs() < 1e-6 && (mu[1] - x[2]).abs() < 1e-6);
    assert!((var - x[3].exp()).abs() < 1e-6);
}

#[test]
fn lyapunov_has_continuous_finite_differences() {
    let (data, _) = synth_gmm(2, 2, 200, 3.0, 4).unwrap();
    let model = GaussianMixture::new(data, 2).unwrap();
    let mut rng = split_rng(4, 1);
    for _ in 0..5 {
        let theta = model.init_params(&mut rng).unwrap();
        let s = model.initial_statistic(&theta).unwrap();
        let dir: Vec<f64> = (0..s.len()).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
        let deriv = |h: f64| {
            let mut plus = s.clone();
            let mut minus = s.clone();
            for k in 0..s.len() {
                plus[k] += h * dir[k];
                minus[k] -= h * dir[k];
            }
            (lyapunov(&model, &plus).unwrap() - lyapunov(&model, &minus).unwrap()) / (2.0 * h)
        };
        let (a, b) = (deriv(1e-4), deriv(1e-5));
        if a.abs() < 1e-9 && b.abs() < 1e-9 {
            continue;
        }
        let ratio = a / b;
        assert!((0.5..=2.0).contains(&ratio), "{a} vs {b}");
    }
}

/// EM for a two-component 1-D mixture, written from the textbook updates.
fn reference_em(mut w: [f64; 2], mut mu: [f64; 2], mut var: f64, iters: usize) -> ([f64; 2], [f64; 2], f64) {
    for _ in 0..iters {
        let mut nk = [0.0; 2];
        let mut sy = [0.0; 2];
        let mut r_all = Vec::new();
        for &y in &TOY {
            let a = w[0] * normal(y, mu[0], var);
            let b = w[1] * normal(y, mu[1], var);
            let r = [a / (a + b), b / (a + b)];
            for j in 0..2 {
                nk[j] += r[j];
                sy[j] += r[j] * y;
            }
            r_all.push(r);
        }
        for j in 0..2 {
            w[j] = nk[j] / 4.0;
            mu[j] = sy[j] / nk[j];
        }
        var = TOY
            .iter()
            .zip(&r_all)
            .map(|(&y, r)| r[0] * (y - mu[0]).powi(2) + r[1] * (y - mu[1]).powi(2))
            .sum::<f64>()
            / 4.0;
    }
    (w, mu, var)
}

#[test]
fn batch_em_matches_reference_implementation() {
    let model = toy();
    let init = ([0.3, 0.7], [-0.5, 0.4], 2.0);
    let trace = batch_em_run(&model, &params(init.0, init.1, init.2), 500, 0.0).unwrap();
    let (w, mu, var) = reference_em(init.0, init.1, init.2, 2000);
    let theta = model.t_map(&trace.final_stat).unwrap();
    for (i, &y) in TOY.iter().enumerate() {
        let r = theta.responsibilities(&[y]);
        let o = oracle_stat(y, w, mu, var);
        assert!((r[0] - o[0]).abs() < 1e-8 && (r[1] - o[1]).abs() < 1e-8, "example {i}");
    }
    for (k, r) in trace.records.iter().enumerate() {
        assert_eq!(r.cum_ce, 4 * (k as u64 + 2));
    }
}

#[test]
fn batch_em_fixed_point() {
    let (data, _) = synth_gmm(2, 2, 300, 5.0, 8).unwrap();
    let model = GaussianMixture::new(data, 2).unwrap();
    let theta = model.init_params(&mut split_rng(8, 0)).unwrap();
    let trace = batch_em_run(&model, &theta, 5000, 1e-10).unwrap();
    let s = &trace.final_stat;
    assert!(mean_field(&model, s, None).unwrap().norm() <= 1e-8);
    assert!(h_norm_sq(&model, s).unwrap() <= 1e-16);
    assert_eq!(h_norm_sq(&model, s).unwrap(), h_norm_sq(&model, s).unwrap());

    // Restarted at the fixed point, EM stops at once without moving.
    let again = batch_em_run(&model, &trace.final_params, 100, 1e-8).unwrap();
    assert_eq!(again.records.len(), 1);
    assert!(again.final_stat.max_abs_diff(s) < 1e-9);
}

#[test]
fn em_lyapunov_along_batch_sequence() {
    let (data, _) = synth_gmm(3, 2, 400, 2.0, 12).unwrap();
    let model = GaussianMixture::new(data, 3).unwrap();
    let theta = model.init_params(&mut split_rng(12, 0)).unwrap();
    let mut s = model.initial_statistic(&theta).unwrap();
    let mut w = lyapunov(&model, &s).unwrap();
    for _ in 0..50 {
        s = model.full_expectation(&model.t_map(&s).unwrap()).unwrap();
        let next = lyapunov(&model, &s).unwrap();
        assert!(next <= w + 1e-10);
        w = next;
    }
}

#[test]
fn mean_field_is_average_minus_s_in_any_order() {
    let (data, _) = synth_gmm(2, 3, 150, 3.0, 2).unwrap();
    let model = GaussianMixture::new(data, 2).unwrap();
    let theta = model.init_params(&mut split_rng(2, 0)).unwrap();
    let s = model.initial_statistic(&theta).unwrap();
    let t = model.t_map(&s).unwrap();
    let mut acc = StatVector::zeros(s.len());
    for i in (0..150).rev() {
        acc.axpy(1.0 / 150.0, &model.per_example_expectation(i, &t).unwrap());
    }
    let h = mean_field(&model, &s, None).unwrap();
    assert!(h.max_abs_diff(&acc.sub(&s)) < 1e-12);
}

#[test]
fn em_recovers_well_separated_means() {
    let (data, truth) = synth_gmm(3, 2, 3000, 8.0, 21).unwrap();
    let model = GaussianMixture::new(data, 3).unwrap();
    let theta = model.init_params(&mut split_rng(21, 0)).unwrap();
    let fit = batch_em_run(&model, &theta, 500, 1e-10).unwrap().final_params;
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let best = perms
        .iter()
        .map(|p| (0..3).map(|j| dist(fit.mean(p[j]), truth.mean(j))).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    assert!(best < 0.2, "worst matched mean error {best}");
}

#[test]
fn lipschitz_estimate_within_factor_two_of_jacobian_scan() {
    let model = toy();
    let theta = params([0.4, 0.6], [-1.0, 1.5], 1.0);
    let reference = model.initial_statistic(&theta).unwrap();
    let q = reference.len();
    // Spectral norm of the finite-difference Jacobian of s ↦ s̄_i∘T(s),
    // maximized over examples and over a grid covering the probe ball.
    let radius = 1e-3;
    let map = |s: &StatVector, i: usize| model.per_example_expectation(i, &model.t_map(s).unwrap()).unwrap();
    let mut scan = 0.0f64;
    let mut grid = vec![reference.clone()];
    for c in 0..q {
        for sign in [-1.0, 1.0] {
            let mut p = reference.clone();
            p[c] += sign * radius;
            grid.push(p);
        }
    }
    for base in &grid {
        for i in 0..4 {
            let h = 1e-6;
            let mut jac = DMatrix::zeros(q, q);
            for c in 0..q {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[c] += h;
                minus[c] -= h;
                let col = map(&plus, i).sub(&map(&minus, i));
                for r in 0..q {
                    jac[(r, c)] = col[r] / (2.0 * h);
                }
            }
            scan = scan.max(jac.svd(false, false).singular_values.max());
        }
    }
    let est = estimate_lipschitz(&model, &reference, 16, radius, 3).unwrap();
    assert!(est > 0.0);
    assert!(est <= 2.0 * scan && est >= 0.5 * scan, "secant {est} vs scan {scan}");
}
