use spider_em::data::{synth_gmm, Dataset};
use spider_em::samplers::{split_rng, BatchSpec, EpochSchedule};
use spider_em::solvers::{
    ceil_sqrt, gspider_run, online_em_epochs, online_em_run, randomized_terminate, spider_strategy, OnlineSteps,
    ResetPolicy, RunConfig, StepSchedule, StepSize, Termination,
};
use spider_em::{mean_field, Counters, GaussianMixture, ModelSpec, StatVector};

fn setup(n: usize, seed: u64) -> (GaussianMixture, StatVector) {
    let (data, _) = synth_gmm(3, 2, n, 4.0, seed).unwrap();
    let model = GaussianMixture::new(data, 3).unwrap();
    let theta = model.init_params(&mut split_rng(seed, 0)).unwrap();
    let s = model.initial_statistic(&theta).unwrap();
    (model, s)
}

fn spider_config(n: usize, strategy: &str) -> RunConfig {
    let b = ceil_sqrt(n);
    let (schedule, reset) = spider_strategy(strategy, n, b).unwrap();
    let mut cfg = RunConfig::for_n(n);
    cfg.schedule = schedule;
    cfg.reset = reset;
    cfg.k_out = 6;
    cfg.seed = 17;
    cfg
}

#[test]
fn online_em_unit_step_full_batch_is_em() {
    let (model, s0) = setup(120, 1);
    let mut s = s0.clone();
    let steps = OnlineSteps {
        gamma: 1.0,
        batch: BatchSpec::without_replacement(120),
        updates_per_epoch: 1,
    };
    let mut c = Counters::default();
    online_em_epochs(&model, &mut s, steps, 1, &mut split_rng(0, 0), &mut c, |_, _, _| Ok(())).unwrap();
    let em = model.full_expectation(&model.t_map(&s0).unwrap()).unwrap();
    assert!(s.max_abs_diff(&em) < 1e-14);
    assert_eq!(c, Counters { ce: 120, opt: 1 });
}

#[test]
fn online_em_zero_step_keeps_statistic() {
    let (model, s0) = setup(100, 2);
    let mut s = s0.clone();
    let steps = OnlineSteps {
        gamma: 0.0,
        batch: BatchSpec::with_replacement(10),
        updates_per_epoch: 10,
    };
    let mut c = Counters::default();
    online_em_epochs(&model, &mut s, steps, 3, &mut split_rng(0, 0), &mut c, |_, _, _| Ok(())).unwrap();
    assert_eq!(s, s0);
}

#[test]
fn online_em_epoch_cost() {
    let n = 500;
    let (model, s0) = setup(n, 3);
    let cfg = RunConfig {
        k_out: 4,
        ..RunConfig::for_n(n)
    };
    let trace = online_em_run(&model, &s0, &cfg).unwrap();
    let r = ceil_sqrt(n) as u64;
    for rec in &trace.records {
        assert_eq!(rec.cum_ce, rec.epoch as u64 * r * r);
    }
    // The warm start is reported on its own.
    assert_eq!(trace.warmstart.ce, 2 * r * r);
}

#[test]
fn online_em_rejects_oversized_step() {
    let (model, s0) = setup(100, 3);
    let mut cfg = RunConfig::for_n(100);
    cfg.steps = StepSchedule::constant(1.5);
    assert!(online_em_run(&model, &s0, &cfg).is_err());
}

#[test]
fn fraction_one_is_trace_identical_to_full() {
    let (model, s0) = setup(300, 4);
    let mut cfg = spider_config(300, "full-geom");
    let full = gspider_run(&model, &s0, &cfg).unwrap();
    cfg.reset = ResetPolicy::Fraction(1.0);
    let frac = gspider_run(&model, &s0, &cfg).unwrap();
    assert_eq!(full.records.len(), frac.records.len());
    for (a, b) in full.records.iter().zip(&frac.records) {
        assert_eq!((a.xi, a.cum_ce, a.cum_opt, a.reset_size), (b.xi, b.cum_ce, b.cum_opt, b.reset_size));
        assert_eq!(a.end_stat, b.end_stat);
        assert_eq!(a.h_norm_sq.to_bits(), b.h_norm_sq.to_bits());
    }
}

#[test]
fn full_reset_estimator_is_the_mean_field_at_hand_off() {
    let (model, s0) = setup(300, 5);
    let cfg = spider_config(300, "full-ctt");
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    for r in &trace.records {
        let h = mean_field(&model, &r.start_stat, None).unwrap();
        let incremental = r.reset_estimate.sub(&r.start_stat);
        assert!(h.max_abs_diff(&incremental) < 1e-10);
    }
    for w in trace.records.windows(2) {
        assert_eq!(w[1].start_stat, w[0].end_stat);
    }
}

#[test]
fn constant_schedule_counters_per_epoch() {
    let n = 400;
    let (model, s0) = setup(n, 6);
    let cfg = spider_config(n, "full-ctt");
    let b = cfg.batch.size;
    let k_in = n.div_ceil(2 * b);
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    for r in &trace.records {
        let t = r.epoch;
        assert_eq!(r.cum_ce as usize, n + n * t + 2 * b * k_in * t);
        assert_eq!(r.cum_opt as usize, t + k_in * t);
        assert_eq!(r.xi, k_in);
        assert_eq!(r.reset_size, n);
    }
}

#[test]
fn counters_are_nondecreasing_for_every_strategy() {
    let n = 300;
    let (model, s0) = setup(n, 7);
    for name in spider_em::solvers::SPIDER_STRATEGIES {
        let trace = gspider_run(&model, &s0, &spider_config(n, name)).unwrap();
        let mut prev = (0, 0);
        for r in &trace.records {
            assert!(r.cum_ce >= prev.0 && r.cum_opt > prev.1, "{name}");
            assert!(r.end_stat.first_non_finite().is_none());
            prev = (r.cum_ce, r.cum_opt);
        }
    }
}

#[test]
fn half_reset_subsets_have_half_the_data() {
    let (model, s0) = setup(301, 8);
    let trace = gspider_run(&model, &s0, &spider_config(301, "half-ctt")).unwrap();
    assert!(trace.records.iter().all(|r| r.reset_size == 151));
}

#[test]
fn quad_reset_sizes_grow() {
    let n = 5000;
    let (model, s0) = setup(n, 9);
    let mut cfg = spider_config(n, "quad-ctt");
    cfg.k_out = 20;
    cfg.diagnostics = false;
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    let sizes: Vec<usize> = trace.records.iter().map(|r| r.reset_size).collect();
    assert_eq!(sizes[0], 100);
    assert_eq!(sizes[2], 180);
    assert_eq!(sizes[19], 5000);
}

#[test]
fn reset_step_moves_towards_reset_estimate() {
    let (model, s0) = setup(200, 10);
    let mut cfg = spider_config(200, "full-ctt");
    cfg.steps = StepSchedule {
        inner: StepSize::Fixed(0.05),
        reset: 0.3,
    };
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    let first = &trace.records[0];
    assert_eq!(first.after_reset_stat, first.start_stat);
    for r in &trace.records[1..] {
        let expected = r.start_stat.step_towards(&r.reset_estimate, 0.3);
        assert!(r.after_reset_stat.max_abs_diff(&expected) < 1e-15);
        assert!(r.after_reset_stat != r.start_stat);
    }
}

#[test]
fn clamped_epochs_are_flagged() {
    let (model, s0) = setup(200, 11);
    let mut cfg = spider_config(200, "full-geom");
    cfg.schedule = EpochSchedule::Geometric { rho: 0.95, cap: 2 };
    cfg.k_out = 10;
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    assert!(trace.records.iter().all(|r| r.xi <= 2));
    assert!(trace.records.iter().any(|r| r.xi_clamped));
    assert!(trace.records.iter().all(|r| !r.xi_clamped || r.xi == 2));
}

#[test]
fn runs_are_reproducible() {
    let (model, s0) = setup(300, 12);
    let cfg = spider_config(300, "quad-geom");
    let a = gspider_run(&model, &s0, &cfg).unwrap();
    let b = gspider_run(&model, &s0, &cfg).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.xi, x.cum_ce, &x.end_stat), (y.xi, y.cum_ce, &y.end_stat));
    }
    let mut other = cfg.clone();
    other.replication = 1;
    let c = gspider_run(&model, &s0, &other).unwrap();
    assert_ne!(a.final_stat, c.final_stat);
}

#[test]
fn auto_step_rule_gives_positive_gamma() {
    let (model, s0) = setup(200, 13);
    let mut cfg = spider_config(200, "full-ctt");
    cfg.steps.inner = StepSize::Auto { alpha: 0.5 };
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    assert!(trace.gamma_inner > 0.0 && trace.gamma_inner.is_finite());
}

#[test]
fn randomized_termination_picks_stored_statistics() {
    let (model, s0) = setup(200, 14);
    let mut cfg = spider_config(200, "full-ctt");
    cfg.k_out = 1;
    cfg.termination = Termination::RandomizedUniform;
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    let (t, s) = trace.terminal.clone().unwrap();
    assert_eq!(t, 1);
    assert_eq!(s, trace.records[0].end_stat);

    cfg.k_out = 4;
    let trace = gspider_run(&model, &s0, &cfg).unwrap();
    let mut rng = split_rng(3, 3);
    let mut counts = [0u32; 4];
    let draws = 100_000;
    for _ in 0..draws {
        let (t, s) = randomized_terminate(&trace, &mut rng).unwrap();
        assert_eq!(s, trace.records[t - 1].end_stat);
        counts[t - 1] += 1;
    }
    let sd = (draws as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - draws as f64 / 4.0).abs() <= 4.0 * sd);
    }
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let (model, s0) = setup(50, 15);
    let mut cfg = RunConfig::for_n(50);
    cfg.batch = BatchSpec::without_replacement(80);
    cfg.k_out = 0;
    match gspider_run(&model, &s0, &cfg) {
        Err(spider_em::Error::InvalidConfig(v)) => assert_eq!(v.len(), 2, "{v:?}"),
        other => panic!("{other:?}"),
    }
    let bad = StatVector::from_vec(vec![f64::NAN; s0.len()]);
    assert!(gspider_run(&model, &bad, &RunConfig::for_n(50)).is_err());
}

#[test]
fn tiny_problem_without_warm_start() {
    let data = Dataset::new(4, 1, vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
    let model = GaussianMixture::new(data, 2).unwrap();
    let theta = model.init_params(&mut split_rng(0, 0)).unwrap();
    let s = model.initial_statistic(&theta).unwrap();
    let mut cfg = RunConfig::for_n(4);
    cfg.warmstart_epochs = 0;
    cfg.k_out = 3;
    let trace = gspider_run(&model, &s, &cfg).unwrap();
    assert_eq!(trace.warmstart, Counters::default());
    assert_eq!(trace.records.len(), 3);
}
