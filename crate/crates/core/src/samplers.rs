//! Randomness: mini-batches, epoch lengths and reproducible RNG streams.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};

/// The RNG used by every run. ChaCha output is specified bit-for-bit, so a
/// `(seed, stream)` pair produces the same draws on every platform.
pub type StreamRng = ChaCha8Rng;

/// An independent, reproducible stream for `(master_seed, stream_id)`.
pub fn split_rng(master_seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

/// Mini-batch shape: size `b` and sampling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub size: usize,
    pub replacement: bool,
}

impl BatchSpec {
    pub fn with_replacement(size: usize) -> Self {
        BatchSpec {
            size,
            replacement: true,
        }
    }

    pub fn without_replacement(size: usize) -> Self {
        BatchSpec {
            size,
            replacement: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !self.replacement && self.size > n {
            return Err(Error::config(format!(
                "batch size {} exceeds n = {} when sampling without replacement",
                self.size, n
            )));
        }
        Ok(())
    }
}

/// Draws a mini-batch of indices in `0..n`, returned in ascending order.
///
/// With replacement the batch is a multiset of `b` i.i.d. uniform indices;
/// without replacement it is a uniform `b`-subset. A full subset (`b == n`)
/// consumes no randomness.
pub fn draw_minibatch<R: Rng + ?Sized>(rng: &mut R, n: usize, spec: BatchSpec) -> Result<Vec<usize>> {
    spec.validate(n)?;
    if n == 0 {
        return Err(Error::config("cannot sample from an empty dataset"));
    }
    let mut out = if spec.replacement {
        (0..spec.size).map(|_| rng.random_range(0..n)).collect::<Vec<_>>()
    } else if spec.size == n {
        (0..n).collect()
    } else {
        index::sample(rng, n, spec.size).into_vec()
    };
    out.sort_unstable();
    Ok(out)
}

/// Law of the number of inner iterations of an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpochSchedule {
    /// Deterministic `k_in` inner iterations.
    Constant { k_in: usize },
    /// Geometric on {1, 2, ...} with success probability `1 - rho`, clamped
    /// at `cap`.
    Geometric { rho: f64, cap: usize },
    /// Geometric with epoch-dependent mean
    /// `min(n, max(c1 t^2, n / c2)) / (2 b)`. Epochs whose mean is at most
    /// one run a single inner iteration.
    GeometricGrowth {
        c1: f64,
        c2: f64,
        n: usize,
        batch: usize,
    },
}

/// Default clamp for a geometric schedule: `50 * ceil(1 / (1 - rho))`.
pub fn default_geometric_cap(rho: f64) -> usize {
    50 * (1.0 / (1.0 - rho)).ceil() as usize
}

/// Size of a growing batch, `min(n, max(c1 t^2, n / c2))`, rounded to the
/// nearest integer in `[1, n]`.
pub fn growth_size(c1: f64, c2: f64, n: usize, t: usize) -> usize {
    let nf = n as f64;
    let raw = nf.min((c1 * (t * t) as f64).max(nf / c2));
    (raw.round() as usize).clamp(1, n)
}

impl EpochSchedule {
    /// Geometric schedule with the given mean `1 / (1 - rho)` and default cap.
    pub fn geometric_with_mean(mean: f64) -> Result<Self> {
        if !(mean > 1.0) || !mean.is_finite() {
            return Err(Error::config(format!(
                "geometric epoch length needs a mean above 1, got {mean}"
            )));
        }
        let rho = 1.0 - 1.0 / mean;
        Ok(EpochSchedule::Geometric {
            rho,
            cap: default_geometric_cap(rho),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EpochSchedule::Constant { k_in: 0 } => {
                Err(Error::config("constant schedule needs k_in >= 1"))
            }
            EpochSchedule::Geometric { rho, .. } if !(rho > 0.0 && rho < 1.0) => Err(Error::config(
                format!("geometric schedule needs 0 < rho < 1, got {rho}"),
            )),
            EpochSchedule::Geometric { cap: 0, .. } => {
                Err(Error::config("geometric schedule needs cap >= 1"))
            }
            EpochSchedule::GeometricGrowth { c1, c2, n, batch }
                if !(c1 > 0.0 && c2 > 0.0) || n == 0 || batch == 0 =>
            {
                Err(Error::config("growth schedule needs c1, c2 > 0 and n, b >= 1"))
            }
            _ => Ok(()),
        }
    }

    /// Expected number of inner iterations at epoch `t` (1-based), ignoring
    /// the clamp.
    pub fn mean_length(&self, t: usize) -> f64 {
        match *self {
            EpochSchedule::Constant { k_in } => k_in as f64,
            EpochSchedule::Geometric { rho, .. } => 1.0 / (1.0 - rho),
            EpochSchedule::GeometricGrowth { c1, c2, n, batch } => {
                let m = growth_size(c1, c2, n, t) as f64 / (2.0 * batch as f64);
                m.max(1.0)
            }
        }
    }
}

/// One epoch-length draw; `clamped` records a truncation at the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochDraw {
    pub length: usize,
    pub clamped: bool,
}

fn draw_geometric<R: Rng + ?Sized>(rng: &mut R, rho: f64, cap: usize) -> EpochDraw {
    // rand_distr counts failures before the first success.
    let failures = Geometric::new(1.0 - rho)
        .expect("success probability in (0, 1]")
        .sample(rng);
    let length = failures.saturating_add(1);
    if length > cap as u64 {
        EpochDraw {
            length: cap,
            clamped: true,
        }
    } else {
        EpochDraw {
            length: length as usize,
            clamped: false,
        }
    }
}

/// Number of inner iterations of epoch `t` (1-based).
pub fn draw_epoch_length<R: Rng + ?Sized>(rng: &mut R, schedule: &EpochSchedule, t: usize) -> EpochDraw {
    match *schedule {
        EpochSchedule::Constant { k_in } => EpochDraw {
            length: k_in,
            clamped: false,
        },
        EpochSchedule::Geometric { rho, cap } => draw_geometric(rng, rho, cap),
        EpochSchedule::GeometricGrowth { .. } => {
            let mean = schedule.mean_length(t);
            if mean <= 1.0 {
                EpochDraw {
                    length: 1,
                    clamped: false,
                }
            } else {
                let rho = 1.0 - 1.0 / mean;
                draw_geometric(rng, rho, default_geometric_cap(rho))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_subset_is_identity() {
        let mut rng = split_rng(1, 0);
        let b = draw_minibatch(&mut rng, 7, BatchSpec::without_replacement(7)).unwrap();
        assert_eq!(b, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn zero_batch_rejected() {
        let mut rng = split_rng(1, 0);
        assert!(draw_minibatch(&mut rng, 5, BatchSpec::with_replacement(0)).is_err());
        assert!(draw_minibatch(&mut rng, 5, BatchSpec::without_replacement(6)).is_err());
    }

    #[test]
    fn without_replacement_has_distinct_indices() {
        let mut rng = split_rng(3, 9);
        for _ in 0..100 {
            let b = draw_minibatch(&mut rng, 20, BatchSpec::without_replacement(8)).unwrap();
            assert_eq!(b.len(), 8);
            assert!(b.windows(2).all(|w| w[0] < w[1]));
            assert!(b.iter().all(|&i| i < 20));
        }
    }

    #[test]
    fn single_index_frequencies() {
        // Binomial(3e5, 1/3) per index; 4 sigma band.
        let draws = 300_000usize;
        let mut rng = split_rng(11, 2);
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let b = draw_minibatch(&mut rng, 3, BatchSpec::with_replacement(1)).unwrap();
            counts[b[0]] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn tiny_rho_gives_one() {
        let mut rng = split_rng(5, 5);
        let s = EpochSchedule::Geometric { rho: 1e-12, cap: 100 };
        for _ in 0..1000 {
            assert_eq!(draw_epoch_length(&mut rng, &s, 1).length, 1);
        }
    }

    #[test]
    fn cap_clamps() {
        let mut rng = split_rng(5, 6);
        let s = EpochSchedule::Geometric { rho: 0.9, cap: 5 };
        let mut saw_clamp = false;
        for _ in 0..10_000 {
            let d = draw_epoch_length(&mut rng, &s, 1);
            assert!(d.length <= 5 && d.length >= 1);
            saw_clamp |= d.clamped;
        }
        assert!(saw_clamp);
    }

    #[test]
    fn geometric_mean_matches_k_in() {
        // E[X] = k_in, Var[X] = rho / (1 - rho)^2 for X ~ G*(1 - rho).
        let k_in = 8.0;
        let rho = 1.0 - 1.0 / k_in;
        let s = EpochSchedule::Geometric { rho, cap: usize::MAX };
        let draws = 1_000_000;
        let mut rng = split_rng(17, 1);
        let total: f64 = (0..draws)
            .map(|_| draw_epoch_length(&mut rng, &s, 1).length as f64)
            .sum();
        let mean = total / draws as f64;
        let sd = (rho / (1.0 - rho).powi(2)).sqrt();
        assert!((mean - k_in).abs() <= 4.0 * sd / (draws as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn streams_are_reproducible_and_separated() {
        let a: Vec<u64> = {
            let mut r = split_rng(42, 1);
            (0..100).map(|_| r.random()).collect()
        };
        let a2: Vec<u64> = {
            let mut r = split_rng(42, 1);
            (0..100).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = split_rng(42, 2);
            (0..100).map(|_| r.random()).collect()
        };
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }

    #[test]
    fn replication_streams_pairwise_distinct() {
        let seqs: Vec<Vec<u32>> = (0..30)
            .map(|id| {
                let mut r = split_rng(2024, id);
                (0..100).map(|_| r.random()).collect()
            })
            .collect();
        for i in 0..seqs.len() {
            for j in i + 1..seqs.len() {
                assert_ne!(seqs[i], seqs[j], "streams {i} and {j} collide");
            }
        }
    }

    #[test]
    fn growth_schedule_means() {
        // n = 6e4, b = 245: t = 1 gives max(20, 1200) / 490.
        let s = EpochSchedule::GeometricGrowth {
            c1: 20.0,
            c2: 50.0,
            n: 60_000,
            batch: 245,
        };
        assert!((s.mean_length(1) - 1200.0 / 490.0).abs() < 1e-12);
        assert_eq!(growth_size(20.0, 50.0, 60_000, 100), 60_000);
        assert_eq!(growth_size(20.0, 50.0, 60_000, 10), 2000);
    }

    #[test]
    fn schedule_validation() {
        assert!(EpochSchedule::Constant { k_in: 0 }.validate().is_err());
        assert!(EpochSchedule::Geometric { rho: 1.0, cap: 3 }.validate().is_err());
        assert!(EpochSchedule::Geometric { rho: 0.5, cap: 0 }.validate().is_err());
        assert!(EpochSchedule::Geometric { rho: 0.5, cap: 3 }.validate().is_ok());
        assert_eq!(default_geometric_cap(0.5), 100);
    }
}
