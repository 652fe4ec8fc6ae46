use super::ResetPolicy;
use crate::error::{Error, Result};
use crate::samplers::EpochSchedule;

/// The six epoch-length × reset combinations.
pub const SPIDER_STRATEGIES: [&str; 6] = ["full-geom", "half-geom", "quad-geom", "full-ctt", "half-ctt", "quad-ctt"];

/// Epoch schedule and reset policy of a named strategy for `n` examples and
/// batch size `b`.
///
/// `full-*` resets on the full data, `half-*` on a fresh half of it, `quad-*`
/// on `min(n, max(20 t², n/50))` examples. `*-ctt` runs `ceil(n / 2b)` inner
/// iterations; `*-geom` draws geometric lengths with mean `n / 2b` (for
/// `quad-geom`, the growing reset size over `2b`).
pub fn spider_strategy(name: &str, n: usize, b: usize) -> Result<(EpochSchedule, ResetPolicy)> {
    if n == 0 || b == 0 {
        return Err(Error::config("strategy needs n >= 1 and b >= 1"));
    }
    let (reset_kind, length_kind) = name
        .split_once('-')
        .ok_or_else(|| Error::config(format!("unknown strategy {name:?}")))?;
    let reset = match reset_kind {
        "full" => ResetPolicy::Full,
        "half" => ResetPolicy::Fraction(0.5),
        "quad" => ResetPolicy::Growth { c1: 20.0, c2: 50.0 },
        _ => return Err(Error::config(format!("unknown strategy {name:?}"))),
    };
    let mean = n as f64 / (2.0 * b as f64);
    let schedule = match (reset_kind, length_kind) {
        (_, "ctt") => EpochSchedule::Constant { k_in: n.div_ceil(2 * b) },
        ("quad", "geom") => EpochSchedule::GeometricGrowth {
            c1: 20.0,
            c2: 50.0,
            n,
            batch: b,
        },
        // A mean of at most one leaves a single inner iteration.
        (_, "geom") if mean <= 1.0 => EpochSchedule::Constant { k_in: 1 },
        (_, "geom") => EpochSchedule::geometric_with_mean(mean)?,
        _ => return Err(Error::config(format!("unknown strategy {name:?}"))),
    };
    Ok((schedule, reset))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_ctt_inner_loops() {
        let (s, r) = spider_strategy("full-ctt", 60_000, 245).unwrap();
        assert_eq!(s, EpochSchedule::Constant { k_in: 123 });
        assert_eq!(r, ResetPolicy::Full);
    }

    #[test]
    fn full_geom_mean_is_half_sqrt_n() {
        let (s, _) = spider_strategy("full-geom", 60_000, 245).unwrap();
        let mean = s.mean_length(1);
        assert!((mean - 60_000.0 / 490.0).abs() < 1e-9);
        assert!((mean - 122.5).abs() < 0.1);
        // Mean cost of the inner loop: 2 b E[ξ] = n.
        assert!((2.0 * 245.0 * mean - 60_000.0).abs() < 1e-6);
    }

    #[test]
    fn quad_geom_first_epoch() {
        let (s, r) = spider_strategy("quad-geom", 60_000, 245).unwrap();
        assert!((s.mean_length(1) - 1200.0 / 490.0).abs() < 1e-12);
        assert_eq!(r, ResetPolicy::Growth { c1: 20.0, c2: 50.0 });
    }

    #[test]
    fn half_strategies() {
        let (_, r) = spider_strategy("half-geom", 100, 10).unwrap();
        assert_eq!(r, ResetPolicy::Fraction(0.5));
    }

    #[test]
    fn unknown_names() {
        for bad in ["full", "full-geo", "tri-ctt", "", "online-em"] {
            assert!(spider_strategy(bad, 100, 10).is_err(), "{bad}");
        }
    }
}
