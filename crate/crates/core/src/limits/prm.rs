//! Poisson random measure of jump sizes and the straddle count `R(u)`.
//!
//! Points `(t_k, j_k)` arrive at rate `delta^-alpha / c` on the time axis with
//! Pareto marks `j_k = delta U^(-1/alpha)`, i.e. the restriction to `j > delta`
//! of the measure `dt x (alpha / c) x^(-alpha - 1) dx`.
//!
//! `R(u)` counts points with `X_alpha(t_k) <= u < X_alpha(t_k) + j_k`, where
//! `X_alpha` is an independent stable subordinator. Only the values of `X_alpha`
//! at the point times matter, and between consecutive points those are
//! independent stable increments, so the count is simulated exactly without
//! a time grid.

use rand::Rng;
use rand_distr::{Distribution, Exp, Open01, Poisson};

use super::stable::sample_positive_stable;
use super::subordinator::increment_scale;
use crate::error::{Error, Result};

/// Truncation level relative to `u` used when the caller does not pick one.
pub const DEFAULT_DELTA_FACTOR: f64 = 1e-4;

/// Most points generated for a single realization.
pub const MAX_POINTS: usize = 50_000_000;

fn check(alpha: f64, c: f64, delta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfDomain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::OutOfDomain(format!("c must be positive, got {c}")));
    }
    if !(delta > 0.0) {
        return Err(Error::OutOfDomain(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

fn pareto_mark<R: Rng + ?Sized>(alpha: f64, delta: f64, rng: &mut R) -> f64 {
    delta * rng.sample::<f64, _>(Open01).powf(-1.0 / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedPoint {
    pub time: f64,
    pub mark: f64,
}

/// Points of the measure on `[0, horizon] x (delta, inf)`, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPointSet {
    pub alpha: f64,
    pub c: f64,
    pub delta: f64,
    pub horizon: f64,
    pub points: Vec<MarkedPoint>,
}

impl MarkedPointSet {
    /// Keep the points with marks above `delta`; the result is a realization of
    /// the measure truncated at the coarser level.
    pub fn thin(&self, delta: f64) -> Result<MarkedPointSet> {
        if delta < self.delta {
            return Err(Error::OutOfDomain(format!(
                "cannot thin to {delta} below the current truncation {}",
                self.delta
            )));
        }
        Ok(MarkedPointSet {
            delta,
            points: self.points.iter().copied().filter(|p| p.mark > delta).collect(),
            ..*self
        })
    }
}

pub fn sample_prm<R: Rng + ?Sized>(
    alpha: f64,
    c: f64,
    horizon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<MarkedPointSet> {
    check(alpha, c, delta)?;
    let mean = horizon * delta.powf(-alpha) / c;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::OutOfDomain(e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    if count > MAX_POINTS {
        return Err(Error::CapacityExceeded {
            requested: count as u64,
            capacity: MAX_POINTS as u64,
        });
    }
    let mut times: Vec<f64> = (0..count).map(|_| horizon * rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    let points = times
        .into_iter()
        .map(|time| MarkedPoint {
            time,
            mark: pareto_mark(alpha, delta, rng),
        })
        .collect();
    Ok(MarkedPointSet {
        alpha,
        c,
        delta,
        horizon,
        points,
    })
}

/// The jumps `(X_alpha(t_k), j_k)` for all points with `X_alpha(t_k) <= level`.
#[derive(Debug, Clone, PartialEq)]
pub struct StraddleSet {
    pub delta: f64,
    pub level: f64,
    pub jumps: Vec<(f64, f64)>,
}

impl StraddleSet {
    /// `R^(delta')(u)` for `u <= level` and `delta' >= delta`.
    pub fn count(&self, u: f64, delta: f64) -> u64 {
        debug_assert!(u <= self.level && delta >= self.delta);
        self.jumps
            .iter()
            .filter(|&&(x, j)| j > delta && x <= u && u < x + j)
            .count() as u64
    }
}

pub fn sample_straddles<R: Rng + ?Sized>(
    alpha: f64,
    c: f64,
    level: f64,
    delta: f64,
    rng: &mut R,
) -> Result<StraddleSet> {
    check(alpha, c, delta)?;
    let rate = delta.powf(-alpha) / c;
    let gaps = Exp::new(rate).map_err(|e| Error::OutOfDomain(e.to_string()))?;
    let mut jumps = Vec::new();
    let mut x = 0.0;
    loop {
        let dt = gaps.sample(rng);
        x += increment_scale(alpha, dt) * sample_positive_stable(alpha, rng);
        if x > level {
            break;
        }
        if jumps.len() == MAX_POINTS {
            return Err(Error::CapacityExceeded {
                requested: MAX_POINTS as u64 + 1,
                capacity: MAX_POINTS as u64,
            });
        }
        jumps.push((x, pareto_mark(alpha, delta, rng)));
    }
    Ok(StraddleSet { delta, level, jumps })
}

/// One draw of `R^(delta)(u)`.
pub fn sample_r<R: Rng + ?Sized>(alpha: f64, c: f64, u: f64, delta: f64, rng: &mut R) -> Result<u64> {
    Ok(sample_straddles(alpha, c, u, delta, rng)?.count(u, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{chi2_gof, geometric_pmf};

    #[test]
    fn point_count_and_marks() {
        let mut rng = stream(1);
        let (alpha, c, delta) = (0.5, 2.0, 0.01);
        let n = 2000;
        let mut total = 0usize;
        let mut above = 0usize;
        for _ in 0..n {
            let set = sample_prm(alpha, c, 1.0, delta, &mut rng).unwrap();
            assert!(set.points.windows(2).all(|w| w[0].time <= w[1].time));
            assert!(set.points.iter().all(|p| p.mark > delta && p.time <= 1.0));
            total += set.points.len();
            above += set.points.iter().filter(|p| p.mark > 4.0 * delta).count();
        }
        let mean = total as f64 / n as f64;
        assert!((mean / 5.0 - 1.0).abs() < 0.03, "{mean}");
        // P(mark > 4 delta) = 4^-alpha = 1/2
        let frac = above as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.01);
    }

    #[test]
    fn thinning_is_consistent() {
        let mut rng = stream(2);
        let set = sample_prm(0.4, 1.0, 3.0, 1e-3, &mut rng).unwrap();
        let thin = set.thin(1e-2).unwrap();
        assert!(thin.points.iter().all(|p| p.mark > 1e-2));
        assert_eq!(
            thin.points.len(),
            set.points.iter().filter(|p| p.mark > 1e-2).count()
        );
        assert!(set.thin(1e-4).is_err());
        assert!(sample_prm(0.4, 0.0, 1.0, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn straddle_count_is_geometric() {
        let mut rng = stream(3);
        for (alpha, c) in [(0.5, 1.0), (0.3, 2.0)] {
            let xs: Vec<u64> = (0..20_000)
                .map(|_| sample_r(alpha, c, 1.0, 1e-4, &mut rng).unwrap())
                .collect();
            let r = chi2_gof(&xs, &geometric_pmf(c, 60)).unwrap();
            assert!(r.p_value > 0.001, "alpha={alpha} c={c}: {r:?}");
        }
    }

    #[test]
    fn nested_counts_are_monotone_in_delta() {
        let mut rng = stream(4);
        for _ in 0..100 {
            let s = sample_straddles(0.5, 1.0, 2.0, 1e-4, &mut rng).unwrap();
            for u in [0.5, 1.0, 2.0] {
                assert!(s.count(u, 1e-2) <= s.count(u, 1e-3));
                assert!(s.count(u, 1e-3) <= s.count(u, 1e-4));
            }
        }
    }
}
