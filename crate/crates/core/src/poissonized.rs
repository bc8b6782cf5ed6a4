//! The sieve fed with a Poisson number of balls, and the renewal quantities
//! that approximate it.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_models::FactorFamily;
use crate::sieve::{renewal_functional, simulate_occupancy_with, Engine, Environment, OccupancySnapshot, DEFAULT_MAX_BALLS};

/// One Poissonized allocation coupled with the fixed-`n` allocation at `n = [t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonizedRun {
    pub t: f64,
    /// realized Poisson(t) ball count
    pub n: u64,
    pub snapshot: OccupancySnapshot,
    pub coupled_snapshot: OccupancySnapshot,
}

impl PoissonizedRun {
    /// `L(t) - L_[t]`.
    pub fn gap(&self) -> i64 {
        self.snapshot.l as i64 - self.coupled_snapshot.l as i64
    }
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::OutOfDomain(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

pub fn poissonized_occupancy<R: Rng + ?Sized>(
    engine: Engine,
    env: &mut Environment,
    t: f64,
    rng: &mut R,
) -> Result<PoissonizedRun> {
    if !(t > 0.0) {
        return Err(Error::OutOfDomain(format!("t must be positive, got {t}")));
    }
    if t > DEFAULT_MAX_BALLS as f64 {
        return Err(Error::CapacityExceeded {
            requested: t as u64,
            capacity: DEFAULT_MAX_BALLS,
        });
    }
    let n = sample_poisson(t, rng)?;
    let fixed = t.floor() as u64;
    let grid = [n.min(fixed), n.max(fixed)];
    let snaps = simulate_occupancy_with(engine, env, &grid, rng)?;
    let (snapshot, coupled_snapshot) = if n <= fixed {
        (snaps[0], snaps[1])
    } else {
        (snaps[1], snaps[0])
    };
    Ok(PoissonizedRun {
        t,
        n,
        snapshot,
        coupled_snapshot,
    })
}

pub fn depoisson_gap<R: Rng + ?Sized>(engine: Engine, env: &mut Environment, t: f64, rng: &mut R) -> Result<i64> {
    Ok(poissonized_occupancy(engine, env, t, rng)?.gap())
}

/// `L(e^t)` and `L_[e^t]` next to `rho(t)` on one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub t: f64,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "L_poisson")]
    pub l_poisson: u64,
    #[serde(rename = "L_fixed")]
    pub l_fixed: u64,
    /// `L(e^t) - rho(t)`
    pub gap: i64,
    pub rho: u64,
    pub seed: u64,
}

impl GapRecord {
    pub fn depoisson_gap(&self) -> i64 {
        self.l_poisson as i64 - self.l_fixed as i64
    }
}

/// `t` is on the log scale: the Poisson intensity is `e^t`.
pub fn poissonization_gap<R: Rng + ?Sized>(
    engine: Engine,
    env: &mut Environment,
    t: f64,
    rng: &mut R,
) -> Result<GapRecord> {
    let run = poissonized_occupancy(engine, env, t.exp(), rng)?;
    let rho = renewal_functional(env, t)?;
    Ok(GapRecord {
        t,
        n: run.n,
        l_poisson: run.snapshot.l,
        l_fixed: run.coupled_snapshot.l,
        gap: run.snapshot.l as i64 - rho as i64,
        rho,
        seed: env.seed().unwrap_or(0),
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::TooFewSamples { got: xs.len(), need: 2 });
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Estimate {
            mean,
            se: (var / n).sqrt(),
            reps: xs.len(),
        })
    }
}

/// `U(t) = E nu(t)`, `nu(t) = #{k >= 0 : S_k <= t}`.
pub fn renewal_u_estimate<R: Rng + ?Sized>(family: &FactorFamily, t: f64, reps: usize, rng: &mut R) -> Result<Estimate> {
    if !(t >= 0.0) {
        return Err(Error::OutOfDomain(format!("t must be >= 0, got {t}")));
    }
    let xs = (0..reps)
        .map(|_| {
            let mut env = Environment::new(family.clone(), rng.random());
            env.first_passage(t).map(|v| v as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Estimate::from_samples(&xs)
}

/// `int_[at, bt] f(t - y) dU(y)` by summing `f(t - S_k)` over the walk.
pub fn renewal_integral_estimate<R: Rng + ?Sized>(
    family: &FactorFamily,
    f: impl Fn(f64) -> f64,
    (a, b): (f64, f64),
    t: f64,
    reps: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::OutOfDomain(format!("need 0 <= a < b <= 1, got {a}, {b}")));
    }
    let xs = (0..reps)
        .map(|_| {
            let mut env = Environment::new(family.clone(), rng.random());
            env.extend_to_level(b * t)?;
            Ok(env
                .partial_sums()
                .iter()
                .filter(|&&s| a * t <= s && s <= b * t)
                .map(|&s| f(t - s))
                .sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Estimate::from_samples(&xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_models::{FamilySpec, TailSpec};
    use crate::numeric::adaptive_simpson;
    use crate::rng::stream;

    fn theorem1_family() -> FactorFamily {
        let p = TailSpec::Pareto { alpha: 0.5 };
        FactorFamily::new(FamilySpec::new(0.3, 0.3, p, p)).unwrap()
    }

    fn bounded_family() -> FactorFamily {
        FactorFamily::new(FamilySpec::new(
            0.0,
            0.3,
            TailSpec::PointMass { value: 1.0 },
            TailSpec::Pareto { alpha: 0.4 },
        ))
        .unwrap()
    }

    #[test]
    fn poisson_moments() {
        let mut rng = stream(1);
        for t in [0.5, 7.0, 50.0, 3000.0] {
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_poisson(t, &mut rng).unwrap() as f64).collect();
            let e = Estimate::from_samples(&xs).unwrap();
            assert!((e.mean - t).abs() < 4.0 * e.se, "t={t}");
            let var = xs.iter().map(|x| (x - e.mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            // SE of the sample variance of a Poisson is about sqrt((t + 2t^2) / n)
            assert!((var - t).abs() < 4.0 * ((t + 2.0 * t * t) / n as f64).sqrt(), "t={t} var={var}");
        }
    }

    #[test]
    fn coupling_is_consistent() {
        let mut rng = stream(2);
        let mut equal = 0;
        for i in 0..3000 {
            let mut env = Environment::new(theorem1_family(), i);
            let run = poissonized_occupancy(Engine::Balls, &mut env, 1.0, &mut rng).unwrap();
            assert_eq!(run.snapshot.n, run.n);
            assert_eq!(run.coupled_snapshot.n, 1);
            if run.n == 0 {
                assert_eq!(run.snapshot, OccupancySnapshot::default());
            }
            if run.n == 1 {
                assert_eq!(run.snapshot, run.coupled_snapshot);
                assert_eq!(run.gap(), 0);
                equal += 1;
            }
        }
        assert!(equal > 900);
        assert!(poissonized_occupancy(Engine::Balls, &mut Environment::new(theorem1_family(), 0), 0.0, &mut rng).is_err());
    }

    #[test]
    fn gap_record_uses_the_same_environment() {
        let mut rng = stream(3);
        for i in 0..200 {
            let mut env = Environment::new(theorem1_family(), i);
            let r = poissonization_gap(Engine::Cascade, &mut env, 5.0, &mut rng).unwrap();
            assert_eq!(r.rho, renewal_functional(&mut env, 5.0).unwrap());
            assert_eq!(r.gap, r.l_poisson as i64 - r.rho as i64);
            assert_eq!(r.seed, i);
        }
        let mut env = Environment::new(theorem1_family(), 0);
        assert!(matches!(
            poissonization_gap(Engine::Cascade, &mut env, 30.0, &mut rng),
            Err(Error::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn renewal_function_at_zero_is_one() {
        let mut rng = stream(4);
        let e = renewal_u_estimate(&theorem1_family(), 0.0, 100, &mut rng).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn elementary_renewal_theorem() {
        let mut rng = stream(5);
        let f = bounded_family();
        let mu = f.mean_log_factor().finite().unwrap();
        let t = 1000.0;
        let e = renewal_u_estimate(&f, t, 2000, &mut rng).unwrap();
        // U(t) = t / mu + O(1); the constant is negligible against 3 SE at this t
        assert!((e.mean / t - 1.0 / mu).abs() < 3.0 * e.se / t + 2.0 / t, "{} vs {}", e.mean / t, 1.0 / mu);
    }

    #[test]
    fn renewal_integral_spot_check() {
        let mut rng = stream(6);
        let fam = bounded_family();
        let mu = fam.mean_log_factor().finite().unwrap();
        let f = |y: f64| (1.0 + y).powf(-0.5);
        let t = 1000.0;
        let e = renewal_integral_estimate(&fam, f, (0.25, 0.75), t, 2000, &mut rng).unwrap();
        let exact = adaptive_simpson(&f, 0.25 * t, 0.75 * t, 1e-10) / mu;
        assert!((e.mean / exact - 1.0).abs() < 0.05, "{} vs {exact}", e.mean);
    }
}
