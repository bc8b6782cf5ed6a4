//! Centered Gaussian process `V` with `Cov(V(s), V(t)) = t^(1-beta) - (t - s)^(1-beta)`, `s <= t`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const MAX_GRID_POINTS: usize = 2000;

const JITTERS: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

pub fn covariance(beta: f64, s: f64, t: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    hi.powf(1.0 - beta) - (hi - lo).powf(1.0 - beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGridSample {
    pub beta: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Cholesky factor of the covariance on a fixed grid, reusable across draws.
#[derive(Debug, Clone)]
pub struct VSampler {
    beta: f64,
    grid: Vec<f64>,
    factor: DMatrix<f64>,
    pub jitter: f64,
}

impl VSampler {
    pub fn new(beta: f64, grid: &[f64]) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::OutOfDomain(format!("beta must be in [0, 1), got {beta}")));
        }
        if grid.is_empty() || grid.len() > MAX_GRID_POINTS {
            return Err(Error::OutOfDomain(format!(
                "grid must have between 1 and {MAX_GRID_POINTS} points, got {}",
                grid.len()
            )));
        }
        if !(grid[0] > 0.0) || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::OutOfDomain("grid must be positive and strictly increasing".into()));
        }
        let n = grid.len();
        let cov = DMatrix::from_fn(n, n, |i, j| covariance(beta, grid[i], grid[j]));
        let scale = cov.diagonal().max();
        for jitter in JITTERS {
            let m = &cov + DMatrix::identity(n, n) * (jitter * scale);
            if let Some(ch) = m.cholesky() {
                return Ok(VSampler {
                    beta,
                    grid: grid.to_vec(),
                    factor: ch.l(),
                    jitter,
                });
            }
        }
        Err(Error::NotPsd(JITTERS[JITTERS.len() - 1]))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussianGridSample {
        let n = self.grid.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &self.factor * z;
        GaussianGridSample {
            beta: self.beta,
            grid: self.grid.clone(),
            values: v.iter().copied().collect(),
        }
    }
}

pub fn sample_v<R: Rng + ?Sized>(beta: f64, grid: &[f64], rng: &mut R) -> Result<GaussianGridSample> {
    Ok(VSampler::new(beta, grid)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::empirical_cov;

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance(0.0, 1.0, 1.0), 1.0);
        assert!((covariance(0.5, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((covariance(0.0, 0.5, 1.0) - 0.5).abs() < 1e-15);
        let v = covariance(0.5, 0.25, 1.0);
        assert!((v - (1.0 - 0.75f64.sqrt())).abs() < 1e-15);
        assert_eq!(covariance(0.3, 0.2, 0.7), covariance(0.3, 0.7, 0.2));
    }

    #[test]
    fn empirical_covariance_matches() {
        let mut rng = stream(1);
        let grid = [0.25, 0.5, 1.0];
        let s = VSampler::new(0.5, &grid).unwrap();
        let rows: Vec<Vec<f64>> = (0..100_000).map(|_| s.sample(&mut rng).values).collect();
        let est = empirical_cov(&rows).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let exact = covariance(0.5, grid[i], grid[j]);
                let err = (est.cov[i][j] - exact).abs();
                assert!(err < 4.0 * est.se[i][j] + 1e-3, "({i},{j}) {} vs {exact}", est.cov[i][j]);
            }
        }
    }

    #[test]
    fn brownian_case_has_independent_increments() {
        let mut rng = stream(2);
        let grid = [0.5, 1.0];
        let s = VSampler::new(0.0, &grid).unwrap();
        let n = 50_000;
        let mut c = 0.0;
        for _ in 0..n {
            let v = s.sample(&mut rng).values;
            c += v[0] * (v[1] - v[0]);
        }
        assert!((c / n as f64).abs() < 0.02);
    }

    #[test]
    fn fine_grids_factorize() {
        let grid: Vec<f64> = (1..=400).map(|i| i as f64 / 400.0).collect();
        let s = VSampler::new(0.9, &grid).unwrap();
        assert!(s.jitter <= 1e-8);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(VSampler::new(0.5, &[]).is_err());
        assert!(VSampler::new(0.5, &[0.0, 1.0]).is_err());
        assert!(VSampler::new(0.5, &[1.0, 0.5]).is_err());
        assert!(VSampler::new(1.0, &[1.0]).is_err());
        let big: Vec<f64> = (1..=2001).map(|i| i as f64).collect();
        assert!(VSampler::new(0.5, &big).is_err());
    }
}
