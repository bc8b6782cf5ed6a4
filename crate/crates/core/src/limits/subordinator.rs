//! The stable subordinator `X_alpha`, its inverse, and integrals against the inverse.
//!
//! `X_alpha` has Laplace transform `E exp(-z X(t)) = exp(-Gamma(1 - alpha) t z^alpha)`,
//! so an increment over time `dt` is `(Gamma(1 - alpha) dt)^(1/alpha)` times a
//! standard positive stable variable.

use rand::Rng;
use statrs::function::gamma::gamma;

use super::stable::sample_positive_stable;
use crate::error::{Error, Result};

/// Hard limit on grid points per path.
pub const MAX_GRID_STEPS: u64 = 10_000_000;

/// Relative step used when the caller does not pick one.
pub const DEFAULT_STEP_FACTOR: f64 = 1e-4;

/// Refinements tried before giving up on a path that creeps up to the level.
const MAX_REFINEMENTS: u32 = 3;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfDomain(format!("alpha must be in (0, 1), got {alpha}")))
    }
}

/// Scale of an increment over time `dt`.
pub fn increment_scale(alpha: f64, dt: f64) -> f64 {
    (gamma(1.0 - alpha) * dt).powf(1.0 / alpha)
}

/// `E X^<-(u) = u^alpha / (Gamma(1 + alpha) Gamma(1 - alpha))`.
pub fn expected_crossing_time(alpha: f64, u: f64) -> f64 {
    u.powf(alpha) / (gamma(1.0 + alpha) * gamma(1.0 - alpha))
}

/// Grid step equal to `DEFAULT_STEP_FACTOR` times the expected crossing time of `u`.
pub fn default_step(alpha: f64, u: f64) -> f64 {
    DEFAULT_STEP_FACTOR * expected_crossing_time(alpha, u)
}

/// `X_alpha` sampled on the grid `r_i = i * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath {
    pub alpha: f64,
    pub step: f64,
    values: Vec<f64>,
    increment_scale: f64,
}

impl SubordinatorPath {
    pub fn new(alpha: f64, step: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(step > 0.0) {
            return Err(Error::OutOfDomain(format!("step must be positive, got {step}")));
        }
        Ok(SubordinatorPath {
            alpha,
            step,
            values: vec![0.0],
            increment_scale: increment_scale(alpha, step),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    fn push_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.values.len() as u64 > MAX_GRID_STEPS {
            return Err(Error::GridTooFine {
                steps: self.values.len() as u64,
                limit: MAX_GRID_STEPS,
            });
        }
        let last = *self.values.last().unwrap();
        self.values
            .push(last + self.increment_scale * sample_positive_stable(self.alpha, rng));
        Ok(())
    }

    /// Extend until the path strictly exceeds `level`.
    pub fn extend_until<R: Rng + ?Sized>(&mut self, level: f64, rng: &mut R) -> Result<()> {
        while *self.values.last().unwrap() <= level {
            self.push_step(rng)?;
        }
        Ok(())
    }

    /// `X^<-(s)` up to grid bias.
    pub fn inverse(&self, s: f64) -> Result<InverseValue> {
        let i = self.values.partition_point(|&x| x <= s);
        if i == self.values.len() {
            return Err(Error::NotCovered(s));
        }
        Ok(InverseValue {
            value: self.time(i),
            bias_bound: self.step,
        })
    }

    /// `int_{[0,u]} (u - s)^-gamma dX^<-(s)` by the time change `s = X(r)`:
    /// the left-point sum of `(u - X(r_i))^-gamma * step` over grid points
    /// with `X(r_i) <= u`.
    ///
    /// Fails with `GridTooCoarse` when the last grid value below `u` lies within
    /// `10 step^(1/alpha)` of `u` (only relevant for `gamma > 0`).
    pub fn inverse_integral(&self, gamma_exponent: f64, u: f64) -> Result<f64> {
        let below = self.values.partition_point(|&x| x <= u);
        if below == self.values.len() {
            return Err(Error::NotCovered(u));
        }
        if gamma_exponent == 0.0 {
            return Ok(self.time(below));
        }
        let undershoot = u - self.values[below - 1];
        if undershoot < 10.0 * self.step.powf(1.0 / self.alpha) {
            return Err(Error::GridTooCoarse {
                undershoot,
                step: self.step,
            });
        }
        Ok(self.values[..below]
            .iter()
            .map(|&x| (u - x).powf(-gamma_exponent))
            .sum::<f64>()
            * self.step)
    }
}

/// Value of the inverse subordinator with its grid bias bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseValue {
    pub value: f64,
    pub bias_bound: f64,
}

/// Path on `[0, horizon]` with grid step `step`.
pub fn sample_subordinator_path<R: Rng + ?Sized>(
    alpha: f64,
    horizon: f64,
    step: f64,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    let mut path = SubordinatorPath::new(alpha, step)?;
    let steps = (horizon / step).ceil().max(0.0);
    if steps > MAX_GRID_STEPS as f64 {
        return Err(Error::GridTooFine {
            steps: steps as u64,
            limit: MAX_GRID_STEPS,
        });
    }
    for _ in 0..steps as u64 {
        path.push_step(rng)?;
    }
    Ok(path)
}

pub fn inverse_subordinator_eval(path: &SubordinatorPath, s: f64) -> Result<InverseValue> {
    path.inverse(s)
}

/// One draw of `int_{[0,u]} (u - s)^-gamma dX^<-(s)`.
///
/// A path that creeps too close to `u` before crossing is discarded and
/// redrawn on a grid ten times finer.
pub fn sample_frac_integral_inverse<R: Rng + ?Sized>(
    alpha: f64,
    gamma_exponent: f64,
    u: f64,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma_exponent) {
        return Err(Error::OutOfDomain(format!("exponent must be in [0, 1), got {gamma_exponent}")));
    }
    if !(u > 0.0) {
        return Err(Error::OutOfDomain(format!("u must be positive, got {u}")));
    }
    let mut step = step;
    let mut refinements = 0;
    loop {
        let mut path = SubordinatorPath::new(alpha, step)?;
        path.extend_until(u, rng)?;
        match path.inverse_integral(gamma_exponent, u) {
            Err(Error::GridTooCoarse { .. }) if refinements < MAX_REFINEMENTS => {
                step /= 10.0;
                refinements += 1;
            }
            other => return other,
        }
    }
}
