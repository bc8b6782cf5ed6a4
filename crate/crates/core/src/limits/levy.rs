//! Fractional integrals `int_[0,u] (u - s)^-beta dZ(s)` of a Levy driver `Z`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stable::StableLaw;
use crate::error::{Error, Result};

pub const MAX_GRID_STEPS: u64 = 10_000_000;

/// Steps per unit of `u` on the coarse part of the grid.
pub const DEFAULT_STEPS: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    Brownian,
    Stable { alpha: f64 },
}

impl Driver {
    fn check(&self, beta: f64) -> Result<()> {
        let max = match *self {
            Driver::Brownian => 0.5,
            Driver::Stable { alpha } => {
                if !(alpha > 1.0 && alpha < 2.0) {
                    return Err(Error::OutOfDomain(format!("driver index must be in (1, 2), got {alpha}")));
                }
                2.0 / alpha - 1.0
            }
        };
        let ok = match *self {
            Driver::Brownian => (0.0..max).contains(&beta),
            Driver::Stable { .. } => (0.0..=max + 1e-12).contains(&beta),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfDomain(format!("beta {beta} outside the admissible range for {self:?}")))
        }
    }

    fn increment<R: Rng + ?Sized>(&self, law: Option<&StableLaw>, dt: f64, rng: &mut R) -> f64 {
        match law {
            None => dt.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Some(l) => dt.powf(1.0 / l.alpha) * l.sample(rng),
        }
    }
}

/// A Levy path sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    pub driver: Driver,
    pub step: f64,
    pub values: Vec<f64>,
}

pub fn sample_levy_path<R: Rng + ?Sized>(
    driver: Driver,
    horizon: f64,
    step: f64,
    rng: &mut R,
) -> Result<LevyPath> {
    driver.check(0.0)?;
    if !(step > 0.0) {
        return Err(Error::OutOfDomain(format!("step must be positive, got {step}")));
    }
    let steps = (horizon / step).ceil().max(0.0);
    if steps > MAX_GRID_STEPS as f64 {
        return Err(Error::GridTooFine {
            steps: steps as u64,
            limit: MAX_GRID_STEPS,
        });
    }
    let law = stable_law(driver)?;
    let mut values = Vec::with_capacity(steps as usize + 1);
    let mut z = 0.0;
    values.push(z);
    for _ in 0..steps as u64 {
        z += driver.increment(law.as_ref(), step, rng);
        values.push(z);
    }
    Ok(LevyPath { driver, step, values })
}

fn stable_law(driver: Driver) -> Result<Option<StableLaw>> {
    match driver {
        Driver::Brownian => Ok(None),
        Driver::Stable { alpha } => StableLaw::levy_driver(alpha).map(Some),
    }
}

/// One draw of the integral on a grid with step `step` on `[0, 0.9u]` and
/// `step / 10` on `[0.9u, u]`, the kernel taken at left endpoints.
pub fn sample_frac_integral_levy<R: Rng + ?Sized>(
    driver: Driver,
    beta: f64,
    u: f64,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    driver.check(beta)?;
    if !(u > 0.0) || !(step > 0.0) {
        return Err(Error::OutOfDomain(format!("u and step must be positive, got {u}, {step}")));
    }
    let law = stable_law(driver)?;
    let coarse = (0.9 * u / step).ceil();
    let fine = (0.1 * u / (step / 10.0)).ceil();
    if coarse + fine > MAX_GRID_STEPS as f64 {
        return Err(Error::GridTooFine {
            steps: (coarse + fine) as u64,
            limit: MAX_GRID_STEPS,
        });
    }
    let mut total = 0.0;
    for (start, len, n) in [(0.0, 0.9 * u, coarse), (0.9 * u, 0.1 * u, fine)] {
        let h = len / n;
        for i in 0..n as u64 {
            let s = start + i as f64 * h;
            total += (u - s).powf(-beta) * driver.increment(law.as_ref(), h, rng);
        }
    }
    Ok(total)
}
