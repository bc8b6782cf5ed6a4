//! Stable random variables.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp1, Open01};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Positive stable variable with `E exp(-z s) = exp(-z^alpha)`, `alpha in (0, 1)`.
///
/// Kanter's representation: with `U ~ Unif(0, pi)` and `E ~ Exp(1)`,
/// `s = sin(alpha U) / sin(U)^(1/alpha) * (sin((1 - alpha) U) / E)^((1 - alpha)/alpha)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let u = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

/// Stable law in the `(alpha, beta, scale, location)` parametrization with
/// characteristic function
/// `exp(-scale^alpha |z|^alpha (1 - i beta sign(z) tan(pi alpha / 2)) + i location z)`,
/// `alpha != 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableLaw {
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
    pub location: f64,
}

impl StableLaw {
    pub fn new(alpha: f64, beta: f64, scale: f64, location: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) || alpha == 1.0 {
            return Err(Error::OutOfDomain(format!("stable index must be in (0, 1) or (1, 2], got {alpha}")));
        }
        if !(-1.0..=1.0).contains(&beta) || !(scale > 0.0) {
            return Err(Error::OutOfDomain(format!("bad skewness {beta} or scale {scale}")));
        }
        Ok(StableLaw {
            alpha,
            beta,
            scale,
            location,
        })
    }

    /// The law of `Z_alpha(1)` for the Levy process whose characteristic
    /// function is `exp(-|z|^alpha Gamma(1 - alpha) (cos(pi alpha/2) + i sin(pi alpha/2) sign z))`,
    /// `alpha in (1, 2)`.
    ///
    /// `Gamma(1 - alpha)` and `cos(pi alpha / 2)` are both negative on `(1, 2)`,
    /// so their product is the positive `scale^alpha`; the imaginary part then
    /// forces `beta = -1`.
    pub fn levy_driver(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::OutOfDomain(format!("driver index must be in (1, 2), got {alpha}")));
        }
        let scale_pow = gamma(1.0 - alpha) * (FRAC_PI_2 * alpha).cos();
        StableLaw::new(alpha, -1.0, scale_pow.powf(1.0 / alpha), 0.0)
    }

    /// Positive stable law with Laplace transform `exp(-z^alpha)`, `alpha in (0, 1)`.
    pub fn positive(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfDomain(format!("index must be in (0, 1), got {alpha}")));
        }
        StableLaw::new(alpha, 1.0, (FRAC_PI_2 * alpha).cos().powf(1.0 / alpha), 0.0)
    }

    /// Law of the sum of `dt` units of time of the corresponding Levy process.
    pub fn over(&self, dt: f64) -> StableLaw {
        StableLaw {
            scale: self.scale * dt.powf(1.0 / self.alpha),
            location: self.location * dt,
            ..*self
        }
    }

    pub fn characteristic_function(&self, z: f64) -> Complex64 {
        let a = self.alpha;
        let mag = (self.scale * z.abs()).powf(a);
        let skew = self.beta * z.signum() * (FRAC_PI_2 * a).tan();
        (Complex64::new(-mag, mag * skew + self.location * z)).exp()
    }

    /// Chambers-Mallows-Stuck draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        let v = PI * (rng.sample::<f64, _>(Open01) - 0.5);
        let w: f64 = rng.sample(Exp1);
        let zeta = self.beta * (FRAC_PI_2 * a).tan();
        let b = zeta.atan() / a;
        let s = (1.0 + zeta * zeta).powf(0.5 / a);
        let x = s * (a * (v + b)).sin() / v.cos().powf(1.0 / a)
            * ((v - a * (v + b)).cos() / w).powf((1.0 - a) / a);
        self.scale * x + self.location
    }
}

/// Characteristic function of `Z_alpha(1)` written directly from its defining formula.
pub fn levy_driver_cf(alpha: f64, z: f64) -> Complex64 {
    let g = gamma(1.0 - alpha);
    let phase = Complex64::new((FRAC_PI_2 * alpha).cos(), (FRAC_PI_2 * alpha).sin() * z.signum());
    (-(z.abs().powf(alpha) * g) * phase).exp()
}
