//! Small numerical kernels: adaptive Simpson quadrature and bracketed bisection.

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Root of `f` on `[lo, hi]` by geometric bisection (both ends positive).
///
/// Requires `f(lo)` and `f(hi)` of opposite sign; returns `None` otherwise.
/// Stops when `hi / lo - 1 < rel_tol`.
pub fn log_bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..400 {
        if hi / lo - 1.0 < rel_tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        let fmid = f(mid);
        if fmid == 0.0 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Some((lo * hi).sqrt())
}

/// Decreasing-function inversion: smallest `x` in `[lo, hi]` with `g(x) <= target`.
pub fn invert_decreasing<F: Fn(f64) -> f64>(g: F, target: f64, lo: f64, hi: f64, rel_tol: f64) -> f64 {
    if g(lo) <= target {
        return lo;
    }
    if g(hi) > target {
        return hi;
    }
    log_bisect(|x| g(x) - target, lo, hi, rel_tol).unwrap_or(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_and_exp() {
        let v = adaptive_simpson(&|x: f64| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-10);
        let e = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((e - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn simpson_handles_kinks() {
        let v = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-11);
        assert!((v - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn bisection_finds_power_root() {
        let r = log_bisect(|c| 100.0 / (c * c) - 1.0, 1.0, 1e12, 1e-14).unwrap();
        assert!((r - 10.0).abs() < 1e-12);
        assert!(log_bisect(|c| c, 1.0, 2.0, 1e-10).is_none());
    }

    #[test]
    fn inversion_of_decreasing_tail() {
        let x = invert_decreasing(|x| x.powf(-0.5), 0.25, 1.0, 1e18, 1e-13);
        assert!((x - 16.0).abs() < 1e-10);
    }
}
