//! Scalar numerics: bisection, adaptive Simpson quadrature and bounded
//! maximisation by grid scan plus golden-section refinement.

use crate::error::{Error, Result};

/// Iteration cap for [`bisect`].
pub const MAX_BISECTION_ITERS: usize = 200;
/// Residual at which [`bisect`] stops early.
pub const BISECTION_RESIDUAL: f64 = 1e-12;
/// Absolute tolerance used by the quadrature-backed routines.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Recursion depth cap for [`adaptive_simpson`].
pub const QUADRATURE_MAX_DEPTH: u32 = 40;

/// Root of `f` on `[lo, hi]` by bisection. `f(lo)` and `f(hi)` must differ in sign
/// (a zero at either end is returned directly).
pub fn bisect<F>(mut f: F, lo: f64, hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTION_ITERS {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid.abs() <= BISECTION_RESIDUAL {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// `∫_a^b f` by adaptive Simpson with absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let f_lo = f(lo);
    let f_hi = f(hi);
    let mid = 0.5 * (lo + hi);
    let f_mid = f(mid);
    let whole = simpson(lo, hi, f_lo, f_mid, f_hi);
    sign * simpson_step(&f, lo, hi, f_lo, f_mid, f_hi, whole, tol, QUADRATURE_MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Maximiser of a unimodal `f` on `[a, b]` by golden-section search, stopped
/// when the bracket is narrower than `tol`. Endpoints are compared at the end
/// so boundary maxima are found exactly.
pub fn golden_section_max<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        if x1 >= x2 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, f(mid));
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Points `lo, lo + step, …` up to and including `hi`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && hi >= lo);
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut points: Vec<f64> = (0..=count).map(|i| lo + i as f64 * step).collect();
    if let Some(&last) = points.last() {
        if hi - last > 1e-12 * step.max(hi.abs()) {
            points.push(hi);
        }
    }
    points
}

/// Maximiser of `f` on `[lo, hi]`: scan the uniform grid, then run a
/// golden-section search on the two cells around the best grid point.
pub fn grid_argmax_refined<F>(f: F, lo: f64, hi: f64, step: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let mut best = (lo, f64::NEG_INFINITY);
    for x in uniform_grid(lo, hi, step) {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let refined = golden_section_max(&f, a, b, tol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

/// Central finite difference of `f` at `x`.
pub fn central_difference<F>(f: F, x: f64, h: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `a > b` by more than `tol` relative to the larger magnitude of the two.
/// `b = -inf` with finite `a` counts as strictly smaller.
pub fn strictly_exceeds(a: f64, b: f64, tol: f64) -> bool {
    if b == f64::NEG_INFINITY {
        return a > b;
    }
    if a == f64::INFINITY {
        return b < a;
    }
    let scale = a.abs().max(b.abs());
    a - b > tol * scale
}

/// Mean and standard error of a sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((root - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_missing_sign_change() {
        let err = bisect(|x| x * x + 1.0, -1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }

    #[test]
    fn simpson_integrates_smooth_and_kinked_functions() {
        let cubic = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((cubic - 4.0).abs() < 1e-12);
        let sine = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10);
        assert!((sine - 2.0).abs() < 1e-9);
        let abs = adaptive_simpson(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10);
        assert!((abs - (0.045 + 0.245)).abs() < 1e-9);
        let reversed = adaptive_simpson(|x| x, 1.0, 0.0, 1e-12);
        assert!((reversed + 0.5).abs() < 1e-12);
    }

    #[test]
    fn golden_section_handles_interior_and_boundary_maxima() {
        let (x, fx) = golden_section_max(|x| -(x - 0.7).powi(2), 0.0, 2.0, 1e-10);
        assert!((x - 0.7).abs() < 1e-6);
        assert!(fx.abs() < 1e-12);
        let (x, _) = golden_section_max(|x| x, 0.0, 3.0, 1e-10);
        assert_eq!(x, 3.0);
    }

    #[test]
    fn grid_includes_upper_end() {
        let g = uniform_grid(0.0, 1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        let g = uniform_grid(0.0, 1.0, 0.25);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn strict_comparison_is_scale_relative() {
        assert!(strictly_exceeds(2e-10, 1e-10, 1e-9));
        assert!(!strictly_exceeds(1.0 + 1e-12, 1.0, 1e-9));
        assert!(strictly_exceeds(-5.0, f64::NEG_INFINITY, 1e-9));
        assert!(!strictly_exceeds(0.0, 0.0, 1e-9));
    }
}
