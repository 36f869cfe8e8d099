//! Small numeric helpers: adaptive quadrature and monotone inversion.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "integrand not finite inside [{a}, {b}]"
        )));
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::NumericFailure(format!(
            "quadrature failed to converge on [{a}, {b}]"
        )));
    }
    Ok(adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?)
}

/// Adaptive Simpson integral of `f` over `[a, b]` (orientation-aware) with
/// absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let g = |x: f64| f(x);
    let fa = g(lo);
    let fb = g(hi);
    let m = 0.5 * (lo + hi);
    let fm = g(m);
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "integrand not finite on [{lo}, {hi}]"
        )));
    }
    let whole = simpson(lo, hi, fa, fm, fb);
    Ok(sign * adaptive(&g, lo, hi, fa, fm, fb, whole, tol, 0)?)
}

/// Invert a strictly increasing function by bracket expansion from `start`
/// followed by bisection to absolute tolerance `tol`. `domain` clamps the
/// bracket for functions only defined on an open interval.
pub fn invert_monotone(
    f: impl Fn(f64) -> Result<f64>,
    target: f64,
    start: f64,
    domain: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let clamp = |v: f64| v.clamp(domain.0, domain.1);
    let mut lo = start;
    let mut hi = start;
    let mut step = 1.0;
    let mut flo = f(lo)?;
    let mut fhi = flo;
    for _ in 0..200 {
        if flo <= target && target <= fhi {
            break;
        }
        if flo > target {
            let next = clamp(lo - step);
            if next == lo {
                return Err(Error::NumericFailure(format!(
                    "inversion bracket hit domain edge at {lo}"
                )));
            }
            lo = next;
            flo = f(lo)?;
        }
        if fhi < target {
            let next = clamp(hi + step);
            if next == hi {
                return Err(Error::NumericFailure(format!(
                    "inversion bracket hit domain edge at {hi}"
                )));
            }
            hi = next;
            fhi = f(hi)?;
        }
        step *= 2.0;
    }
    if !(flo <= target && target <= fhi) {
        return Err(Error::NumericFailure("inversion bracket not found".into()));
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
