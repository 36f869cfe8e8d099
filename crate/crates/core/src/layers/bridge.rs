//! Finite-dimensional Brownian bridge simulation.

use rand::Rng;
use rand_distr::{Distribution, Normal as GaussDraw};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

use crate::error::{Error, Result};

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("standard normal"))
}

/// Conditional mean and variance of a Brownian bridge from `(s, x)` to
/// `(t, y)` at an interior time `q`.
pub fn bridge_moments(s: f64, x: f64, t: f64, y: f64, q: f64) -> (f64, f64) {
    debug_assert!(s < q && q < t);
    let span = t - s;
    let frac = (q - s) / span;
    let mean = x + frac * (y - x);
    let var = (q - s) * (t - q) / span;
    (mean, var)
}

/// Draw the bridge at the given interior times, sequentially conditioning on
/// previously drawn points. Times must be strictly increasing and strictly
/// inside `(s, t)`.
pub fn sample_bridge_points<R: Rng + ?Sized>(
    x: f64,
    y: f64,
    s: f64,
    t: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(s < t) {
        return Err(Error::InvalidInput(format!("need s < t, got [{s}, {t}]")));
    }
    for w in times.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidInput(format!(
                "bridge times not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        if !(first > s && last < t) {
            return Err(Error::InvalidInput(format!(
                "bridge times must lie strictly inside ({s}, {t})"
            )));
        }
    }
    let mut out = Vec::with_capacity(times.len());
    let mut anchor_t = s;
    let mut anchor_x = x;
    for &q in times {
        let (mean, var) = bridge_moments(anchor_t, anchor_x, t, y, q);
        let draw = GaussDraw::new(mean, var.sqrt())
            .map_err(|e| Error::NumericFailure(format!("bridge normal: {e}")))?
            .sample(rng);
        out.push(draw);
        anchor_t = q;
        anchor_x = draw;
    }
    Ok(out)
}

/// Inverse-CDF draw from a normal truncated to `[lo, hi]`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    debug_assert!(lo < hi && sd > 0.0);
    let n = std_normal();
    let p_lo = n.cdf((lo - mean) / sd);
    let p_hi = n.cdf((hi - mean) / sd);
    if !(p_hi - p_lo).is_finite() || p_hi - p_lo <= 0.0 {
        return Err(Error::NumericFailure(format!(
            "truncated normal mass vanished on [{lo}, {hi}] (mean {mean}, sd {sd})"
        )));
    }
    let u: f64 = rng.random();
    let p = p_lo + u * (p_hi - p_lo);
    let z = n.inverse_cdf(p.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16));
    Ok((mean + sd * z).clamp(lo, hi))
}
