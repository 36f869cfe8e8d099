//! Shipped example models with analytic transforms and exact phi ranges.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use super::{JumpDensity, JumpSampler, JumpSpec, PhiRangeOracle, UnitVolatilityModel};
use crate::error::{Error, Result};

fn analytic(f: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static) -> PhiRangeOracle {
    PhiRangeOracle::Analytic(Arc::new(f))
}

/// Driftless unit-volatility model: `alpha = 0`, `phi = 0`.
pub fn zero_drift() -> UnitVolatilityModel {
    UnitVolatilityModel::new(
        "zero",
        Arc::new(|_| 0.0),
        Arc::new(|_| 0.0),
        Arc::new(|_| 0.0),
        Some(Arc::new(|_| 0.0)),
        0.0,
        analytic(|_, _| (0.0, 0.0)),
    )
}

/// Mean-reverting drift `alpha(x) = -theta x`, so
/// `phi(x) = (theta^2 x^2 - theta)/2` with floor `-theta/2`.
pub fn ornstein_uhlenbeck(theta: f64) -> Result<UnitVolatilityModel> {
    if !(theta > 0.0) {
        return Err(Error::InvalidModel(format!(
            "mean reversion rate must be positive, got {theta}"
        )));
    }
    let t = theta;
    Ok(UnitVolatilityModel::new(
        format!("ou(theta={theta})"),
        Arc::new(move |x| -t * x),
        Arc::new(move |_| -t),
        Arc::new(move |u| -0.5 * t * u * u),
        Some(Arc::new(move |x| 0.5 * (t * t * x * x - t))),
        -0.5 * theta,
        analytic(move |l, u| {
            let x2_min = if l <= 0.0 && u >= 0.0 {
                0.0
            } else {
                (l * l).min(u * u)
            };
            let x2_max = (l * l).max(u * u);
            (
                0.5 * (t * t * x2_min - t),
                0.5 * (t * t * x2_max - t),
            )
        }),
    ))
}

/// Range of `cos` over `[l, u]`.
fn cos_range(l: f64, u: f64) -> (f64, f64) {
    if u - l >= 2.0 * PI {
        return (-1.0, 1.0);
    }
    let (cl, cu) = (l.cos(), u.cos());
    let mut lo = cl.min(cu);
    let mut hi = cl.max(cu);
    // A maximum of cos sits at even multiples of pi, a minimum at odd ones.
    let k_even = (l / (2.0 * PI)).ceil();
    if k_even * 2.0 * PI <= u {
        hi = 1.0;
    }
    let k_odd = ((l - PI) / (2.0 * PI)).ceil();
    if PI + k_odd * 2.0 * PI <= u {
        lo = -1.0;
    }
    (lo, hi)
}

/// Periodic drift `alpha = sin`, `phi(x) = (sin^2 x + cos x)/2`; writing
/// `c = cos x` the functional is `(1 - c^2 + c)/2`, so the exact range
/// follows from the cosine range of the band (global range `[-1/2, 5/8]`).
pub fn sine_drift() -> UnitVolatilityModel {
    UnitVolatilityModel::new(
        "sine",
        Arc::new(f64::sin),
        Arc::new(f64::cos),
        Arc::new(|u: f64| 1.0 - u.cos()),
        Some(Arc::new(|x: f64| {
            0.5 * (x.sin().powi(2) + x.cos())
        })),
        -0.5,
        analytic(|l, u| {
            let g = |c: f64| 0.5 * (1.0 - c * c + c);
            let (clo, chi) = cos_range(l, u);
            let mut lo = g(clo).min(g(chi));
            let mut hi = g(clo).max(g(chi));
            if clo <= 0.5 && 0.5 <= chi {
                hi = hi.max(0.625);
            }
            lo = lo.min(hi);
            (lo, hi)
        }),
    )
}

/// Logistic growth with multiplicative noise,
/// `dV = r V (1 - V/K) dt + s V dW` on `V > 0`.
///
/// With reference point `K` the transform is `eta(v) = ln(v/K)/s`, giving
/// `alpha(x) = (r/s - s/2) - (r/s) e^{s x}` and a phi that is an upward
/// parabola in `w = e^{s x}` with vertex at `w = 1`, hence
/// `Phi = s^2/8 - r/2`.
pub fn logistic(r: f64, capacity: f64, s: f64) -> Result<UnitVolatilityModel> {
    if !(r > 0.0 && capacity > 0.0 && s > 0.0) {
        return Err(Error::InvalidModel(format!(
            "logistic parameters must be positive, got r={r}, capacity={capacity}, s={s}"
        )));
    }
    let a = r / s - 0.5 * s;
    let b = r / s;
    let phi_at_w = move |w: f64| 0.5 * (a - b * w).powi(2) - 0.5 * b * s * w;
    let m = UnitVolatilityModel::new(
        format!("logistic(r={r},k={capacity},sigma={s})"),
        Arc::new(move |x: f64| a - b * (s * x).exp()),
        Arc::new(move |x: f64| -b * s * (s * x).exp()),
        Arc::new(move |u: f64| a * u - (b / s) * ((s * u).exp() - 1.0)),
        Some(Arc::new(move |x: f64| phi_at_w((s * x).exp()))),
        s * s / 8.0 - 0.5 * r,
        analytic(move |l, u| {
            let (wl, wu) = ((s * l).exp(), (s * u).exp());
            let hi = phi_at_w(wl).max(phi_at_w(wu));
            let lo = if wl <= 1.0 && 1.0 <= wu {
                phi_at_w(1.0)
            } else {
                phi_at_w(wl).min(phi_at_w(wu))
            };
            (lo, hi)
        }),
    )
    .with_transform(
        Arc::new(move |v: f64| (v / capacity).ln() / s),
        Arc::new(move |x: f64| capacity * (s * x).exp()),
    );
    Ok(m)
}

/// Constant-intensity jumps with centred normal sizes, using the same law
/// for target and proposal. `exp_neg_da_sup` bounds `e^{-dA}` over jump
/// pairs, so the proposal ratio bound is `(rate / bound) * exp_neg_da_sup`.
fn constant_normal_jumps(rate: f64, bound: f64, sd: f64, exp_neg_da_sup: f64) -> Result<JumpSpec> {
    if !(rate >= 0.0 && bound >= rate && sd > 0.0) {
        return Err(Error::InvalidModel(format!(
            "need 0 <= rate <= bound and sd > 0, got rate={rate}, bound={bound}, sd={sd}"
        )));
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidModel(e.to_string()))?;
    let density: JumpDensity = Arc::new(move |post: f64, pre: f64| {
        let z = (post - pre) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
    });
    let sampler: JumpSampler = Arc::new(move |_pre: f64, rng: &mut dyn rand::RngCore| {
        normal.sample(rng)
    });
    Ok(JumpSpec {
        intensity: Arc::new(move |_| rate),
        intensity_bound: bound,
        target_density: density.clone(),
        proposal_density: density,
        proposal_sampler: sampler,
        proposal_state_free: true,
        ratio_bound: (rate / bound) * exp_neg_da_sup,
    })
}

/// Zero drift plus constant-rate normal jumps (`A = 0`, so `e^{-dA} = 1`).
pub fn zero_drift_with_jumps(rate: f64, bound: f64, sd: f64) -> Result<UnitVolatilityModel> {
    Ok(zero_drift().with_jumps(constant_normal_jumps(rate, bound, sd, 1.0)?))
}

/// Sine drift plus constant-rate normal jumps. `A(u) = 1 - cos u` lies in
/// `[0, 2]`, so `e^{-dA} <= e^2`.
pub fn sine_drift_with_jumps(rate: f64, bound: f64, sd: f64) -> Result<UnitVolatilityModel> {
    Ok(sine_drift().with_jumps(constant_normal_jumps(rate, bound, sd, (2.0f64).exp())?))
}
