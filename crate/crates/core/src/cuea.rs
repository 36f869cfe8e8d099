//! Conditioned unbounded exact algorithm.
//!
//! Rejection sampler for diffusion bridge skeletons using one global layer:
//!
//! 1. simulate the layer of the proposal bridge;
//! 2. pre-reject with probability `1 - exp{-(L - Phi) T}`;
//! 3. draw `kappa ~ Poi((U - L) T)` skeletal times uniformly on `[0, T]` and
//!    the bridge values at them conditional on the layer;
//! 4. accept with probability `prod_i (U - phi(X_i)) / (U - L)`.
//!
//! Between steps the per-sub-interval layers needed by restoration are
//! refined alongside the sequential value draws, so accepted skeletons come
//! back restoration-ready.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::layers::{refine_layers, sample_layer, IntervalRecord};
use crate::layers::sample_point_given_event;
use crate::model::UnitVolatilityModel;
use crate::skeleton::{assert_tiling, DiagnosticCounters, Segment, SkeletalPoint, SkeletonCuea};

/// Tolerance for layer-contract checks on phi values; violations beyond it
/// are bugs, not rejections.
pub(crate) const PHI_BOUND_SLACK: f64 = 1e-9;

/// Bernoulli factor of the thinning acceptance for one skeletal point.
pub(crate) fn point_accept_prob(phi_lo: f64, phi_hi: f64, phi_at: f64) -> Result<f64> {
    if phi_at < phi_lo - PHI_BOUND_SLACK || phi_at > phi_hi + PHI_BOUND_SLACK {
        return Err(Error::InvariantViolation(format!(
            "phi value {phi_at} escapes layer bounds [{phi_lo}, {phi_hi}]"
        )));
    }
    if phi_hi <= phi_lo {
        return Ok(1.0);
    }
    Ok(((phi_hi - phi_at) / (phi_hi - phi_lo)).clamp(0.0, 1.0))
}

/// Thinning acceptance across all skeletal points: true with probability
/// `prod_i (U - phi_i)/(U - L)` against the pre-drawn uniforms. The empty
/// product accepts.
pub fn thinning_accept(
    phi_lo: f64,
    phi_hi: f64,
    phi_values: &[f64],
    uniforms: &[f64],
) -> Result<bool> {
    if phi_values.len() != uniforms.len() {
        return Err(Error::InvalidInput(
            "one uniform per phi value is required".into(),
        ));
    }
    for (&p, &u) in phi_values.iter().zip(uniforms) {
        if u >= point_accept_prob(phi_lo, phi_hi, p)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draw strictly increasing uniform times on `(0, t_end)`.
pub(crate) fn sorted_uniform_times<R: Rng>(n: usize, t_end: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let mut times: Vec<f64> = (0..n)
            .map(|_| t_end * rng.random::<f64>())
            .filter(|t| *t > 0.0 && *t < t_end)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if times.len() == n && times.windows(2).all(|w| w[0] < w[1]) {
            return times;
        }
    }
}

pub(crate) fn sample_poisson_count<R: Rng>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::NumericFailure(e.to_string()))?;
    Ok(dist.sample(rng) as usize)
}

pub(crate) fn sample_exponential<R: Rng>(rate: f64, rng: &mut R) -> Result<f64> {
    if rate <= 0.0 {
        // Zero-area thinning graph: no arrivals, ever.
        return Ok(f64::INFINITY);
    }
    Exp::new(rate)
        .map_err(|e| Error::NumericFailure(e.to_string()))
        .map(|d| d.sample(rng))
}

/// One proposal pass. `Ok(None)` is a rejection; counters are updated either
/// way.
fn single_proposal<R: Rng>(
    m: &UnitVolatilityModel,
    x: f64,
    y: f64,
    t_end: f64,
    counters: &mut DiagnosticCounters,
    rng: &mut R,
) -> Result<Option<SkeletonCuea>> {
    counters.proposals += 1;
    let range = m.phi_range_fn();
    let a = 0.5 * t_end.sqrt();
    let layer = sample_layer(0.0, t_end, x, y, a, &range, rng)?;
    let (phi_lo, phi_hi) = (layer.phi_lo, layer.phi_hi);

    let keep = (-(phi_lo - m.phi_floor) * t_end).exp();
    if rng.random::<f64>() >= keep {
        counters.pre_rejections += 1;
        return Ok(None);
    }

    // The whole skeleton is simulated before the thinning decision; lazy
    // per-point evaluation belongs to the adaptive variant.
    let kappa = sample_poisson_count((phi_hi - phi_lo) * t_end, rng)?;
    let times = sorted_uniform_times(kappa, t_end, rng);

    let mut record = IntervalRecord::new(0.0, t_end, 0.0, t_end, x, y, layer.clone())?;
    let mut segments: Vec<Segment> = Vec::with_capacity(kappa + 1);
    let mut points: Vec<SkeletalPoint> = Vec::with_capacity(kappa);
    let mut phi_values: Vec<f64> = Vec::with_capacity(kappa);
    for &xi in &times {
        let v = sample_point_given_event(
            record.outer_s,
            record.x,
            record.outer_t,
            record.y,
            record.layer.band,
            record.layer.inner,
            xi,
            rng,
        )?;
        counters.phi_evaluations += 1;
        phi_values.push(m.phi_value(v));
        let (left, right) = refine_layers(&record, xi, v, &range, rng)?;
        segments.push(Segment::new(record.outer_s, record.x, xi, v, left)?);
        points.push(SkeletalPoint { time: xi, value: v });
        record = IntervalRecord::new(xi, t_end, xi, t_end, v, y, right)?;
    }
    segments.push(Segment::from_record(&record));
    let uniforms: Vec<f64> = (0..kappa).map(|_| rng.random::<f64>()).collect();
    if !thinning_accept(phi_lo, phi_hi, &phi_values, &uniforms)? {
        counters.thinning_rejections += 1;
        return Ok(None);
    }
    assert_tiling(&segments, 0.0, t_end)?;
    counters.acceptances += 1;
    counters.record_kappa(kappa);
    Ok(Some(SkeletonCuea {
        x,
        y,
        t_end,
        points,
        global_layer: layer,
        segments: Some(segments),
    }))
}

/// Simulate one accepted skeleton of the bridge law from `(0, x)` to
/// `(t_end, y)`. The model must be a pure diffusion with its phi floor set.
pub fn simulate_cuea<R: Rng>(
    m: &UnitVolatilityModel,
    x: f64,
    y: f64,
    t_end: f64,
    rng: &mut R,
) -> Result<(SkeletonCuea, DiagnosticCounters)> {
    check_diffusion_inputs(m, t_end)?;
    let started = Instant::now();
    let mut counters = DiagnosticCounters::default();
    loop {
        if let Some(skeleton) = single_proposal(m, x, y, t_end, &mut counters, rng)? {
            counters.wall_clock = started.elapsed();
            debug_assert!(counters.balanced());
            return Ok((skeleton, counters));
        }
    }
}

/// Empirical per-proposal acceptance rate of the algorithm with its binomial
/// standard error.
pub fn acceptance_probability_estimate<R: Rng>(
    m: &UnitVolatilityModel,
    x: f64,
    y: f64,
    t_end: f64,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    check_diffusion_inputs(m, t_end)?;
    let mut counters = DiagnosticCounters::default();
    for _ in 0..n {
        single_proposal(m, x, y, t_end, &mut counters, rng)?;
    }
    let rate = counters.acceptances as f64 / n as f64;
    Ok((rate, (rate * (1.0 - rate) / n as f64).sqrt()))
}

pub(crate) fn check_diffusion_inputs(m: &UnitVolatilityModel, t_end: f64) -> Result<()> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!(
            "time horizon must be positive, got {t_end}"
        )));
    }
    if m.jumps.is_some() {
        return Err(Error::InvalidInput(
            "diffusion-only algorithm invoked on a jump model".into(),
        ));
    }
    Ok(())
}
