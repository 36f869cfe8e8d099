//! Conditioned adaptive unbounded exact algorithm.
//!
//! Rao-Blackwellised variant of the single-layer sampler: skeletal points
//! arrive as exponential spacings emanating from interval midpoints, each
//! placement refines the layer on the two child sub-intervals, and the
//! acceptance probability is decomposed so cheap factors are evaluated first.
//! Work still to be done lives in an ordered set of interval records,
//! processed breadth-first; an interval whose arrival overshoots its
//! half-width is resolved and leaves the set.

use rand::Rng;
use std::collections::VecDeque;
use std::time::Instant;

use crate::cuea::{
    check_diffusion_inputs, point_accept_prob, sample_exponential, PHI_BOUND_SLACK,
};
use crate::error::{Error, Result};
use crate::layers::{refine_layers, sample_layer, IntervalRecord};
use crate::layers::sample_point_given_event;
use crate::model::UnitVolatilityModel;
use crate::skeleton::{assert_tiling, DiagnosticCounters, Segment, SkeletalPoint, SkeletonCauea};

/// Ordered work set of unresolved intervals; the head is processed next.
#[derive(Debug, Default)]
pub struct WorkSet {
    queue: VecDeque<IntervalRecord>,
}

impl WorkSet {
    pub fn new(initial: IntervalRecord) -> Self {
        let mut queue = VecDeque::new();
        queue.push_back(initial);
        WorkSet { queue }
    }

    pub fn pop(&mut self) -> Option<IntervalRecord> {
        self.queue.pop_front()
    }

    pub fn push(&mut self, rec: IntervalRecord) {
        self.queue.push_back(rec);
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Active records and resolved segments must partition `[t0, t1]` with
    /// bitwise-shared boundaries.
    pub fn assert_partition(&self, resolved: &[Segment], t0: f64, t1: f64) -> Result<()> {
        let mut spans: Vec<(f64, f64)> = self
            .queue
            .iter()
            .map(|r| (r.outer_s, r.outer_t))
            .chain(resolved.iter().map(|s| (s.t0, s.t1)))
            .collect();
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut cursor = t0;
        for (s, t) in spans {
            if s != cursor {
                return Err(Error::InvariantViolation(format!(
                    "work set tiling broken at {cursor}: next span starts at {s}"
                )));
            }
            cursor = t;
        }
        if cursor != t1 {
            return Err(Error::InvariantViolation(format!(
                "work set tiling ends at {cursor}, expected {t1}"
            )));
        }
        Ok(())
    }
}

/// Outcome of processing one interval record.
#[derive(Debug)]
pub enum BisectOutcome {
    /// Arrival overshot the half-width: the interval is resolved.
    Dropped(IntervalRecord),
    /// The proposal is rejected (point thinning or layer re-basing).
    Rejected,
    /// A skeletal point was placed and the interval split in two.
    Split {
        xi: f64,
        value: f64,
        left: PlacedChild,
        right: PlacedChild,
    },
}

/// A child interval either re-enters the work set or, when its active
/// stretch has been fully cleared, resolves immediately.
#[derive(Debug)]
pub enum PlacedChild {
    Active(IntervalRecord),
    Resolved(Segment),
}

fn make_child(
    outer_s: f64,
    outer_t: f64,
    active_s: f64,
    active_t: f64,
    x: f64,
    y: f64,
    layer: crate::layers::Layer,
) -> Result<PlacedChild> {
    if active_s < active_t {
        Ok(PlacedChild::Active(IntervalRecord::new(
            outer_s, outer_t, active_s, active_t, x, y, layer,
        )?))
    } else {
        Ok(PlacedChild::Resolved(Segment::new(
            outer_s, x, outer_t, y, layer,
        )?))
    }
}

/// Process one record: exponential arrival, point placement and thinning,
/// child-layer refinement and the re-basing rejection. `lambda_bound` lifts
/// the thinning graph for jump models; `intensity_at` evaluates the jump
/// intensity at the placed point (constant zero for pure diffusions).
pub(crate) fn bisect_step_inner<R: Rng>(
    rec: IntervalRecord,
    m: &UnitVolatilityModel,
    lambda_bound: f64,
    intensity_at: &dyn Fn(f64) -> f64,
    counters: &mut DiagnosticCounters,
    rng: &mut R,
) -> Result<BisectOutcome> {
    let (phi_lo, phi_hi) = (rec.layer.phi_lo, rec.layer.phi_hi);
    let rate = 2.0 * (lambda_bound + phi_hi - phi_lo);
    let tau = sample_exponential(rate, rng)?;
    let d = rec.half_width();
    if tau >= d {
        return Ok(BisectOutcome::Dropped(rec));
    }
    let mid = rec.midpoint();
    let xi = if rng.random::<f64>() < 0.5 {
        mid - tau
    } else {
        mid + tau
    };
    let value = sample_point_given_event(
        rec.outer_s,
        rec.x,
        rec.outer_t,
        rec.y,
        rec.layer.band,
        rec.layer.inner,
        xi,
        rng,
    )?;
    counters.phi_evaluations += 1;
    let phi_at = m.phi_value(value);
    let lambda_at = intensity_at(value);
    if lambda_at > lambda_bound + 1e-12 {
        return Err(Error::ConditionViolation {
            condition: "jump-rate",
            detail: format!("lambda({value}) = {lambda_at} exceeds bound {lambda_bound}"),
        });
    }
    // Point thinning factor (Lambda + U - phi - lambda) / (Lambda + U - L).
    let denom = lambda_bound + phi_hi - phi_lo;
    let _ = point_accept_prob(phi_lo, phi_hi, phi_at)?; // bound check with slack
    let accept = ((lambda_bound + phi_hi - phi_at - lambda_at) / denom).clamp(0.0, 1.0);
    if rng.random::<f64>() >= accept {
        return Ok(BisectOutcome::Rejected);
    }
    let range = m.phi_range_fn();
    let (mut left_layer, mut right_layer) = refine_layers(&rec, xi, value, &range, rng)?;
    for child in [&mut left_layer, &mut right_layer] {
        if child.phi_lo < phi_lo - PHI_BOUND_SLACK {
            return Err(Error::InvariantViolation(format!(
                "child layer lower bound {} fell below parent {phi_lo}",
                child.phi_lo
            )));
        }
        child.phi_lo = child.phi_lo.max(phi_lo);
        child.phi_hi = child.phi_hi.min(phi_hi).max(child.phi_lo);
    }
    // Re-base the remaining active stretches on the tighter child floors.
    let rebased = left_layer.phi_lo + right_layer.phi_lo - 2.0 * phi_lo;
    let keep = (-rebased * (d - tau)).exp();
    if rng.random::<f64>() >= keep {
        return Ok(BisectOutcome::Rejected);
    }
    let left = make_child(
        rec.outer_s,
        xi,
        rec.s,
        mid - tau,
        rec.x,
        value,
        left_layer,
    )?;
    let right = make_child(
        xi,
        rec.outer_t,
        mid + tau,
        rec.t,
        value,
        rec.y,
        right_layer,
    )?;
    Ok(BisectOutcome::Split {
        xi,
        value,
        left,
        right,
    })
}

/// Diffusion-only step used by the adaptive bridge sampler.
pub fn bisect_step<R: Rng>(
    rec: IntervalRecord,
    m: &UnitVolatilityModel,
    counters: &mut DiagnosticCounters,
    rng: &mut R,
) -> Result<BisectOutcome> {
    bisect_step_inner(rec, m, 0.0, &|_| 0.0, counters, rng)
}

fn single_proposal<R: Rng>(
    m: &UnitVolatilityModel,
    x: f64,
    y: f64,
    t_end: f64,
    counters: &mut DiagnosticCounters,
    rng: &mut R,
) -> Result<Option<SkeletonCauea>> {
    counters.proposals += 1;
    let range = m.phi_range_fn();
    let layer = sample_layer(0.0, t_end, x, y, 0.5 * t_end.sqrt(), &range, rng)?;
    let keep = (-(layer.phi_lo - m.phi_floor) * t_end).exp();
    if rng.random::<f64>() >= keep {
        counters.pre_rejections += 1;
        return Ok(None);
    }
    let mut work = WorkSet::new(IntervalRecord::new(0.0, t_end, 0.0, t_end, x, y, layer)?);
    let mut segments: Vec<Segment> = Vec::new();
    let mut points: Vec<SkeletalPoint> = Vec::new();
    while let Some(rec) = work.pop() {
        match bisect_step(rec, m, counters, rng)? {
            BisectOutcome::Dropped(rec) => segments.push(Segment::from_record(&rec)),
            BisectOutcome::Rejected => {
                counters.thinning_rejections += 1;
                return Ok(None);
            }
            BisectOutcome::Split {
                xi,
                value,
                left,
                right,
            } => {
                points.push(SkeletalPoint { time: xi, value });
                for child in [left, right] {
                    match child {
                        PlacedChild::Active(r) => work.push(r),
                        PlacedChild::Resolved(s) => segments.push(s),
                    }
                }
            }
        }
        work.assert_partition(&segments, 0.0, t_end)?;
    }
    points.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    segments.sort_by(|a, b| a.t0.partial_cmp(&b.t0).unwrap());
    assert_tiling(&segments, 0.0, t_end)?;
    counters.acceptances += 1;
    counters.record_kappa(points.len());
    Ok(Some(SkeletonCauea {
        x,
        y,
        t_end,
        points,
        segments,
    }))
}

/// Simulate one accepted skeleton of the bridge law from `(0, x)` to
/// `(t_end, y)` with per-sub-interval layers.
pub fn simulate_cauea<R: Rng>(
    m: &UnitVolatilityModel,
    x: f64,
    y: f64,
    t_end: f64,
    rng: &mut R,
) -> Result<(SkeletonCauea, DiagnosticCounters)> {
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

/// Empirical per-proposal acceptance rate with binomial standard error.
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
