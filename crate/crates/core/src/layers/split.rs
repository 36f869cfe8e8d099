//! Conditioning machinery for layered bridge segments.
//!
//! A segment's layer is a partition cell of bridge path space: the path is
//! contained in an outer band and, for nesting levels above the first, is
//! additionally known to leave the previous (inner) band somewhere in the
//! segment. Both parts of the event must be carried through every
//! conditioning step — sampling an interior point, or splitting a segment in
//! two — otherwise the restored path law is biased towards paths that hug the
//! band centre. Splitting resolves the exclusion into the two children by
//! sampling which side actually leaves the inner band, after which each child
//! again carries at most one exclusion.

use rand::Rng;

use super::bridge::{bridge_moments, sample_truncated_normal};
use super::enclosure::{bernoulli_from_enclosure, ProbabilityEnclosure};
use super::{Band, Layer};
use crate::error::{Error, Result};

/// Rejection-proposal cap for conditional point simulation.
pub const PROPOSAL_CAP: u32 = 1_000_000;

/// Cap on nested band walks; bands grow linearly so this is never binding in
/// practice.
const LAYER_WALK_CAP: u32 = 1_000;

/// Containment probability of a bridge from `(t0, x0)` to `(t1, x1)` in
/// `band`, as a refinable enclosure.
pub(crate) fn containment(t0: f64, x0: f64, t1: f64, x1: f64, band: Band) -> ProbabilityEnclosure {
    ProbabilityEnclosure::band(t1 - t0, x0, x1, band.lo, band.hi)
}

/// Probability of the segment's layer event given an interior value `v` at
/// time `q`: the product of the two sub-bridge containment probabilities,
/// minus (for a partition cell with an exclusion) the probability that both
/// sub-bridges stay inside the inner band.
pub(crate) fn event_prob_given_point(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    band: Band,
    inner: Option<Band>,
    q: f64,
    v: f64,
) -> ProbabilityEnclosure {
    let outer = ProbabilityEnclosure::product(vec![
        containment(t0, x0, q, v, band),
        containment(q, v, t1, x1, band),
    ]);
    match inner {
        Some(i) if i.contains(v) => ProbabilityEnclosure::difference(
            outer,
            ProbabilityEnclosure::product(vec![
                containment(t0, x0, q, v, i),
                containment(q, v, t1, x1, i),
            ]),
        ),
        _ => outer,
    }
}

/// Proposals tried from the plain band-truncated marginal before switching
/// to the zoned proposal.
const NAIVE_PROPOSAL_CAP: u32 = 2_000;

/// Draw the bridge value at `q` conditional on the segment's layer event.
///
/// Plain rejection (propose from the band-truncated bridge marginal, accept
/// with the event probability) is fast in the common case but its expected
/// cost is the reciprocal of the event probability, and segments conditioned
/// on rare events do occur: their layers were sampled with exactly those
/// probabilities. After a bounded number of plain proposals the sampler
/// switches to a zoned proposal whose acceptance rate is uniformly of order
/// one: the band is sliced finely enough that a certified closed-form upper
/// bound on the event probability is nearly constant per slice, slices are
/// proposed proportionally to (mass x bound), and acceptance divides the
/// bound out again — exact for any valid bound.
pub(crate) fn sample_point_given_event<R: Rng + ?Sized>(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    band: Band,
    inner: Option<Band>,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    let (mean, var) = bridge_moments(t0, x0, t1, x1, q);
    let sd = var.sqrt();
    for _ in 0..NAIVE_PROPOSAL_CAP {
        let v = sample_truncated_normal(mean, sd, band.lo, band.hi, rng)?;
        let mut accept = event_prob_given_point(t0, x0, t1, x1, band, inner, q, v);
        if bernoulli_from_enclosure(&mut accept, rng)? {
            assert!(band.contains(v), "sampled point {v} escaped band {band:?}");
            return Ok(v);
        }
    }
    zoned_point_sample(t0, x0, t1, x1, band, inner, q, mean, sd, rng)
}

/// One-sided crossing probability of a bridge over duration `dt` from
/// `anchor` to `v`, for a barrier at distance `d_anchor` and `d_v` on the
/// same side of both points (zero distances make the crossing certain).
fn one_sided_cross(d_anchor: f64, d_v: f64, dt: f64) -> f64 {
    if d_anchor <= 0.0 || d_v <= 0.0 {
        return 1.0;
    }
    (-2.0 * d_anchor * d_v / dt).exp()
}

/// Certified upper bound on the event probability over a value slice
/// `[v_lo, v_hi]`, built from exact one-sided reflection formulas evaluated
/// at the slice edge that maximises each factor.
fn slice_bound(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    band: Band,
    inner: Option<Band>,
    q: f64,
    v_lo: f64,
    v_hi: f64,
) -> f64 {
    let dt_l = q - t0;
    let dt_r = t1 - q;
    // Containment in the outer band: per side, the path must avoid both
    // boundaries; one-sided non-crossing probabilities bound it above. Each
    // factor peaks at the slice edge farthest from its boundary.
    let contain = |anchor: f64, dt: f64| -> f64 {
        let up = 1.0 - one_sided_cross(band.hi - anchor, band.hi - v_lo.max(band.lo), dt);
        let dn = 1.0 - one_sided_cross(anchor - band.lo, v_hi.min(band.hi) - band.lo, dt);
        up.min(dn).clamp(0.0, 1.0)
    };
    let mut bound = contain(x0, dt_l) * contain(x1, dt_r);
    if let Some(i) = inner {
        if v_lo >= i.lo && v_hi <= i.hi {
            // Slice inside the exclusion band: the event also requires some
            // side to leave it, bounded by the sum of one-sided crossing
            // probabilities, each peaking at the slice edge nearest its
            // boundary.
            let exit = |anchor: f64, dt: f64| -> f64 {
                one_sided_cross(i.hi - anchor, i.hi - v_hi, dt)
                    + one_sided_cross(anchor - i.lo, v_lo - i.lo, dt)
            };
            bound = bound.min(exit(x0, dt_l) + exit(x1, dt_r));
        }
    }
    bound.clamp(0.0, 1.0)
}

#[allow(clippy::too_many_arguments)]
fn zoned_point_sample<R: Rng + ?Sized>(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    band: Band,
    inner: Option<Band>,
    q: f64,
    mean: f64,
    sd: f64,
    rng: &mut R,
) -> Result<f64> {
    use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
    // Slice width: fine enough that the certified bounds are near-constant
    // per slice. The bound exponents change at rate 2 d_anchor / dt per unit
    // of v, so a slice of width 1/rate keeps each factor within a factor e.
    let dt_l = q - t0;
    let dt_r = t1 - q;
    let mut rate: f64 = 1.0 / sd;
    for boundary in [band.lo, band.hi, inner.map_or(band.lo, |i| i.lo), inner.map_or(band.hi, |i| i.hi)] {
        rate = rate.max(2.0 * (boundary - x0).abs() / dt_l + 2.0 * (boundary - x1).abs() / dt_r);
    }
    let width = (1.0 / rate).min(sd).max(band.width() / 2_048.0);
    let slices = ((band.width() / width).ceil() as usize).clamp(1, 2_048);
    let width = band.width() / slices as f64;

    let gauss = StatNormal::new(mean, sd).map_err(|e| Error::NumericFailure(e.to_string()))?;
    let mut cut_points = Vec::with_capacity(slices + 1);
    for k in 0..=slices {
        cut_points.push(band.lo + width * k as f64);
    }
    if let Some(i) = inner {
        // Align slice edges with the exclusion boundaries so every slice is
        // entirely inside or outside it.
        for b in [i.lo, i.hi] {
            if b > band.lo && b < band.hi {
                cut_points.push(b);
            }
        }
        cut_points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cut_points.dedup();
    }
    let mut weights = Vec::with_capacity(cut_points.len() - 1);
    let mut total = 0.0;
    for w in cut_points.windows(2) {
        let mass = gauss.cdf(w[1]) - gauss.cdf(w[0]);
        let b = slice_bound(t0, x0, t1, x1, band, inner, q, w[0], w[1]);
        let weight = mass * b;
        total += weight;
        weights.push((w[0], w[1], b, total));
    }
    if !(total > 0.0) {
        return Err(Error::NumericFailure(format!(
            "conditional point law at q = {q} has no representable mass"
        )));
    }
    for _ in 0..(PROPOSAL_CAP - NAIVE_PROPOSAL_CAP) {
        let u: f64 = rng.random::<f64>() * total;
        let idx = weights.partition_point(|&(_, _, _, cum)| cum < u).min(weights.len() - 1);
        let (lo, hi, bound, _) = weights[idx];
        if bound <= 0.0 {
            continue;
        }
        let v = sample_truncated_normal(mean, sd, lo, hi, rng)?;
        let event = event_prob_given_point(t0, x0, t1, x1, band, inner, q, v);
        let mut accept = ProbabilityEnclosure::ratio(event, ProbabilityEnclosure::exact(bound));
        if bernoulli_from_enclosure(&mut accept, rng)? {
            assert!(band.contains(v), "sampled point {v} escaped band {band:?}");
            return Ok(v);
        }
    }
    Err(Error::NumericFailure(format!(
        "conditional point simulation exceeded {PROPOSAL_CAP} proposals at q = {q}"
    )))
}

/// Band/exclusion pair for one child segment after a split.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChildEvent {
    pub band: Band,
    pub inner: Option<Band>,
}

/// Resolve a segment's layer event across a split at `(q, v)`.
///
/// A plain containment event passes to both children unchanged. A partition
/// cell with an exclusion resolves it: when `v` itself lies outside the inner
/// band the exclusion is already witnessed, otherwise the side (or sides)
/// that leave the inner band are sampled from the exact conditional law via
/// enclosure comparisons.
pub(crate) fn resolve_split<R: Rng + ?Sized>(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    band: Band,
    inner: Option<Band>,
    q: f64,
    v: f64,
    rng: &mut R,
) -> Result<(ChildEvent, ChildEvent)> {
    let plain = ChildEvent { band, inner: None };
    let Some(i) = inner else {
        return Ok((plain, plain));
    };
    if !i.contains(v) {
        // The fixed point already witnesses the exclusion.
        return Ok((plain, plain));
    }
    let left_outer = containment(t0, x0, q, v, band);
    let right_outer = containment(q, v, t1, x1, band);
    let left_inner = containment(t0, x0, q, v, i);
    let right_inner = containment(q, v, t1, x1, i);
    let denom = ProbabilityEnclosure::difference(
        ProbabilityEnclosure::product(vec![left_outer.clone(), right_outer.clone()]),
        ProbabilityEnclosure::product(vec![left_inner.clone(), right_inner.clone()]),
    );
    // P(left stays inside the inner band | event, v).
    let mut left_contained = ProbabilityEnclosure::ratio(
        ProbabilityEnclosure::product(vec![
            left_inner.clone(),
            ProbabilityEnclosure::difference(right_outer.clone(), right_inner.clone()),
        ]),
        denom,
    );
    let excluding = ChildEvent {
        band,
        inner: Some(i),
    };
    let contained_inner = ChildEvent {
        band: i,
        inner: None,
    };
    if bernoulli_from_enclosure(&mut left_contained, rng)? {
        return Ok((contained_inner, excluding));
    }
    // Left leaves the inner band; the right side is then free to stay inside.
    let mut right_contained = ProbabilityEnclosure::ratio(right_inner, right_outer);
    if bernoulli_from_enclosure(&mut right_contained, rng)? {
        Ok((excluding, contained_inner))
    } else {
        Ok((excluding, excluding))
    }
}

/// Sample the nested-band partition of a containment event: the smallest band
/// of the family `hull(x0, x1) +- k a`, clipped to `parent`, that contains
/// the whole sub-path. Returns the band, the exclusion (for `k >= 2`) and the
/// level `k`.
pub(crate) fn sample_nested_layer<R: Rng + ?Sized>(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    parent: Band,
    a: f64,
    rng: &mut R,
) -> Result<(Band, Option<Band>, u32)> {
    debug_assert!(a > 0.0);
    let hull = Band::hull(x0, x1);
    let parent_prob = containment(t0, x0, t1, x1, parent);
    let u: f64 = rng.random();
    let mut prev: Option<Band> = None;
    for k in 1..=LAYER_WALK_CAP {
        let cand = hull.expand(f64::from(k) * a).intersect(parent);
        if cand == parent {
            // The family has saturated the parent band: conditional
            // probability one, so the walk stops here by construction.
            return Ok((cand, prev, k));
        }
        let mut q = ProbabilityEnclosure::ratio(
            containment(t0, x0, t1, x1, cand),
            parent_prob.clone(),
        );
        loop {
            if u < q.lo() {
                return Ok((cand, prev, k));
            }
            if u > q.hi() {
                break;
            }
            if q.is_degenerate() {
                if u <= q.lo() {
                    return Ok((cand, prev, k));
                }
                break;
            }
            q.refine()?;
        }
        prev = Some(cand);
    }
    Err(Error::NumericFailure(format!(
        "nested layer walk exceeded {LAYER_WALK_CAP} bands"
    )))
}

/// Build a layer for a child segment: indicator-resolved events keep their
/// bands, plain containment events are refined to their nested partition
/// cell.
pub(crate) fn child_layer<R: Rng + ?Sized>(
    t0: f64,
    x0: f64,
    t1: f64,
    x1: f64,
    base: ChildEvent,
    parent_index: u32,
    phi_range: &dyn Fn(f64, f64) -> (f64, f64),
    rng: &mut R,
) -> Result<Layer> {
    if base.inner.is_some() {
        return Ok(Layer::new(
            base.band,
            base.inner,
            parent_index,
            phi_range,
        ));
    }
    let a = 0.5 * (t1 - t0).sqrt();
    let (band, inner, k) = sample_nested_layer(t0, x0, t1, x1, base.band, a, rng)?;
    Ok(Layer::new(band, inner, k, phi_range))
}
