//! Brownian-bridge layer machinery.
//!
//! A *layer* is a compact band known to contain a whole bridge segment,
//! simulated unbiasedly by comparing one uniform draw against nested
//! band-probability enclosures and refining retrospectively until the
//! comparison resolves. Layers make the acceptance probabilities of the exact
//! algorithms computable with finite work (they induce bounds on the drift
//! functional over the segment) and make restoration possible (conditional
//! point simulation within the band).

mod bridge;
mod enclosure;
mod series;
mod split;

pub use bridge::{bridge_moments, sample_bridge_points, sample_truncated_normal};
pub use enclosure::{bernoulli_from_enclosure, ProbabilityEnclosure, REFINE_CAP};
pub(crate) use split::{child_layer, resolve_split, sample_point_given_event};
pub use split::PROPOSAL_CAP;

use rand::Rng;

use crate::error::{Error, Result};

/// Closed interval of path values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Band { lo, hi }
    }

    /// Smallest band containing both values.
    pub fn hull(x: f64, y: f64) -> Self {
        Band {
            lo: x.min(y),
            hi: x.max(y),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn contains_band(&self, other: &Band) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn expand(&self, by: f64) -> Self {
        Band {
            lo: self.lo - by,
            hi: self.hi + by,
        }
    }

    pub fn intersect(&self, other: Band) -> Self {
        Band {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Compact band constraining one bridge segment, with the induced bounds on
/// the drift functional phi over that band.
///
/// `inner` is the exclusion part of the partition cell: for nesting levels
/// `index >= 2` the path is known to leave the previous band somewhere in the
/// segment. It must be conditioned on alongside the containment, and is
/// resolved into child segments when the segment splits.
#[derive(Debug, Clone)]
pub struct Layer {
    pub band: Band,
    pub inner: Option<Band>,
    pub index: u32,
    pub phi_lo: f64,
    pub phi_hi: f64,
}

impl Layer {
    pub fn new(
        band: Band,
        inner: Option<Band>,
        index: u32,
        phi_range: &dyn Fn(f64, f64) -> (f64, f64),
    ) -> Self {
        let (phi_lo, phi_hi) = phi_range(band.lo, band.hi);
        assert!(
            phi_lo <= phi_hi,
            "phi_range returned an empty interval [{phi_lo}, {phi_hi}]"
        );
        if let Some(i) = &inner {
            debug_assert!(band.contains_band(i));
        }
        Layer {
            band,
            inner,
            index,
            phi_lo,
            phi_hi,
        }
    }
}

/// Element of the adaptive work set: one sub-interval still to be resolved.
///
/// The endpoint values `x`, `y` sit at the *outer* times, which may extend
/// beyond the active sub-interval `[s, t]` when part of the parent interval
/// was already cleared of thinning points.
#[derive(Debug, Clone)]
pub struct IntervalRecord {
    pub outer_s: f64,
    pub outer_t: f64,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub layer: Layer,
}

impl IntervalRecord {
    pub fn new(
        outer_s: f64,
        outer_t: f64,
        s: f64,
        t: f64,
        x: f64,
        y: f64,
        layer: Layer,
    ) -> Result<Self> {
        if !(outer_s <= s && s < t && t <= outer_t) {
            return Err(Error::InvalidInput(format!(
                "interval record times out of order: outer [{outer_s}, {outer_t}], active [{s}, {t}]"
            )));
        }
        if !(layer.band.contains(x) && layer.band.contains(y)) {
            return Err(Error::InvariantViolation(format!(
                "layer band {:?} does not contain endpoints ({x}, {y})",
                layer.band
            )));
        }
        Ok(IntervalRecord {
            outer_s,
            outer_t,
            s,
            t,
            x,
            y,
            layer,
        })
    }

    /// Midpoint of the active sub-interval.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.s + self.t)
    }

    /// Half-width of the active sub-interval.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.t - self.s)
    }
}

/// Enclosure of the probability that a Brownian bridge from `(s, x)` to
/// `(t, y)` stays inside `(lower, upper)`, pre-refined until its width is at
/// most `tol`.
pub fn band_probability(
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<ProbabilityEnclosure> {
    if !(lower < upper) {
        return Err(Error::InvalidInput(format!(
            "band bounds out of order: [{lower}, {upper}]"
        )));
    }
    if !(s < t) {
        return Err(Error::InvalidInput(format!("need s < t, got [{s}, {t}]")));
    }
    let mut e = ProbabilityEnclosure::band(t - s, x, y, lower, upper);
    e.refine_to_width(tol)?;
    Ok(e)
}

/// Unbiased draw of the layer containing a bridge from `(s, x)` to `(t, y)`:
/// the smallest band of the nested family `hull(x, y) +- k a` that contains
/// the whole path. One uniform is compared against the nested containment
/// probabilities, refining retrospectively until the smallest index resolves.
pub fn sample_layer<R: Rng + ?Sized>(
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    a: f64,
    phi_range: &dyn Fn(f64, f64) -> (f64, f64),
    rng: &mut R,
) -> Result<Layer> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("layer resolution must be positive, got {a}")));
    }
    if !(s < t) {
        return Err(Error::InvalidInput(format!("need s < t, got [{s}, {t}]")));
    }
    let hull = Band::hull(x, y);
    let u: f64 = rng.random();
    let mut prev: Option<Band> = None;
    for k in 1..=1_000u32 {
        let cand = hull.expand(f64::from(k) * a);
        let mut p = ProbabilityEnclosure::band(t - s, x, y, cand.lo, cand.hi);
        loop {
            if u < p.lo() {
                return Ok(Layer::new(cand, prev, k, phi_range));
            }
            if u > p.hi() {
                break;
            }
            if p.is_degenerate() {
                if u <= p.lo() {
                    return Ok(Layer::new(cand, prev, k, phi_range));
                }
                break;
            }
            p.refine()?;
        }
        prev = Some(cand);
    }
    Err(Error::NumericFailure(
        "layer walk exceeded 1000 nested bands".into(),
    ))
}

/// Draw the bridge value at `q` conditional on the record's layer, staying
/// exact with respect to the full partition-cell event.
pub fn sample_point_given_layer<R: Rng + ?Sized>(
    rec: &IntervalRecord,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(q > rec.outer_s && q < rec.outer_t) {
        return Err(Error::InvalidInput(format!(
            "query {q} outside outer interval ({}, {})",
            rec.outer_s, rec.outer_t
        )));
    }
    sample_point_given_event(
        rec.outer_s,
        rec.x,
        rec.outer_t,
        rec.y,
        rec.layer.band,
        rec.layer.inner,
        q,
        rng,
    )
}

/// Split the record's layer at the fixed interior point `(xi, x_xi)`,
/// sampling child layers for `[outer_s, xi]` and `[xi, outer_t]` from their
/// exact conditional law. Both child bands nest inside the parent band.
pub fn refine_layers<R: Rng + ?Sized>(
    rec: &IntervalRecord,
    xi: f64,
    x_xi: f64,
    phi_range: &dyn Fn(f64, f64) -> (f64, f64),
    rng: &mut R,
) -> Result<(Layer, Layer)> {
    if !(xi > rec.outer_s && xi < rec.outer_t) {
        return Err(Error::InvalidInput(format!(
            "split time {xi} outside outer interval ({}, {})",
            rec.outer_s, rec.outer_t
        )));
    }
    if !rec.layer.band.contains(x_xi) {
        return Err(Error::InvariantViolation(format!(
            "split value {x_xi} outside layer band {:?}",
            rec.layer.band
        )));
    }
    let (base_l, base_r) = resolve_split(
        rec.outer_s,
        rec.x,
        rec.outer_t,
        rec.y,
        rec.layer.band,
        rec.layer.inner,
        xi,
        x_xi,
        rng,
    )?;
    let left = child_layer(
        rec.outer_s,
        rec.x,
        xi,
        x_xi,
        base_l,
        rec.layer.index,
        phi_range,
        rng,
    )?;
    let right = child_layer(
        xi,
        x_xi,
        rec.outer_t,
        rec.y,
        base_r,
        rec.layer.index,
        phi_range,
        rng,
    )?;
    assert!(
        rec.layer.band.contains_band(&left.band) && rec.layer.band.contains_band(&right.band),
        "child bands escaped the parent band"
    );
    Ok((left, right))
}

#[cfg(test)]
mod tests;
