//! Converging probability brackets and retrospective Bernoulli sampling.
//!
//! A [`ProbabilityEnclosure`] is a pair `[lo, hi]` guaranteed to contain an
//! analytically intractable probability, together with a `refine` action that
//! tightens the bracket. Events of such probabilities are realised without
//! ever evaluating them: draw `u ~ U(0,1)` and refine until `u < lo` (event
//! happens) or `u > hi` (it does not). Enclosures compose: products,
//! differences, sums and ratios of enclosures are again enclosures, which is
//! how joint band events and conditional layer probabilities are decided.

use rand::Rng;

use super::series::BandSeries;
use crate::error::{Error, Result};

/// Refinement cap before a retrospective decision is declared a numeric
/// failure. Exactness has to fail loudly rather than fall back to an
/// approximation.
pub const REFINE_CAP: u64 = 10_000;

#[derive(Debug, Clone)]
enum Kind {
    Exact,
    Band(BandSeries),
    /// Synthetic geometrically-shrinking bracket around a fixed target.
    Converging { target: f64, halfwidth: f64, shrink: f64 },
    Product(Vec<ProbabilityEnclosure>),
    Difference(Box<(ProbabilityEnclosure, ProbabilityEnclosure)>),
    Ratio(Box<(ProbabilityEnclosure, ProbabilityEnclosure)>),
    Sum(Vec<ProbabilityEnclosure>),
}

/// A converging bracket `[lo, hi]` of a probability, refinable on demand.
#[derive(Debug, Clone)]
pub struct ProbabilityEnclosure {
    kind: Kind,
    lo: f64,
    hi: f64,
    refinements: u64,
}

impl ProbabilityEnclosure {
    fn from_kind(kind: Kind) -> Self {
        let mut e = ProbabilityEnclosure {
            kind,
            lo: 0.0,
            hi: 1.0,
            refinements: 0,
        };
        let (lo, hi) = e.compute_bounds();
        e.lo = lo;
        e.hi = hi;
        e
    }

    /// A fully resolved probability.
    pub fn exact(p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
        ProbabilityEnclosure {
            kind: Kind::Exact,
            lo: p,
            hi: p,
            refinements: 0,
        }
    }

    /// Synthetic enclosure converging geometrically to `target`; used to
    /// exercise retrospective sampling machinery in isolation.
    pub fn converging(target: f64, halfwidth: f64, shrink: f64) -> Self {
        assert!((0.0..=1.0).contains(&target));
        assert!(halfwidth >= 0.0 && shrink > 0.0 && shrink < 1.0);
        Self::from_kind(Kind::Converging {
            target,
            halfwidth,
            shrink,
        })
    }

    pub(crate) fn band(dt: f64, x: f64, y: f64, lower: f64, upper: f64) -> Self {
        if x <= lower || x >= upper || y <= lower || y >= upper {
            // An endpoint on or outside the band: the path escapes almost
            // surely, so the bracket collapses immediately.
            return Self::exact(0.0);
        }
        Self::from_kind(Kind::Band(BandSeries::new(dt, x, y, lower, upper)))
    }

    /// Product of independent event probabilities.
    pub fn product(factors: Vec<ProbabilityEnclosure>) -> Self {
        Self::from_kind(Kind::Product(factors))
    }

    /// `a - b` for nested events (`b`'s event implies `a`'s).
    pub fn difference(a: ProbabilityEnclosure, b: ProbabilityEnclosure) -> Self {
        Self::from_kind(Kind::Difference(Box::new((a, b))))
    }

    /// `a / b` for a conditional probability with `a <= b`.
    pub fn ratio(a: ProbabilityEnclosure, b: ProbabilityEnclosure) -> Self {
        Self::from_kind(Kind::Ratio(Box::new((a, b))))
    }

    /// Sum of probabilities of disjoint events.
    pub fn sum(terms: Vec<ProbabilityEnclosure>) -> Self {
        Self::from_kind(Kind::Sum(terms))
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn refinements(&self) -> u64 {
        self.refinements
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    fn compute_bounds(&mut self) -> (f64, f64) {
        match &mut self.kind {
            Kind::Exact => (self.lo, self.hi),
            Kind::Band(series) => series.bounds(),
            Kind::Converging {
                target, halfwidth, ..
            } => (
                (*target - *halfwidth).max(0.0),
                (*target + *halfwidth).min(1.0),
            ),
            Kind::Product(factors) => factors.iter().fold((1.0, 1.0), |(lo, hi), f| {
                (lo * f.lo, hi * f.hi)
            }),
            Kind::Difference(parts) => {
                let (a, b) = &**parts;
                ((a.lo - b.hi).max(0.0), (a.hi - b.lo).clamp(0.0, 1.0))
            }
            Kind::Ratio(parts) => {
                let (a, b) = &**parts;
                let lo = if b.hi > 0.0 { (a.lo / b.hi).min(1.0) } else { 1.0 };
                let hi = if b.lo > 0.0 { (a.hi / b.lo).min(1.0) } else { 1.0 };
                (lo.min(hi), hi)
            }
            Kind::Sum(terms) => {
                let lo: f64 = terms.iter().map(|t| t.lo).sum();
                let hi: f64 = terms.iter().map(|t| t.hi).sum();
                (lo.min(1.0), hi.min(1.0))
            }
        }
    }

    fn step_children(&mut self) -> Result<()> {
        match &mut self.kind {
            Kind::Exact => {}
            Kind::Band(series) => series.step(),
            Kind::Converging { halfwidth, shrink, .. } => *halfwidth *= *shrink,
            Kind::Product(factors) | Kind::Sum(factors) => {
                for f in factors.iter_mut().filter(|f| !f.is_degenerate()) {
                    f.refine()?;
                }
            }
            Kind::Difference(parts) | Kind::Ratio(parts) => {
                let (a, b) = &mut **parts;
                if !a.is_degenerate() {
                    a.refine()?;
                }
                if !b.is_degenerate() {
                    b.refine()?;
                }
            }
        }
        Ok(())
    }

    /// Tighten the bracket one step. Bounds are monotone by construction:
    /// `lo` never decreases, `hi` never increases, and `lo <= hi` always.
    pub fn refine(&mut self) -> Result<()> {
        if self.refinements >= REFINE_CAP {
            return Err(Error::NumericFailure(format!(
                "enclosure refinement cap ({REFINE_CAP}) reached with bracket [{}, {}]",
                self.lo, self.hi
            )));
        }
        self.refinements += 1;
        self.step_children()?;
        let (lo, hi) = self.compute_bounds();
        assert!(
            lo >= self.lo - 1e-9 && hi <= self.hi + 1e-9 && lo <= hi + 1e-9,
            "enclosure refinement broke monotonicity: [{}, {}] -> [{lo}, {hi}]",
            self.lo,
            self.hi,
        );
        self.lo = lo.clamp(self.lo, 1.0);
        self.hi = hi.clamp(0.0, self.hi);
        if self.lo > self.hi {
            let m = 0.5 * (self.lo + self.hi);
            self.lo = m;
            self.hi = m;
        }
        Ok(())
    }

    /// Refine until the bracket width drops to `tol`.
    pub fn refine_to_width(&mut self, tol: f64) -> Result<()> {
        while self.width() > tol {
            self.refine()?;
        }
        Ok(())
    }

    /// Midpoint of a bracket refined to near-degeneracy; for reporting only.
    pub fn point_estimate(&mut self, tol: f64) -> Result<f64> {
        self.refine_to_width(tol)?;
        Ok(0.5 * (self.lo + self.hi))
    }
}

/// Realise an event of the enclosure's limiting probability: draw one
/// uniform and refine until the comparison resolves.
///
/// Ties against a non-degenerate bracket trigger one more refinement; a tie
/// against a degenerate bracket resolves true at `lo` and false at `hi`.
pub fn bernoulli_from_enclosure<R: Rng + ?Sized>(
    enclosure: &mut ProbabilityEnclosure,
    rng: &mut R,
) -> Result<bool> {
    let u: f64 = rng.random();
    loop {
        if u < enclosure.lo {
            return Ok(true);
        }
        if u > enclosure.hi {
            return Ok(false);
        }
        if enclosure.is_degenerate() {
            return Ok(u <= enclosure.lo);
        }
        enclosure.refine()?;
    }
}
