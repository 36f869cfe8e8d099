//! Alternating series for two-sided Brownian-bridge non-crossing
//! probabilities.
//!
//! For a Brownian bridge from `(s, x)` to `(t, y)` the probability of staying
//! strictly inside the band `(l, u)` follows from the classical method of
//! images. Writing `D = u - l`, `dt = t - s`, `a = x - l`, `b = y - l`:
//!
//! ```text
//! P = 1 - sum_{j>=1} (sigma_j - tau_j)
//! sigma_j = exp{-2 (jD - a)(jD - b) / dt} + exp{-2 ((j-1)D + a)((j-1)D + b) / dt}
//! tau_j   = exp{-2 j (j D^2 + D (a - b)) / dt} + exp{-2 j (j D^2 - D (a - b)) / dt}
//! ```
//!
//! When both endpoints lie inside the band the interleaved term sequence
//! `sigma_1 >= tau_1 >= sigma_2 >= ...` is decreasing, so truncating after a
//! `sigma` term gives a lower bound and truncating after a `tau` term gives an
//! upper bound. Successive partial sums therefore yield a monotonically
//! shrinking bracket around the true probability, which is exactly what
//! retrospective sampling needs.

/// Incrementally refined bracket of a two-sided non-crossing probability.
#[derive(Debug, Clone)]
pub(crate) struct BandSeries {
    dt: f64,
    width: f64,
    a: f64,
    b: f64,
    pairs: u32,
    /// Raw running sum after the last full (sigma, tau) pair.
    raw_hi: f64,
    lo: f64,
    hi: f64,
}

impl BandSeries {
    /// Both endpoints must lie strictly inside the band; callers handle the
    /// degenerate outside/boundary cases (probability zero) themselves.
    pub(crate) fn new(dt: f64, x: f64, y: f64, lower: f64, upper: f64) -> Self {
        debug_assert!(dt > 0.0);
        debug_assert!(lower < upper);
        debug_assert!(x > lower && x < upper && y > lower && y < upper);
        BandSeries {
            dt,
            width: upper - lower,
            a: x - lower,
            b: y - lower,
            pairs: 0,
            raw_hi: 1.0,
            lo: 0.0,
            hi: 1.0,
        }
    }

    pub(crate) fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn sigma(&self, j: f64) -> f64 {
        let d = self.width;
        let e1 = (j * d - self.a) * (j * d - self.b);
        let e2 = ((j - 1.0) * d + self.a) * ((j - 1.0) * d + self.b);
        (-2.0 * e1 / self.dt).exp() + (-2.0 * e2 / self.dt).exp()
    }

    fn tau(&self, j: f64) -> f64 {
        let d = self.width;
        let diff = d * (self.a - self.b);
        let e1 = j * (j * d * d + diff);
        let e2 = j * (j * d * d - diff);
        (-2.0 * e1 / self.dt).exp() + (-2.0 * e2 / self.dt).exp()
    }

    /// Add one (sigma, tau) pair, tightening both bounds.
    pub(crate) fn step(&mut self) {
        self.pairs += 1;
        let j = f64::from(self.pairs);
        let raw_lo = self.raw_hi - self.sigma(j);
        self.raw_hi = raw_lo + self.tau(j);
        // The mathematical bounds are monotone; clamping only removes
        // floating-point dust and the pre-convergence excursions below 0.
        self.lo = raw_lo.clamp(self.lo, 1.0);
        self.hi = self.raw_hi.clamp(0.0, self.hi);
        if self.lo > self.hi {
            let m = 0.5 * (self.lo + self.hi);
            self.lo = m;
            self.hi = m;
        }
    }
}
