//! SDE model definitions, the Lamperti transform and model validation.
//!
//! User models enter as [`DiffusionModel`] (drift, volatility, optional
//! jumps, all on the original scale) and are reduced to unit volatility by
//! [`lamperti_transform`]. Everything downstream consumes the transformed
//! [`UnitVolatilityModel`]: its drift `alpha`, the functional
//! `phi = alpha^2/2 + alpha'/2`, the antiderivative `A(u) = int_0^u alpha`,
//! the global floor `Phi <= phi`, a band range oracle for `phi`, and the
//! jump data `(lambda, Lambda, f_nu, f_delta, kappa)`.

pub mod builtins;
mod numeric;

pub use numeric::{integrate, invert_monotone};

use rand::{Rng, RngCore};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Conditional density evaluated as `(x_post, x_pre) -> density`.
pub type JumpDensity = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Jump-size sampler given the pre-jump state.
pub type JumpSampler = Arc<dyn Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync>;

/// Analytic state transform `eta` and its inverse, when known in closed form.
#[derive(Clone)]
pub struct AnalyticTransform {
    pub eta: RealFn,
    pub eta_inv: RealFn,
}

/// Jump component of a diffusion on the original scale.
#[derive(Clone)]
pub struct DiffusionJumps {
    /// State-dependent jump intensity `lambda_V(v) >= 0`.
    pub intensity: RealFn,
    /// Finite bound with `lambda_V <= Lambda`.
    pub intensity_bound: f64,
    /// Jump-size density `f_mu(size; v)`.
    pub size_density: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Jump-size sampler given the pre-jump state.
    pub size_sampler: JumpSampler,
    /// User-asserted bound on the proposal ratio after the transform.
    pub ratio_bound: Option<f64>,
}

/// A scalar SDE `dV = beta(V) dt + sigma(V) dW + dJ` as supplied by the user.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    pub drift: RealFn,
    pub volatility: RealFn,
    pub volatility_deriv: RealFn,
    /// Reference point `v*` anchoring the transform integral.
    pub reference_point: f64,
    /// State-space region of interest (used for bracketing and validation).
    pub domain: (f64, f64),
    /// Analytic transform, if available; otherwise quadrature plus monotone
    /// root-finding to absolute tolerance 1e-12.
    pub transform: Option<AnalyticTransform>,
    pub jumps: Option<DiffusionJumps>,
    /// User-asserted global floor for the transformed phi.
    pub phi_floor: f64,
    /// Lipschitz constant for the heuristic phi range oracle of transformed
    /// models without an analytic range.
    pub phi_lipschitz: Option<f64>,
}

/// Range oracle for phi over a band.
#[derive(Clone)]
pub enum PhiRangeOracle {
    /// Exact range of phi over `[l, u]`.
    Analytic(Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>),
    /// Dense grid plus a Lipschitz slack. Heuristic: exactness claims void.
    GridLipschitz { lipschitz: f64, points: usize },
}

/// Jump data consumed by the jump-diffusion algorithms, on the unit
/// volatility scale.
#[derive(Clone)]
pub struct JumpSpec {
    pub intensity: RealFn,
    pub intensity_bound: f64,
    pub target_density: JumpDensity,
    pub proposal_density: JumpDensity,
    pub proposal_sampler: JumpSampler,
    /// True when the proposal size law ignores the pre-jump state, which is
    /// what the plain proposal assembly order assumes.
    pub proposal_state_free: bool,
    /// kappa bounding `lambda f_nu e^{-dA} / (Lambda f_delta)`.
    pub ratio_bound: f64,
}

/// The transformed SDE with unit volatility that all algorithms consume.
#[derive(Clone)]
pub struct UnitVolatilityModel {
    pub name: String,
    alpha: RealFn,
    alpha_deriv: RealFn,
    antideriv: RealFn,
    phi: Option<RealFn>,
    pub phi_floor: f64,
    phi_range: PhiRangeOracle,
    pub domain: Option<(f64, f64)>,
    forward_transform: Option<RealFn>,
    inverse_transform: Option<RealFn>,
    pub jumps: Option<JumpSpec>,
}

impl fmt::Debug for UnitVolatilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitVolatilityModel")
            .field("name", &self.name)
            .field("phi_floor", &self.phi_floor)
            .field("has_jumps", &self.jumps.is_some())
            .finish()
    }
}

impl UnitVolatilityModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        alpha: RealFn,
        alpha_deriv: RealFn,
        antideriv: RealFn,
        phi: Option<RealFn>,
        phi_floor: f64,
        phi_range: PhiRangeOracle,
    ) -> Self {
        UnitVolatilityModel {
            name: name.into(),
            alpha,
            alpha_deriv,
            antideriv,
            phi,
            phi_floor,
            phi_range,
            domain: None,
            forward_transform: None,
            inverse_transform: None,
            jumps: None,
        }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = Some((lo, hi));
        self
    }

    pub fn with_transform(mut self, eta: RealFn, eta_inv: RealFn) -> Self {
        self.forward_transform = Some(eta);
        self.inverse_transform = Some(eta_inv);
        self
    }

    pub fn with_jumps(mut self, jumps: JumpSpec) -> Self {
        self.jumps = Some(jumps);
        self
    }

    pub fn alpha(&self, x: f64) -> f64 {
        (self.alpha)(x)
    }

    pub fn alpha_deriv(&self, x: f64) -> f64 {
        (self.alpha_deriv)(x)
    }

    /// `A(u) = int_0^u alpha(y) dy`.
    pub fn antiderivative(&self, u: f64) -> f64 {
        (self.antideriv)(u)
    }

    /// `phi(x) = alpha^2(x)/2 + alpha'(x)/2`, via the stored closure when the
    /// model ships a simplified form.
    pub fn phi_value(&self, x: f64) -> f64 {
        match &self.phi {
            Some(f) => f(x),
            None => {
                let a = self.alpha(x);
                0.5 * a * a + 0.5 * self.alpha_deriv(x)
            }
        }
    }

    /// Bounds `(L, U)` with `L <= phi <= U` on `[lower, upper]`, floored at
    /// the global `Phi`.
    pub fn phi_range(&self, lower: f64, upper: f64) -> (f64, f64) {
        let (lo, hi) = match &self.phi_range {
            PhiRangeOracle::Analytic(f) => f(lower, upper),
            PhiRangeOracle::GridLipschitz { lipschitz, points } => {
                let n = (*points).max(2);
                let step = (upper - lower) / (n - 1) as f64;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..n {
                    let v = self.phi_value(lower + step * i as f64);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let slack = 0.5 * lipschitz * step;
                (lo - slack, hi + slack)
            }
        };
        (lo.max(self.phi_floor), hi.max(lo.max(self.phi_floor)))
    }

    /// Closure form of the range oracle, for handing to the layer machinery.
    pub fn phi_range_fn(&self) -> impl Fn(f64, f64) -> (f64, f64) + '_ {
        move |l, u| self.phi_range(l, u)
    }

    /// True when the range oracle is the heuristic grid fallback.
    pub fn phi_range_is_heuristic(&self) -> bool {
        matches!(self.phi_range, PhiRangeOracle::GridLipschitz { .. })
    }

    pub fn has_transform(&self) -> bool {
        self.inverse_transform.is_some()
    }

    /// Map an original-scale value to the transformed scale.
    pub fn to_transformed(&self, v: f64) -> Result<f64> {
        match &self.forward_transform {
            Some(eta) => Ok(eta(v)),
            None => Ok(v),
        }
    }

    /// Map a transformed value back to the original scale.
    pub fn to_original(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        match &self.inverse_transform {
            Some(inv) => Ok(inv(x)),
            None => Ok(x),
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if let Some((lo, hi)) = self.domain {
            if x < lo || x > hi {
                return Err(Error::InvalidInput(format!(
                    "value {x} outside model domain [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Maximum jump intensity: zero for pure diffusions.
    pub fn intensity_bound(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.intensity_bound)
    }
}

/// Evaluate `phi` with a domain check.
pub fn evaluate_phi(m: &UnitVolatilityModel, x: f64) -> Result<f64> {
    m.check_domain(x)?;
    Ok(m.phi_value(x))
}

/// Piecewise path description consumed by the verification oracle: grid
/// values for quadrature plus explicit jump data.
#[derive(Debug, Clone)]
pub struct GridPath {
    pub x0: f64,
    pub x_end: f64,
    /// Grid times spanning `[0, T]`; values are evaluated left of each step.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `(psi, pre, post)` per jump.
    pub jumps: Vec<(f64, f64, f64)>,
}

impl GridPath {
    /// Left-point Riemann integral of `g` along the path.
    fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.times.len().saturating_sub(1) {
            acc += g(self.values[i]) * (self.times[i + 1] - self.times[i]);
        }
        acc
    }
}

/// Log Radon–Nikodym derivative of the unconditioned target law with respect
/// to the driftless unit-volatility proposal law, along a concrete path:
///
/// ```text
/// A(X_T) - A(x) - int phi - int (lambda - Lambda)
///   + sum_i log[ lambda f_nu e^{-dA} / (Lambda f_delta) ]
/// ```
///
/// With no jump component only the first two terms remain. This is the
/// verification oracle's formula; the exact algorithms never integrate.
pub fn log_rnd_unconditioned(m: &UnitVolatilityModel, path: &GridPath, t_end: f64) -> Result<f64> {
    let mut log = m.antiderivative(path.x_end) - m.antiderivative(path.x0);
    log -= path.integrate(|v| m.phi_value(v));
    if let Some(jumps) = &m.jumps {
        let bound = jumps.intensity_bound;
        log -= path.integrate(|v| (jumps.intensity)(v)) - bound * t_end;
        for (idx, &(_, pre, post)) in path.jumps.iter().enumerate() {
            let delta = (jumps.proposal_density)(post, pre);
            if delta <= 0.0 {
                return Err(Error::NumericFailure(format!(
                    "proposal jump density vanished at jump {idx}"
                )));
            }
            let lam = (jumps.intensity)(pre);
            let nu = (jumps.target_density)(post, pre);
            let da = m.antiderivative(post) - m.antiderivative(pre);
            log += (lam * nu / (bound * delta)).ln() - da;
        }
    }
    Ok(log)
}

/// Status of a single checked condition.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotCheckable,
}

#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Witness point (or pair) for failures.
    pub witness: Option<(f64, Option<f64>)>,
    pub detail: String,
}

/// Per-condition validation summary with witnesses and the checked region.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub grid: String,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "validation over {}", self.grid)?;
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::NotCheckable => "not checkable",
            };
            write!(f, "  {:<14} {:<13} {}", c.name, status, c.detail)?;
            if let Some((x, other)) = c.witness {
                write!(f, " [witness x = {x}")?;
                if let Some(y) = other {
                    write!(f, ", paired with {y}")?;
                }
                write!(f, "]")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Desk-scale validation of the model conditions on a grid.
///
/// Existence/uniqueness and global growth cannot be decided by evaluation;
/// they are reported as spot checks only. Failures are report entries, not
/// errors, and always carry a witness.
pub fn validate_model<R: Rng>(
    m: &UnitVolatilityModel,
    grid: &[f64],
    pair_samples: usize,
    rng: &mut R,
) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("validation grid is empty".into()));
    }
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut checks = Vec::new();

    checks.push(ConditionCheck {
        name: "existence",
        status: CheckStatus::NotCheckable,
        witness: None,
        detail: "existence and uniqueness of a weak solution are user-asserted".into(),
    });
    checks.push(ConditionCheck {
        name: "continuity",
        status: CheckStatus::Pass,
        witness: None,
        detail: "unit volatility by construction; smoothness of alpha is user-asserted".into(),
    });

    // Growth bound: report the implied constant on the grid.
    let implied_k = grid
        .iter()
        .map(|&x| (m.alpha(x).powi(2) + 1.0) / (1.0 + x * x))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(ConditionCheck {
        name: "growth",
        status: if implied_k.is_finite() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: None,
        detail: format!("spot check only; implied constant on grid: {implied_k:.6}"),
    });

    // Jump rate: 0 <= lambda <= Lambda.
    match &m.jumps {
        None => checks.push(ConditionCheck {
            name: "jump-rate",
            status: CheckStatus::Pass,
            witness: None,
            detail: "no jump component".into(),
        }),
        Some(j) => {
            let mut witness = None;
            for &x in grid {
                let lam = (j.intensity)(x);
                if lam < 0.0 || lam > j.intensity_bound {
                    witness = Some((x, None));
                    break;
                }
            }
            checks.push(ConditionCheck {
                name: "jump-rate",
                status: if witness.is_none() {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                witness,
                detail: format!("0 <= lambda <= {} on grid", j.intensity_bound),
            });
        }
    }

    // phi floor: the witness is the worst violator on the grid.
    let mut phi_min = f64::INFINITY;
    let mut phi_argmin = grid[0];
    for &x in grid {
        let p = m.phi_value(x);
        if p < phi_min {
            phi_min = p;
            phi_argmin = x;
        }
    }
    let floor_witness = (phi_min < m.phi_floor).then_some((phi_argmin, None));
    checks.push(ConditionCheck {
        name: "phi-floor",
        status: if floor_witness.is_none() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: floor_witness,
        detail: format!("grid minimum of phi = {phi_min:.6}, asserted floor = {}", m.phi_floor),
    });

    // Jump ratio bound on sampled (pre, post) pairs.
    match &m.jumps {
        None => checks.push(ConditionCheck {
            name: "jump-ratio",
            status: CheckStatus::Pass,
            witness: None,
            detail: "no jump component".into(),
        }),
        Some(j) => {
            let mut witness = None;
            let mut worst: f64 = 0.0;
            for _ in 0..pair_samples {
                let pre = grid[rng.random_range(0..grid.len())];
                let post = pre + (j.proposal_sampler)(pre, rng);
                let delta = (j.proposal_density)(post, pre);
                if delta <= 0.0 {
                    continue;
                }
                let da = m.antiderivative(post) - m.antiderivative(pre);
                let ratio = (j.intensity)(pre) * (j.target_density)(post, pre) * (-da).exp()
                    / (j.intensity_bound * delta);
                if ratio > worst {
                    worst = ratio;
                    if ratio > j.ratio_bound * (1.0 + 1e-12) {
                        witness = Some((pre, Some(post)));
                    }
                }
            }
            checks.push(ConditionCheck {
                name: "jump-ratio",
                status: if witness.is_none() {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                witness,
                detail: format!(
                    "worst sampled ratio {worst:.6} against bound {}",
                    j.ratio_bound
                ),
            });
        }
    }

    // phi_range consistency on random sub-intervals.
    let mut range_witness = None;
    'outer: for _ in 0..32 {
        let a = lo + (hi - lo) * rng.random::<f64>();
        let b = lo + (hi - lo) * rng.random::<f64>();
        let (l, u) = (a.min(b), a.max(b) + 1e-9);
        let (pl, pu) = m.phi_range(l, u);
        for i in 0..1000 {
            let x = l + (u - l) * (i as f64 + 0.5) / 1000.0;
            let p = m.phi_value(x);
            if p < pl - 1e-9 || p > pu + 1e-9 {
                range_witness = Some((x, None));
                break 'outer;
            }
        }
    }
    checks.push(ConditionCheck {
        name: "phi-range",
        status: if range_witness.is_none() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: range_witness,
        detail: if m.phi_range_is_heuristic() {
            "heuristic grid oracle — exactness claims void".into()
        } else {
            "analytic range brackets phi on sampled sub-intervals".into()
        },
    });

    Ok(ValidationReport {
        checks,
        grid: format!("[{lo}, {hi}] with {} points", grid.len()),
    })
}

/// Reduce a user diffusion to unit volatility.
///
/// `eta(v) = int_{v*}^{v} 1/sigma(u) du` (analytic when supplied, else
/// adaptive quadrature to 1e-12 with monotone root-finding for the inverse);
/// the transformed drift is `alpha(x) = beta/sigma - sigma'/2` at
/// `v = eta^{-1}(x)`, its derivative comes from a central difference, and the
/// jump component is pushed forward through `eta`.
pub fn lamperti_transform(m: &DiffusionModel) -> Result<UnitVolatilityModel> {
    let sigma = m.volatility.clone();
    let probe = |v: f64| -> Result<f64> {
        let s = sigma(v);
        if !(s > 0.0) {
            return Err(Error::InvalidModel(format!(
                "volatility must be strictly positive; sigma({v}) = {s}"
            )));
        }
        Ok(s)
    };
    probe(m.reference_point)?;

    let (eta, eta_inv): (RealFn, RealFn) = match &m.transform {
        Some(t) => (t.eta.clone(), t.eta_inv.clone()),
        None => {
            let sig = m.volatility.clone();
            let vstar = m.reference_point;
            let domain = m.domain;
            let eta_f = {
                let sig = sig.clone();
                move |v: f64| -> Result<f64> {
                    integrate(|u| 1.0 / sig(u), vstar, v, 1e-12)
                }
            };
            // Fail loudly through the closures: coefficients are evaluated
            // inside sampling loops where a Result cannot propagate.
            let eta: RealFn = {
                let eta_f = eta_f.clone();
                Arc::new(move |v| eta_f(v).expect("transform quadrature failed"))
            };
            let eta_inv: RealFn = Arc::new(move |x| {
                invert_monotone(&eta_f, x, vstar, domain, 1e-12)
                    .expect("transform inversion failed")
            });
            (eta, eta_inv)
        }
    };

    let alpha: RealFn = {
        let beta = m.drift.clone();
        let sig = m.volatility.clone();
        let sig_d = m.volatility_deriv.clone();
        let eta_inv = eta_inv.clone();
        Arc::new(move |x| {
            let v = eta_inv(x);
            beta(v) / sig(v) - 0.5 * sig_d(v)
        })
    };
    let alpha_deriv: RealFn = {
        let alpha = alpha.clone();
        Arc::new(move |x| {
            let h = 1e-5;
            (alpha(x + h) - alpha(x - h)) / (2.0 * h)
        })
    };
    let antideriv: RealFn = {
        let alpha = alpha.clone();
        Arc::new(move |u| {
            integrate(|y| alpha(y), 0.0, u, 1e-12).expect("antiderivative quadrature failed")
        })
    };

    let phi_range = PhiRangeOracle::GridLipschitz {
        lipschitz: m.phi_lipschitz.unwrap_or(0.0),
        points: 512,
    };
    let mut out = UnitVolatilityModel::new(
        format!("{}-transformed", m.name),
        alpha,
        alpha_deriv,
        antideriv,
        None,
        m.phi_floor,
        phi_range,
    )
    .with_transform(eta.clone(), eta_inv.clone());

    if let Some(j) = &m.jumps {
        let lam: RealFn = {
            let inner = j.intensity.clone();
            let eta_inv = eta_inv.clone();
            Arc::new(move |x| inner(eta_inv(x)))
        };
        // Pushforward of the jump size law through eta: a jump from v to
        // v + mu lands the transformed path at eta(v + mu), with density
        // rescaled by sigma at the landing point.
        let target_density: JumpDensity = {
            let density = j.size_density.clone();
            let eta_inv = eta_inv.clone();
            let sig = m.volatility.clone();
            Arc::new(move |post, pre| {
                let v_pre = eta_inv(pre);
                let v_post = eta_inv(post);
                density(v_post - v_pre, v_pre) * sig(v_post)
            })
        };
        let proposal_sampler: JumpSampler = {
            let sampler = j.size_sampler.clone();
            let eta = eta.clone();
            let eta_inv = eta_inv.clone();
            Arc::new(move |pre, rng| {
                let v_pre = eta_inv(pre);
                let mu = sampler(v_pre, rng);
                eta(v_pre + mu) - pre
            })
        };
        out = out.with_jumps(JumpSpec {
            intensity: lam,
            intensity_bound: j.intensity_bound,
            target_density: target_density.clone(),
            proposal_density: target_density,
            proposal_sampler,
            proposal_state_free: false,
            ratio_bound: j.ratio_bound.ok_or_else(|| {
                Error::InvalidModel(
                    "jump models need a user-asserted proposal ratio bound".into(),
                )
            })?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
