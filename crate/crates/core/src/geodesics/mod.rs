//! Sub-Riemannian distance `d` and scaled Riemannian distances `d_τ` by Hamiltonian shooting.
//!
//! Both metrics share one cometric written in the left-invariant frame,
//!
//! ```text
//! H_τ(p, ξ) = ½ Σ_i [⟨ξ, X_i(p)⟩² + ⟨ξ, Y_i(p)⟩²] + (τ²/2)⟨ξ, T⟩²,
//! ```
//!
//! with `τ = 0` the sub-Riemannian case. Geodesics are integrated for unit time from the origin;
//! a target is first moved to the origin by left translation and normalized to unit gauge by a
//! dilation, which maps `d_τ` to `d_{τ/s}` up to the factor `s`.

pub mod closed_form;
mod shooting;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use closed_form::{closed_form_distance, distance_from_origin, try_distance_from_origin};
pub use shooting::{distance, integrate, PhaseState, ShootingOptions};

use crate::model_space::{dilate, Covector, Point};
use crate::verify::{InequalityReport, Provenance};

#[derive(Debug, Error, PartialEq)]
pub enum GeodesicError {
    #[error("τ must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("at least 16 integration steps are required, got {0}")]
    TooFewSteps(usize),
    #[error("non-finite state")]
    NonFinite,
    #[error("integration produced a non-finite state at step {step}")]
    Diverged { step: usize },
    #[error("points or covectors of mismatched dimension")]
    DimensionMismatch,
    #[error("root bracket failure for z/c² = {ratio}")]
    BracketFailure { ratio: f64 },
    #[error("no shooting start converged ({starts} tried, best endpoint error {best_error:e})")]
    NoConvergence { starts: usize, best_error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    SubRiemannian,
    Riemannian { tau: f64 },
}

impl MetricSpec {
    pub fn riemannian(tau: f64) -> Result<Self, GeodesicError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(GeodesicError::InvalidTau(tau));
        }
        Ok(MetricSpec::Riemannian { tau })
    }

    /// The weight τ² on the vertical momentum; zero in the sub-Riemannian case.
    pub fn tau_sq(&self) -> f64 {
        match *self {
            MetricSpec::SubRiemannian => 0.0,
            MetricSpec::Riemannian { tau } => tau * tau,
        }
    }

    pub fn validate(&self) -> Result<(), GeodesicError> {
        match *self {
            MetricSpec::SubRiemannian => Ok(()),
            MetricSpec::Riemannian { tau } => Self::riemannian(tau).map(|_| ()),
        }
    }

    /// The metric seen after dilating the target by `1/s`.
    pub(crate) fn rescaled(&self, s: f64) -> Self {
        match *self {
            MetricSpec::SubRiemannian => MetricSpec::SubRiemannian,
            MetricSpec::Riemannian { tau } => MetricSpec::Riemannian { tau: tau / s },
        }
    }
}

/// Outcome of a boundary-value solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResult {
    pub length: f64,
    /// Initial momentum of the time-1 geodesic in the left-invariant trivialization.
    pub initial_covector: Covector,
    /// Endpoint mismatch in the dilation-normalized gauge (relative to the target's size).
    pub endpoint_error: f64,
    pub restarts_used: usize,
    pub converged: bool,
    /// `|H(end) − H(start)| / max(1, H)` along the accepted geodesic.
    pub energy_drift: f64,
}

/// `H_τ(p, ξ)`; see the module docs.
pub fn hamiltonian(spec: &MetricSpec, p: &Point, pv: &Covector) -> f64 {
    let n = p.n();
    assert_eq!(pv.px.len(), 2 * n, "covector dimension mismatch");
    let mut h = 0.0;
    for i in 0..n {
        let xi = pv.px[i] - 0.5 * p.x[n + i] * pv.pz;
        let eta = pv.px[n + i] + 0.5 * p.x[i] * pv.pz;
        h += xi * xi + eta * eta;
    }
    0.5 * h + 0.5 * spec.tau_sq() * pv.pz * pv.pz
}

/// `d(δ_λ a, δ_λ b) = λ d(a, b)` and `d_τ(δ_λ a, δ_λ b) = λ d_{τ/λ}(a, b)`, each solved
/// independently by shooting and compared at relative tolerance `rel_tol`.
pub fn dilation_identity_check(
    a: &Point,
    b: &Point,
    lambda: f64,
    tau: f64,
    opts: &ShootingOptions,
    rel_tol: f64,
) -> Result<(InequalityReport, InequalityReport), GeodesicError> {
    let spec = MetricSpec::riemannian(tau)?;
    let la = dilate(lambda, a).map_err(|_| GeodesicError::NonFinite)?;
    let lb = dilate(lambda, b).map_err(|_| GeodesicError::NonFinite)?;
    let sr_big = distance(&MetricSpec::SubRiemannian, &la, &lb, opts)?;
    let sr = distance(&MetricSpec::SubRiemannian, a, b, opts)?;
    let r_big = distance(&spec, &la, &lb, opts)?;
    let r = distance(&MetricSpec::riemannian(tau / lambda)?, a, b, opts)?;
    let prov = |g: &GeodesicResult| Provenance::Shooting { endpoint_error: g.endpoint_error, starts: g.restarts_used };
    let first = InequalityReport::equality("sr_dilation", sr_big.length, lambda * sr.length, rel_tol * sr_big.length)
        .input("lambda", lambda)
        .input("a_point", a.coords())
        .input("b_point", b.coords())
        .provenance("a", prov(&sr_big))
        .provenance("b", prov(&sr));
    let second = InequalityReport::equality("riemannian_dilation", r_big.length, lambda * r.length, rel_tol * r_big.length)
        .input("lambda", lambda)
        .input("tau", tau)
        .input("a_point", a.coords())
        .input("b_point", b.coords())
        .provenance("a", prov(&r_big))
        .provenance("b", prov(&r));
    Ok((first, second))
}
