//! Checkable forms of the curvature-dimension, Li–Yau, Harnack, Gaussian and global distance
//! inequalities, and the fitters for the constants they leave unspecified.

mod distance;
mod gate;
mod gaussian;
mod inequalities;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use thiserror::Error;

pub use distance::{
    check_global_distance, fit_distance_constants, heldout_pairs, mixed_fit_pairs, regime_analysis, sample_distances,
    vertical_family, DistanceSample, RegimePoint, RegimeReport,
};
pub use gate::{mc_cells, residual_points, validation_gate, GateConfig, GateReport};
pub use gaussian::{check_gaussian_bounds, default_gaussian_grid, fit_gaussian_constants, GaussianSample};
pub use inequalities::{
    check_cd, check_cd_terms, check_harnack, check_liyau, check_scaled_liyau, harnack_tuples, liyau_grid,
    random_points, random_polynomials, HarnackTuple, EXACT_TOL,
};

use crate::diffops::DiffOpError;
use crate::geodesics::GeodesicError;
use crate::heatkernel::HeatKernelError;

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    DiffOp(#[from] DiffOpError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    HeatKernel(#[from] HeatKernelError),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

/// Where a number in a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    ExactPolynomial,
    FiniteDifference { est_error: f64 },
    Quadrature { rel_error: f64 },
    ClosedForm,
    Shooting { endpoint_error: f64, starts: usize },
    MonteCarlo { std_error: f64, samples: usize },
}

/// One instance of an inequality `lhs ≤ rhs`; passes iff `rhs − lhs ≥ −tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub inputs: BTreeMap<String, Value>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
    pub provenance: BTreeMap<String, Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            name: name.into(),
            inputs: BTreeMap::new(),
            lhs,
            rhs,
            margin,
            tol,
            pass: margin >= -tol,
            provenance: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// `|a − b| ≤ tol`, recorded as `lhs = |a − b|`, `rhs = 0`.
    pub fn equality(name: impl Into<String>, a: f64, b: f64, tol: f64) -> Self {
        Self::new(name, (a - b).abs(), 0.0, tol).input("a", a).input("b", b)
    }

    /// A failed instance: an upstream computation did not produce the numbers.
    pub fn failure(name: impl Into<String>, reason: impl std::fmt::Display) -> Self {
        let mut r = Self::new(name, f64::NAN, f64::NAN, 0.0);
        r.notes.push(format!("error: {reason}"));
        r
    }

    pub fn input(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.inputs.insert(key.to_string(), value.into());
        self
    }

    pub fn provenance(mut self, key: &str, p: Provenance) -> Self {
        self.provenance.insert(key.to_string(), p);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn is_failure(&self) -> bool {
        self.notes.iter().any(|n| n.starts_with("error: "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    /// Largest `lhs − rhs` over the sample after fitting; ≤ 0 when every constraint holds.
    pub max_violation: f64,
    /// Constraints holding with equality (up to 1e−9 relative).
    pub active: usize,
    pub worst_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: String,
    pub constants: BTreeMap<String, f64>,
    pub feasible: bool,
    pub residual: ResidualSummary,
    pub samples: usize,
    pub sample_description: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
}

/// The weights `a(u)`, `b(u)` that turn the scaled Li–Yau inequality into `−∂_u ln p ≤ …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackParams {
    pub n: usize,
    pub tau: f64,
    pub s: f64,
    pub t: f64,
}

impl HarnackParams {
    pub fn new(n: usize, tau: f64, s: f64, t: f64) -> Result<Self, VerifyError> {
        if n == 0 {
            return Err(VerifyError::InvalidParameters("n must be at least 1".into()));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(VerifyError::InvalidParameters(format!("τ must be finite and nonnegative, got {tau}")));
        }
        if !(s > 0.0 && s < t && t.is_finite()) {
            return Err(VerifyError::InvalidParameters(format!("need 0 < s < t, got s = {s}, t = {t}")));
        }
        Ok(Self { n, tau, s, t })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn vertical_weight(&self, u: f64) -> f64 {
        1.0 + 3.0 * self.tau * self.tau / (self.nf() * u)
    }

    pub fn a(&self, u: f64) -> f64 {
        self.vertical_weight(u) * (1.0 + 3.0 / self.nf())
    }

    pub fn b(&self, u: f64) -> f64 {
        let n = self.nf();
        n * (1.0 + 3.0 / n).powi(2) / u * self.vertical_weight(u)
    }

    /// `∫_s^t b/a = (n + 3) ln(t/s)`.
    pub fn integral_b_over_a(&self) -> f64 {
        (self.nf() + 3.0) * (self.t / self.s).ln()
    }

    /// `∫_s^t a = (1 + 3/n)[(t − s) + (3τ²/n) ln(t/s)]`.
    pub fn integral_a(&self) -> f64 {
        let n = self.nf();
        (1.0 + 3.0 / n) * ((self.t - self.s) + 3.0 * self.tau * self.tau / n * (self.t / self.s).ln())
    }

    /// Coefficient of `d_τ²` in the Harnack exponent, `∫a / (4(t − s)²)`.
    pub fn distance_coefficient(&self) -> f64 {
        self.integral_a() / (4.0 * (self.t - self.s).powi(2))
    }

    /// `ln` of the Harnack factor for a given distance.
    pub fn log_factor(&self, d_tau: f64) -> f64 {
        self.integral_b_over_a() + self.distance_coefficient() * d_tau * d_tau
    }
}
