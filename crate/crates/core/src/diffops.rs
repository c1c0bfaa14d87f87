//! Horizontal gradient, sub-Laplacian, Reeb derivative and the iterated carré-du-champ forms
//! Γ₂ and Γ₂^T on the Heisenberg frame.
//!
//! Polynomial fields go through exact symbolic differentiation. Black-box fields use central
//! differences along the one-parameter subgroups `s ↦ p·exp(s e_k)`, which are straight lines in
//! exponential coordinates and are the integral curves of the left-invariant frame. The error of
//! a finite-difference value is estimated by Richardson comparison with step `2h`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_space::{multiply, Point};
use crate::polynomial::{Coefficient, Polynomial};

#[derive(Debug, Error, PartialEq)]
pub enum DiffOpError {
    #[error("finite-difference step {h:e} underflows at coordinate scale {scale:e}")]
    StepUnderflow { h: f64, scale: f64 },
    #[error("field has {field} variables but the point has {point} coordinates")]
    DimensionMismatch { field: usize, point: usize },
    #[error("ν must be positive and finite, got {0}")]
    InvalidNu(f64),
    #[error("field evaluation returned a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Exact,
    FiniteDifference { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorResult<T> {
    pub value: T,
    pub scheme: Scheme,
    pub est_error: f64,
}

impl<T> OperatorResult<T> {
    fn exact(value: T) -> Self {
        Self { value, scheme: Scheme::Exact, est_error: 0.0 }
    }
}

type FieldFn = dyn Fn(&Point) -> f64 + Send + Sync;

/// Black-box scalar field with its base finite-difference step.
#[derive(Clone)]
pub struct CallableField {
    func: Arc<FieldFn>,
    h: f64,
}

impl fmt::Debug for CallableField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallableField").field("h", &self.h).finish_non_exhaustive()
    }
}

/// Default base step: cube root of machine epsilon.
pub fn default_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// Floor on the step of third-order composites (Γ₂, Γ₂^T, Killing identity), whose round-off
/// grows like ε/h³.
pub fn composite_step_floor() -> f64 {
    f64::EPSILON.powf(0.2)
}

#[derive(Debug, Clone)]
pub enum ScalarField {
    Polynomial(Polynomial<f64>),
    Callable(CallableField),
}

impl ScalarField {
    pub fn polynomial(p: Polynomial<f64>) -> Self {
        ScalarField::Polynomial(p)
    }

    pub fn callable<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Self::callable_with_step(f, default_step())
    }

    pub fn callable_with_step<F>(f: F, h: f64) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ScalarField::Callable(CallableField { func: Arc::new(f), h })
    }

    pub fn value(&self, p: &Point) -> f64 {
        match self {
            ScalarField::Polynomial(poly) => poly.evaluate_f64(&p.coords()),
            ScalarField::Callable(c) => (c.func)(p),
        }
    }
}

/// Symbolic frame operators on polynomials in `(x_1..x_n, y_1..y_n, z)`.
#[derive(Debug, Clone, Copy)]
pub struct HeisenbergOps {
    n: usize,
}

impl HeisenbergOps {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Self { n }
    }

    pub fn nvars(&self) -> usize {
        2 * self.n + 1
    }

    fn z(&self) -> usize {
        2 * self.n
    }

    /// Frame field `k` applied to `f`: `X_{k}` for `k < n`, `Y_{k−n}` for `n ≤ k < 2n`.
    pub fn horizontal<C: Coefficient>(&self, f: &Polynomial<C>, k: usize) -> Polynomial<C> {
        let n = self.n;
        assert!(k < 2 * n);
        let dz = f.derivative(self.z());
        if k < n {
            // X_i = ∂_{x_i} − (y_i/2) ∂_z
            &f.derivative(k) - &dz.mul_var(n + k).scale(&C::half())
        } else {
            // Y_i = ∂_{y_i} + (x_i/2) ∂_z
            &f.derivative(k) + &dz.mul_var(k - n).scale(&C::half())
        }
    }

    pub fn gradient<C: Coefficient>(&self, f: &Polynomial<C>) -> Vec<Polynomial<C>> {
        (0..2 * self.n).map(|k| self.horizontal(f, k)).collect()
    }

    pub fn reeb<C: Coefficient>(&self, f: &Polynomial<C>) -> Polynomial<C> {
        f.derivative(self.z())
    }

    /// `⟨∇^H f, ∇^H g⟩`.
    pub fn grad_inner<C: Coefficient>(&self, f: &Polynomial<C>, g: &Polynomial<C>) -> Polynomial<C> {
        let mut acc = Polynomial::zero(self.nvars());
        for k in 0..2 * self.n {
            acc = &acc + &(&self.horizontal(f, k) * &self.horizontal(g, k));
        }
        acc
    }

    pub fn grad_norm_sq<C: Coefficient>(&self, f: &Polynomial<C>) -> Polynomial<C> {
        self.grad_inner(f, f)
    }

    pub fn sublaplacian<C: Coefficient>(&self, f: &Polynomial<C>) -> Polynomial<C> {
        let mut acc = Polynomial::zero(self.nvars());
        for k in 0..2 * self.n {
            acc = &acc + &self.horizontal(&self.horizontal(f, k), k);
        }
        acc
    }

    /// `Γ₂(f) = ½[Δ‖∇^H f‖² − 2⟨∇^H f, ∇^H Δf⟩]`.
    pub fn gamma2<C: Coefficient>(&self, f: &Polynomial<C>) -> Polynomial<C> {
        let a = self.sublaplacian(&self.grad_norm_sq(f));
        let b = self.grad_inner(f, &self.sublaplacian(f));
        &a.scale(&C::half()) - &b
    }

    /// `Γ₂^T(f) = ½[Δ(Tf)² − 2(Tf)(TΔf)]`.
    pub fn gamma2_t<C: Coefficient>(&self, f: &Polynomial<C>) -> Polynomial<C> {
        let tf = self.reeb(f);
        let a = self.sublaplacian(&(&tf * &tf));
        let b = &tf * &self.reeb(&self.sublaplacian(f));
        &a.scale(&C::half()) - &b
    }

    /// `⟨∇^H f, ∇^H (Tf)²⟩ − (Tf)(T‖∇^H f‖²)`, identically zero because T is Killing.
    pub fn killing_residual<C: Coefficient>(&self, f: &Polynomial<C>) -> Polynomial<C> {
        let tf = self.reeb(f);
        let lhs = self.grad_inner(f, &(&tf * &tf));
        let rhs = &tf * &self.reeb(&self.grad_norm_sq(f));
        &lhs - &rhs
    }
}

/// Precomputed symbolic pieces of the curvature-dimension inequality for one polynomial, so a
/// sweep over points and ν only evaluates.
#[derive(Debug, Clone)]
pub struct CurvatureTerms {
    n: usize,
    gamma2: Polynomial<f64>,
    gamma2_t: Polynomial<f64>,
    laplacian: Polynomial<f64>,
    grad_sq: Polynomial<f64>,
    reeb: Polynomial<f64>,
}

/// Values of the curvature-dimension ingredients at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureValues {
    pub gamma2: f64,
    pub gamma2_t: f64,
    pub laplacian: f64,
    pub grad_sq: f64,
    pub reeb: f64,
}

impl CurvatureValues {
    /// `Γ₂ + νΓ₂^T − [(1/2n)(Δf)² − (1/ν)‖∇^H f‖² + (n/2)(Tf)²]`.
    pub fn residual(&self, n: usize, nu: f64) -> f64 {
        let n = n as f64;
        let lhs = self.gamma2 + nu * self.gamma2_t;
        let rhs = self.laplacian * self.laplacian / (2.0 * n) - self.grad_sq / nu
            + 0.5 * n * self.reeb * self.reeb;
        lhs - rhs
    }

    /// Sensitivity-weighted error of [`residual`](Self::residual) given a per-term error.
    fn residual_error(&self, n: usize, nu: f64, errs: &CurvatureValues) -> f64 {
        let n = n as f64;
        errs.gamma2
            + nu * errs.gamma2_t
            + self.laplacian.abs() / n * errs.laplacian
            + errs.grad_sq / nu
            + n * self.reeb.abs() * errs.reeb
    }
}

impl CurvatureTerms {
    pub fn new(n: usize, f: &Polynomial<f64>) -> Self {
        let ops = HeisenbergOps::new(n);
        Self {
            n,
            gamma2: ops.gamma2(f),
            gamma2_t: ops.gamma2_t(f),
            laplacian: ops.sublaplacian(f),
            grad_sq: ops.grad_norm_sq(f),
            reeb: ops.reeb(f),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values_at(&self, p: &Point) -> CurvatureValues {
        let c = p.coords();
        CurvatureValues {
            gamma2: self.gamma2.evaluate_f64(&c),
            gamma2_t: self.gamma2_t.evaluate_f64(&c),
            laplacian: self.laplacian.evaluate_f64(&c),
            grad_sq: self.grad_sq.evaluate_f64(&c),
            reeb: self.reeb.evaluate_f64(&c),
        }
    }

    pub fn residual_at(&self, p: &Point, nu: f64) -> f64 {
        self.values_at(p).residual(self.n, nu)
    }
}

fn check_poly(poly: &Polynomial<f64>, p: &Point) -> Result<(), DiffOpError> {
    if poly.nvars() != p.x.len() + 1 {
        return Err(DiffOpError::DimensionMismatch { field: poly.nvars(), point: p.x.len() + 1 });
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------------
// finite differences

/// `p·exp(s e_k)`; `k = 2n` is the vertical direction.
fn shift(p: &Point, k: usize, s: f64) -> Point {
    let mut e = Point::origin(p.n());
    if k < p.x.len() {
        e.x[k] = s;
    } else {
        e.z = s;
    }
    multiply(p, &e)
}

fn d1(g: &dyn Fn(&Point) -> f64, p: &Point, k: usize, h: f64) -> f64 {
    (g(&shift(p, k, h)) - g(&shift(p, k, -h))) / (2.0 * h)
}

fn d2(g: &dyn Fn(&Point) -> f64, p: &Point, k: usize, h: f64) -> f64 {
    (g(&shift(p, k, h)) - 2.0 * g(p) + g(&shift(p, k, -h))) / (h * h)
}

#[derive(Debug, Clone, Copy)]
enum FdOp {
    Horizontal(usize),
    Reeb,
    Sublaplacian,
    Gamma2,
    Gamma2T,
    Killing,
}

impl FdOp {
    fn is_composite(self) -> bool {
        matches!(self, FdOp::Gamma2 | FdOp::Gamma2T | FdOp::Killing)
    }
}

fn fd_apply(op: FdOp, f: &FieldFn, p: &Point, h: f64) -> f64 {
    let m = p.x.len();
    let lap = |q: &Point| (0..m).map(|k| d2(f, q, k, h)).sum::<f64>();
    let grad_sq = |q: &Point| (0..m).map(|k| d1(f, q, k, h).powi(2)).sum::<f64>();
    let reeb_sq = |q: &Point| d1(f, q, m, h).powi(2);
    match op {
        FdOp::Horizontal(k) => d1(f, p, k, h),
        FdOp::Reeb => d1(f, p, m, h),
        FdOp::Sublaplacian => lap(p),
        FdOp::Gamma2 => {
            let a: f64 = (0..m).map(|k| d2(&grad_sq, p, k, h)).sum();
            let b: f64 = (0..m).map(|k| d1(f, p, k, h) * d1(&lap, p, k, h)).sum();
            0.5 * a - b
        }
        FdOp::Gamma2T => {
            let a: f64 = (0..m).map(|k| d2(&reeb_sq, p, k, h)).sum();
            0.5 * a - d1(f, p, m, h) * d1(&lap, p, m, h)
        }
        FdOp::Killing => {
            let a: f64 = (0..m).map(|k| d1(f, p, k, h) * d1(&reeb_sq, p, k, h)).sum();
            a - d1(f, p, m, h) * d1(&grad_sq, p, m, h)
        }
    }
}

/// Effective step `h·max(1, |coords|)`, with the composite floor when needed.
fn effective_step(c: &CallableField, op: FdOp, p: &Point) -> Result<f64, DiffOpError> {
    let base = if op.is_composite() { c.h.max(composite_step_floor()) } else { c.h };
    let scale = p.max_abs_coord().max(1.0);
    let h = base * scale;
    if !(h > 0.0) || scale + h == scale {
        return Err(DiffOpError::StepUnderflow { h, scale });
    }
    Ok(h)
}

fn fd_result(op: FdOp, c: &CallableField, p: &Point) -> Result<OperatorResult<f64>, DiffOpError> {
    let h = effective_step(c, op, p)?;
    let fine = fd_apply(op, c.func.as_ref(), p, h);
    let coarse = fd_apply(op, c.func.as_ref(), p, 2.0 * h);
    if !fine.is_finite() || !coarse.is_finite() {
        return Err(DiffOpError::NonFinite);
    }
    Ok(OperatorResult {
        value: fine,
        scheme: Scheme::FiniteDifference { h },
        est_error: (fine - coarse).abs() / 3.0,
    })
}

/// Finite-difference value of an operator at an explicit step, bypassing the field's own step.
/// Used for convergence-order studies.
pub fn fd_at_step(f: &ScalarField, p: &Point, which: FdOperator, h: f64) -> f64 {
    let op = which.into();
    match f {
        ScalarField::Polynomial(poly) => {
            let poly = poly.clone();
            let g = move |q: &Point| poly.evaluate_f64(&q.coords());
            fd_apply(op, &g, p, h)
        }
        ScalarField::Callable(c) => fd_apply(op, c.func.as_ref(), p, h),
    }
}

/// `([V_i, V_j] f)(p)` by nested central differences along the frame flows, where `V_k` is
/// `X_k`, `Y_{k−n}` or, for `k = 2n`, `T`. Second order in `h`.
pub fn frame_commutator(f: &dyn Fn(&Point) -> f64, p: &Point, i: usize, j: usize, h: f64) -> f64 {
    let vj = |q: &Point| d1(f, q, j, h);
    let vi = |q: &Point| d1(f, q, i, h);
    d1(&vj, p, i, h) - d1(&vi, p, j, h)
}

/// Public selector for [`fd_at_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOperator {
    Horizontal(usize),
    Reeb,
    Sublaplacian,
    Gamma2,
    Gamma2T,
    Killing,
}

impl From<FdOperator> for FdOp {
    fn from(o: FdOperator) -> Self {
        match o {
            FdOperator::Horizontal(k) => FdOp::Horizontal(k),
            FdOperator::Reeb => FdOp::Reeb,
            FdOperator::Sublaplacian => FdOp::Sublaplacian,
            FdOperator::Gamma2 => FdOp::Gamma2,
            FdOperator::Gamma2T => FdOp::Gamma2T,
            FdOperator::Killing => FdOp::Killing,
        }
    }
}

// ---------------------------------------------------------------------------------------------
// public operators

/// `(X_1 f, …, X_n f, Y_1 f, …, Y_n f)` at `p`.
pub fn horizontal_gradient(f: &ScalarField, p: &Point) -> Result<OperatorResult<Vec<f64>>, DiffOpError> {
    match f {
        ScalarField::Polynomial(poly) => {
            check_poly(poly, p)?;
            let ops = HeisenbergOps::new(p.n());
            let c = p.coords();
            Ok(OperatorResult::exact(ops.gradient(poly).iter().map(|g| g.evaluate_f64(&c)).collect()))
        }
        ScalarField::Callable(cf) => {
            let mut value = Vec::with_capacity(p.x.len());
            let mut err = 0.0_f64;
            let mut scheme = Scheme::Exact;
            for k in 0..p.x.len() {
                let r = fd_result(FdOp::Horizontal(k), cf, p)?;
                value.push(r.value);
                err = err.max(r.est_error);
                scheme = r.scheme;
            }
            Ok(OperatorResult { value, scheme, est_error: err })
        }
    }
}

pub fn sublaplacian(f: &ScalarField, p: &Point) -> Result<OperatorResult<f64>, DiffOpError> {
    scalar_op(f, p, FdOp::Sublaplacian, |ops, poly| ops.sublaplacian(poly))
}

pub fn reeb_derivative(f: &ScalarField, p: &Point) -> Result<OperatorResult<f64>, DiffOpError> {
    scalar_op(f, p, FdOp::Reeb, |ops, poly| ops.reeb(poly))
}

pub fn gamma2(f: &ScalarField, p: &Point) -> Result<OperatorResult<f64>, DiffOpError> {
    scalar_op(f, p, FdOp::Gamma2, |ops, poly| ops.gamma2(poly))
}

pub fn gamma2_t(f: &ScalarField, p: &Point) -> Result<OperatorResult<f64>, DiffOpError> {
    scalar_op(f, p, FdOp::Gamma2T, |ops, poly| ops.gamma2_t(poly))
}

pub fn killing_identity_residual(f: &ScalarField, p: &Point) -> Result<OperatorResult<f64>, DiffOpError> {
    scalar_op(f, p, FdOp::Killing, |ops, poly| ops.killing_residual(poly))
}

fn scalar_op(
    f: &ScalarField,
    p: &Point,
    op: FdOp,
    symbolic: impl Fn(&HeisenbergOps, &Polynomial<f64>) -> Polynomial<f64>,
) -> Result<OperatorResult<f64>, DiffOpError> {
    match f {
        ScalarField::Polynomial(poly) => {
            check_poly(poly, p)?;
            let ops = HeisenbergOps::new(p.n());
            Ok(OperatorResult::exact(symbolic(&ops, poly).evaluate_f64(&p.coords())))
        }
        ScalarField::Callable(cf) => fd_result(op, cf, p),
    }
}

/// Curvature-dimension residual `Γ₂ + νΓ₂^T − [(1/2n)(Δf)² − (1/ν)‖∇^H f‖² + (n/2)(Tf)²]`.
pub fn cd_residual(f: &ScalarField, p: &Point, nu: f64) -> Result<OperatorResult<f64>, DiffOpError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(DiffOpError::InvalidNu(nu));
    }
    let n = p.n();
    match f {
        ScalarField::Polynomial(poly) => {
            check_poly(poly, p)?;
            let terms = CurvatureTerms::new(n, poly);
            Ok(OperatorResult::exact(terms.residual_at(p, nu)))
        }
        ScalarField::Callable(cf) => {
            let g2 = fd_result(FdOp::Gamma2, cf, p)?;
            let g2t = fd_result(FdOp::Gamma2T, cf, p)?;
            let lap = fd_result(FdOp::Sublaplacian, cf, p)?;
            let grad = horizontal_gradient(f, p)?;
            let reeb = fd_result(FdOp::Reeb, cf, p)?;
            let grad_sq: f64 = grad.value.iter().map(|v| v * v).sum();
            let grad_norm = grad_sq.sqrt();
            let values = CurvatureValues {
                gamma2: g2.value,
                gamma2_t: g2t.value,
                laplacian: lap.value,
                grad_sq,
                reeb: reeb.value,
            };
            let errs = CurvatureValues {
                gamma2: g2.est_error,
                gamma2_t: g2t.est_error,
                laplacian: lap.est_error,
                grad_sq: 2.0 * grad_norm * grad.est_error * (p.x.len() as f64).sqrt(),
                reeb: reeb.est_error,
            };
            Ok(OperatorResult {
                value: values.residual(n, nu),
                scheme: g2.scheme,
                est_error: values.residual_error(n, nu, &errs),
            })
        }
    }
}
