use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{HarnackParams, InequalityReport, Provenance, VerifyError};
use crate::diffops::{cd_residual, CurvatureTerms, ScalarField, Scheme};
use crate::geodesics::{distance, MetricSpec, ShootingOptions};
use crate::heatkernel::{HeatKernel, HeatKernelBundle};
use crate::model_space::Point;
use crate::polynomial::Polynomial;

/// Tolerance of the exact polynomial path.
pub const EXACT_TOL: f64 = 1e-10;

/// Curvature-dimension inequality for `f` at `p`; `margin` is the residual itself.
pub fn check_cd(f: &ScalarField, p: &Point, nu: f64) -> Result<InequalityReport, VerifyError> {
    let r = cd_residual(f, p, nu)?;
    let (tol, prov) = match r.scheme {
        Scheme::Exact => (EXACT_TOL, Provenance::ExactPolynomial),
        Scheme::FiniteDifference { .. } => (10.0 * r.est_error, Provenance::FiniteDifference { est_error: r.est_error }),
    };
    Ok(InequalityReport::new("curvature_dimension", -r.value, 0.0, tol)
        .input("point", p.coords())
        .input("nu", nu)
        .input("n", p.n())
        .provenance("residual", prov)
        .note("lhs is minus the residual Γ₂ + νΓ₂^T − [(Δf)²/2n − ‖∇f‖²/ν + n(Tf)²/2]"))
}

/// [`check_cd`] for a polynomial whose symbolic terms are already expanded.
pub fn check_cd_terms(terms: &CurvatureTerms, p: &Point, nu: f64) -> Result<InequalityReport, VerifyError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(VerifyError::InvalidParameters(format!("ν must be positive, got {nu}")));
    }
    if p.n() != terms.n() {
        return Err(VerifyError::InvalidParameters(format!("point has n = {}, field has n = {}", p.n(), terms.n())));
    }
    Ok(InequalityReport::new("curvature_dimension", -terms.residual_at(p, nu), 0.0, EXACT_TOL)
        .input("point", p.coords())
        .input("nu", nu)
        .input("n", p.n())
        .provenance("residual", Provenance::ExactPolynomial))
}

/// Random polynomials in `2n + 1` variables with one to eight terms of degree `1..=max_degree`
/// and coefficients in `[−1, 1]`.
pub fn random_polynomials(count: usize, max_degree: u32, n: usize, seed: u64) -> Vec<Polynomial<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nvars = 2 * n + 1;
    (0..count)
        .map(|_| {
            let mut f = Polynomial::zero(nvars);
            for _ in 0..rng.random_range(1..=8) {
                let mut left = rng.random_range(1..=max_degree.max(1));
                let mut e = vec![0u32; nvars];
                // spread the degree over randomly chosen variables
                while left > 0 {
                    e[rng.random_range(0..nvars)] += 1;
                    left -= 1;
                }
                f = &f + &Polynomial::monomial(nvars, e, rng.random_range(-1.0..1.0));
            }
            f
        })
        .collect()
}

/// Uniform points in the cube of half-width `half`.
pub fn random_points(count: usize, half: f64, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = (0..2 * n).map(|_| rng.random_range(-half..half)).collect();
            Point::new(x, rng.random_range(-half..half))
        })
        .collect()
}

/// Ten times log-spaced over `[0.05, 5]` crossed with ten fixed targets.
pub fn liyau_grid() -> Vec<(f64, Point)> {
    let ys = [
        Point::origin(1),
        Point::h1(0.5, 0.0, 0.0),
        Point::h1(1.0, 0.0, 0.0),
        Point::h1(2.0, 0.0, 0.0),
        Point::h1(0.0, 0.0, 0.5),
        Point::h1(0.0, 0.0, 2.0),
        Point::h1(1.0, 1.0, 1.0),
        Point::h1(0.3, -0.2, 0.1),
        Point::h1(-1.5, 0.5, -1.0),
        Point::h1(0.0, 2.0, 3.0),
    ];
    (0..10)
        .map(|i| 0.05 * 100f64.powf(i as f64 / 9.0))
        .flat_map(|t| ys.clone().into_iter().map(move |y| (t, y)))
        .collect()
}

fn bundle_at(kernel: &HeatKernel, t: f64, y: &Point) -> Result<HeatKernelBundle, VerifyError> {
    Ok(kernel.evaluate(t, &Point::origin(1), y)?)
}

fn quad(b: &HeatKernelBundle) -> Provenance {
    Provenance::Quadrature { rel_error: b.quad_error.max(b.deriv_error) }
}

/// `‖∇ ln p_t‖² + (n/3) t (T ln p_t)² ≤ (1 + 3/n) Δp_t/p_t + n(1 + 3/n)²/t` at `y`, base point
/// the origin. `Δp/p` is `∂_t ln p` by the heat equation.
pub fn check_liyau(kernel: &HeatKernel, t: f64, y: &Point) -> Result<InequalityReport, VerifyError> {
    let b = bundle_at(kernel, t, y)?;
    let n = 1.0;
    let g2 = b.grad_norm_sq();
    let lhs = g2 + n / 3.0 * t * b.reeb_log * b.reeb_log;
    let c = 1.0 + 3.0 / n;
    let rhs = c * b.dt_log + n * c * c / t;
    let e = b.deriv_error;
    let propagated = 2.0 * g2.sqrt() * e * 2f64.sqrt() + 2.0 * n / 3.0 * t * b.reeb_log.abs() * e + c * e;
    Ok(InequalityReport::new("li_yau", lhs, rhs, 10.0 * propagated)
        .input("t", t)
        .input("y", y.coords())
        .input("grad_log", b.grad_log.clone())
        .input("reeb_log", b.reeb_log)
        .input("dt_log", b.dt_log)
        .provenance("heat_kernel", quad(&b)))
}

/// Scaled form `‖∇ ln p_t‖² + τ²(T ln p_t)² ≤ a(t) Δp_t/p_t + b(t)` with the Harnack weights.
///
/// The right side is assembled twice, once from the expanded display and once from
/// [`HarnackParams`]; disagreement beyond round-off fails the report.
pub fn check_scaled_liyau(kernel: &HeatKernel, t: f64, y: &Point, tau: f64) -> Result<InequalityReport, VerifyError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(VerifyError::InvalidParameters(format!("τ must be finite and nonnegative, got {tau}")));
    }
    let b = bundle_at(kernel, t, y)?;
    let n = 1.0;
    let g2 = b.grad_norm_sq();
    let tau2 = tau * tau;
    let lhs = g2 + tau2 * b.reeb_log * b.reeb_log;
    let w = 1.0 + 3.0 * tau2 / (n * t);
    let c = 1.0 + 3.0 / n;
    let rhs = w * c * b.dt_log + n * c * c / t * w;
    // any s < t will do; only a(t), b(t) are used
    let hp = HarnackParams { n: 1, tau, s: t / 2.0, t };
    let rhs_params = hp.a(t) * b.dt_log + hp.b(t);
    let mismatch = (rhs - rhs_params).abs();
    let e = b.deriv_error;
    let propagated = 2.0 * g2.sqrt() * e * 2f64.sqrt() + 2.0 * tau2 * b.reeb_log.abs() * e + w * c * e;
    let mut report = InequalityReport::new("scaled_li_yau", lhs, rhs, 10.0 * propagated)
        .input("t", t)
        .input("tau", tau)
        .input("y", y.coords())
        .input("rhs_from_harnack_params", rhs_params)
        .provenance("heat_kernel", quad(&b));
    if mismatch > 1e-12 * rhs.abs().max(1.0) {
        report.pass = false;
        report = report.note(format!("expanded and a(t)/b(t) forms of the right side differ by {mismatch:e}"));
    }
    Ok(report)
}

/// Harnack comparison `p(s, x, y) ≤ p(t, x, z) (t/s)^{n+3} exp(c · d_τ(y, z)²)`, in log form.
///
/// The distance is taken between the two points being compared, `y` and `z`.
pub fn check_harnack(
    kernel: &HeatKernel,
    s: f64,
    t: f64,
    x: &Point,
    y: &Point,
    z: &Point,
    tau: f64,
    shooting: &ShootingOptions,
) -> Result<InequalityReport, VerifyError> {
    let hp = HarnackParams::new(1, tau, s, t)?;
    let spec = MetricSpec::riemannian(tau)?;
    let ps = kernel.evaluate(s, x, y)?;
    let pt = kernel.evaluate(t, x, z)?;
    let geo = distance(&spec, y, z, shooting)?;
    let d = geo.length;
    let lhs = ps.ln_p;
    let rhs = pt.ln_p + hp.log_factor(d);
    // relative length uncertainty from the endpoint tolerance of the shooting solve
    let d_rel = 10.0 * shooting.tol.max(geo.endpoint_error);
    let tol = 10.0 * (ps.quad_error + pt.quad_error + 2.0 * hp.distance_coefficient() * d * d * d_rel);
    Ok(InequalityReport::new("harnack", lhs, rhs, tol)
        .input("s", s)
        .input("t", t)
        .input("tau", tau)
        .input("x", x.coords())
        .input("y", y.coords())
        .input("z", z.coords())
        .input("d_tau_yz", d)
        .input("log_factor", hp.log_factor(d))
        .provenance("p_s", Provenance::Quadrature { rel_error: ps.quad_error })
        .provenance("p_t", Provenance::Quadrature { rel_error: pt.quad_error })
        .provenance("d_tau", Provenance::Shooting { endpoint_error: geo.endpoint_error, starts: geo.restarts_used })
        .note("sides are logarithms; the distance in the exponent is d_τ(y, z)"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackTuple {
    pub s: f64,
    pub t: f64,
    pub x: Point,
    pub y: Point,
    pub z: Point,
    pub tau: f64,
}

/// Admissible random tuples with `τ` cycling through `{0.1, 1, 10}`.
pub fn harnack_tuples(count: usize, seed: u64) -> Vec<HarnackTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taus = [0.1, 1.0, 10.0];
    let point = |rng: &mut ChaCha8Rng, r: f64| Point::h1(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
    (0..count)
        .map(|i| {
            let t = rng.random_range(0.2..3.0);
            let s = t * rng.random_range(0.1..0.95);
            let x = point(&mut rng, 1.0);
            let y = point(&mut rng, 1.5);
            let z = point(&mut rng, 1.5);
            HarnackTuple { s, t, x, y, z, tau: taus[i % taus.len()] }
        })
        .collect()
}

impl HarnackTuple {
    pub fn describe(&self) -> serde_json::Value {
        json!({ "s": self.s, "t": self.t, "tau": self.tau, "x": self.x.coords(), "y": self.y.coords(), "z": self.z.coords() })
    }
}
