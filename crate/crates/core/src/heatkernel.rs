//! Heat kernel of `∂_t f = Δf` on H¹ with its log-derivative bundle, a diffusion Monte Carlo
//! oracle, and the volume scale `μ(B(0, √t))`.
//!
//! The kernel is
//!
//! ```text
//! p_t(x, y, z) = 1/(8π² t²) ∫_ℝ (μ / sinh μ) exp(iμz/t − μ coth μ · r²/(4t)) dμ,   r² = x² + y².
//! ```
//!
//! On the real line the integrand oscillates and, for `|z| ≫ t`, cancels to many orders of
//! magnitude. The integrand is analytic in the strip `|Im μ| < π`, so the line is moved to
//! `Im μ = θ*`, the saddle of the integrand on the imaginary axis, where it is non-oscillatory
//! near its peak and the result keeps full relative accuracy.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

use crate::model_space::{relative, ModelSpace, Point, VolumeEstimate};
use crate::quadrature::{composite_rule, integrate, QuadOptions};

#[derive(Debug, Error, PartialEq)]
pub enum HeatKernelError {
    #[error("time must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error("the heat kernel is implemented for n = 1 only, got n = {0}")]
    UnsupportedDimension(usize),
    #[error("non-finite point")]
    NonFinite,
    #[error("quadrature did not converge (value {value:e}, error {error:e}, {intervals} panels)")]
    Quadrature { value: f64, error: f64, intervals: usize },
    #[error("at least {min} paths are required, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("invalid step: {0}")]
    InvalidStep(f64),
}

/// `p(t, x, y)` with `∂_t ln p`, `∇^H ln p` and `T ln p` taken at `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelBundle {
    pub t: f64,
    pub base: Point,
    pub target: Point,
    pub p: f64,
    pub ln_p: f64,
    pub dt_log: f64,
    pub grad_log: Vec<f64>,
    pub reeb_log: f64,
    /// Estimated relative quadrature error of `p`.
    pub quad_error: f64,
    /// Estimated absolute quadrature error of the three log-derivatives (worst component).
    pub deriv_error: f64,
}

impl HeatKernelBundle {
    pub fn grad_norm_sq(&self) -> f64 {
        self.grad_log.iter().map(|g| g * g).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatKernel {
    pub quad: QuadOptions,
    /// Integrand magnitude, relative to its value at the saddle, below which the tail is dropped.
    pub truncation: f64,
}

impl Default for HeatKernel {
    fn default() -> Self {
        Self { quad: QuadOptions { rel_tol: 1e-10, abs_floor: 1e-16, max_intervals: 4000, initial_pieces: 8 }, truncation: 1e-18 }
    }
}

const MU_SERIES: f64 = 1e-3;

/// `(μ / sinh μ, μ coth μ)` on the strip `|Im μ| < π`.
fn kernel_factors(mu: Complex64) -> (Complex64, Complex64) {
    if mu.norm() < MU_SERIES {
        let m2 = mu * mu;
        let m4 = m2 * m2;
        return (1.0 - m2 / 6.0 + m4 * (7.0 / 360.0), 1.0 + m2 / 3.0 - m4 / 45.0);
    }
    if mu.re.abs() > 20.0 {
        // sinh and cosh would overflow long before the integrand is negligible for small ρ
        let sgn = mu.re.signum();
        let e = (-2.0 * sgn * mu).exp();
        let ratio = 2.0 * sgn * mu * (-sgn * mu).exp() / (1.0 - e);
        let coth = sgn * (1.0 + e) / (1.0 - e);
        return (ratio, mu * coth);
    }
    let (s, c) = (mu.sinh(), mu.cosh());
    (mu / s, mu * c / s)
}

/// `ln(θ/sin θ) − θw − θ cot θ · ρ`, the log of the integrand at `iθ`.
fn log_on_axis(theta: f64, w: f64, rho: f64) -> f64 {
    if theta < 1e-4 {
        let t2 = theta * theta;
        return t2 / 6.0 - theta * w - rho * (1.0 - t2 / 3.0 - t2 * t2 / 45.0);
    }
    (theta / theta.sin()).ln() - theta * w - theta / theta.tan() * rho
}

fn saddle_slope(theta: f64, w: f64, rho: f64) -> f64 {
    if theta < 1e-4 {
        return theta / 3.0 - w + rho * (2.0 * theta / 3.0);
    }
    let (s, c) = theta.sin_cos();
    1.0 / theta - c / s - w - rho * (c / s - theta / (s * s))
}

/// The minimizer of the integrand along `[0, π)` on the imaginary axis.
pub(crate) fn saddle_height(w: f64, rho: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if saddle_slope(mid, w, rho) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Normalized integrand on the shifted contour together with the integrand weights that produce
/// the derivatives with respect to `r²`, `|z|` and `t`.
struct Contour {
    t: f64,
    w: f64,
    rho: f64,
    theta: f64,
    log_peak: f64,
}

impl Contour {
    fn new(t: f64, r2: f64, z_abs: f64) -> Self {
        let w = z_abs / t;
        let rho = r2 / (4.0 * t);
        let theta = saddle_height(w, rho);
        Self { t, w, rho, theta, log_peak: log_on_axis(theta, w, rho) }
    }

    fn integrand(&self, s: f64) -> (Complex64, Complex64) {
        let mu = Complex64::new(s, self.theta);
        let (ratio, mucoth) = kernel_factors(mu);
        let expo = Complex64::i() * mu * self.w - mucoth * self.rho - self.log_peak;
        (ratio * expo.exp(), mucoth)
    }

    fn magnitude(&self, s: f64) -> f64 {
        self.integrand(s).0.norm()
    }

    /// Point past which the integrand stays below `cut`; it decays like `s e^{−s(1 + ρ)}`.
    fn cutoff(&self, cut: f64) -> f64 {
        let mut s = 1.0;
        while s < 1e4 {
            if self.magnitude(s) < cut && self.magnitude(1.5 * s) < cut {
                return s;
            }
            s *= 1.5;
        }
        s
    }
}

struct Integrals {
    i0: f64,
    ir: f64,
    iz: f64,
    it: f64,
    err: [f64; 4],
    intervals: usize,
    converged: bool,
}

impl HeatKernel {
    fn check(&self, t: f64, x: &Point, y: &Point) -> Result<(), HeatKernelError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(HeatKernelError::InvalidTime(t));
        }
        if x.n() != 1 || y.n() != 1 || x.x.len() != 2 || y.x.len() != 2 {
            return Err(HeatKernelError::UnsupportedDimension(if x.n() != 1 { x.n() } else { y.n() }));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(HeatKernelError::NonFinite);
        }
        Ok(())
    }

    fn integrals(&self, c: &Contour, with_derivatives: bool) -> Integrals {
        let upper = c.cutoff(self.truncation);
        if with_derivatives {
            let f = |s: f64| {
                let (g, mucoth) = c.integrand(s);
                let mu = Complex64::new(s, c.theta);
                let im = Complex64::i() * mu;
                [
                    g.re,
                    (-mucoth * g).re / (4.0 * c.t),
                    (im * g).re / c.t,
                    ((-2.0 - im * c.w + mucoth * c.rho) * g).re / c.t,
                ]
            };
            let r = integrate(f, 0.0, upper, &self.quad);
            Integrals {
                i0: r.value[0],
                ir: r.value[1],
                iz: r.value[2],
                it: r.value[3],
                err: r.error,
                intervals: r.intervals,
                converged: r.converged,
            }
        } else {
            let r = integrate(|s: f64| [c.integrand(s).0.re], 0.0, upper, &self.quad);
            Integrals {
                i0: r.value[0],
                ir: 0.0,
                iz: 0.0,
                it: 0.0,
                err: [r.error[0], 0.0, 0.0, 0.0],
                intervals: r.intervals,
                converged: r.converged,
            }
        }
    }

    fn log_prefactor(t: f64) -> f64 {
        (2.0 / (8.0 * PI * PI * t * t)).ln()
    }

    /// `ln p_t(q)` of the displacement `q` together with its relative error estimate.
    pub fn ln_density_at(&self, t: f64, q: &Point) -> Result<(f64, f64), HeatKernelError> {
        self.check(t, &Point::origin(1), q)?;
        let c = Contour::new(t, q.x[0] * q.x[0] + q.x[1] * q.x[1], q.z.abs());
        let ints = self.integrals(&c, false);
        if !ints.converged || !(ints.i0 > 0.0) {
            return Err(HeatKernelError::Quadrature { value: ints.i0, error: ints.err[0], intervals: ints.intervals });
        }
        Ok((c.log_peak + ints.i0.ln() + Self::log_prefactor(t), ints.err[0] / ints.i0))
    }

    /// `p(t, x, y)` without derivatives.
    pub fn density(&self, t: f64, x: &Point, y: &Point) -> Result<f64, HeatKernelError> {
        self.check(t, x, y)?;
        Ok(self.ln_density_at(t, &relative(x, y))?.0.exp())
    }

    pub fn evaluate(&self, t: f64, x: &Point, y: &Point) -> Result<HeatKernelBundle, HeatKernelError> {
        self.check(t, x, y)?;
        let q = relative(x, y);
        let (qx, qy, qz) = (q.x[0], q.x[1], q.z);
        let c = Contour::new(t, qx * qx + qy * qy, qz.abs());
        let ints = self.integrals(&c, true);
        if !ints.converged || !(ints.i0 > 0.0) {
            return Err(HeatKernelError::Quadrature { value: ints.i0, error: ints.err[0], intervals: ints.intervals });
        }
        let ln_p = c.log_peak + ints.i0.ln() + Self::log_prefactor(t);
        let d_r2 = ints.ir / ints.i0;
        let d_z = if qz == 0.0 { 0.0 } else { qz.signum() * ints.iz / ints.i0 };
        let dt_log = ints.it / ints.i0;
        let d_x = 2.0 * qx * d_r2;
        let d_y = 2.0 * qy * d_r2;
        let rel0 = ints.err[0] / ints.i0;
        // error of a ratio I_k / I_0
        let e_r2 = ints.err[1] / ints.i0 + d_r2.abs() * rel0;
        let e_z = ints.err[2] / ints.i0 + d_z.abs() * rel0;
        let e_t = ints.err[3] / ints.i0 + dt_log.abs() * rel0;
        let q_abs = qx.abs() + qy.abs();
        let deriv_error = (2.0 * q_abs * e_r2 + 0.5 * q_abs * e_z).max(e_z).max(e_t);
        Ok(HeatKernelBundle {
            t,
            base: x.clone(),
            target: y.clone(),
            p: ln_p.exp(),
            ln_p,
            dt_log,
            grad_log: vec![d_x - 0.5 * qy * d_z, d_y + 0.5 * qx * d_z],
            reeb_log: d_z,
            quad_error: rel0,
            deriv_error,
        })
    }
}

/// Heat-equation residual `|∂_t p − Δp| / p` at `(t, 0, y)`, with the analytic `∂_t` and a
/// central-difference sub-Laplacian of step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatResidual {
    pub residual: f64,
    pub dt_over_p: f64,
    pub lap_over_p: f64,
    pub step: f64,
}

pub fn heat_equation_residual(kernel: &HeatKernel, t: f64, y: &Point, h: f64) -> Result<HeatResidual, HeatKernelError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(HeatKernelError::InvalidStep(h));
    }
    let o = Point::origin(1);
    let b = kernel.evaluate(t, &o, y)?;
    // densities relative to p(y) so that the second differences are O(1)
    let rel = |q: &Point| -> Result<f64, HeatKernelError> { Ok((kernel.ln_density_at(t, q)?.0 - b.ln_p).exp()) };
    let mut lap = 0.0;
    for k in 0..2 {
        let mut e = Point::origin(1);
        e.x[k] = h;
        let plus = rel(&crate::model_space::multiply(y, &e))?;
        e.x[k] = -h;
        let minus = rel(&crate::model_space::multiply(y, &e))?;
        lap += (plus - 2.0 + minus) / (h * h);
    }
    Ok(HeatResidual { residual: (b.dt_log - lap).abs(), dt_over_p: b.dt_log, lap_over_p: lap, step: h })
}

/// Axis-aligned box `Π [lo_k, hi_k]` in `(x, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Cell {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, HeatKernelError> {
        for k in 0..3 {
            if !(lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]) {
                return Err(HeatKernelError::InvalidCell(format!("axis {k}: [{}, {}]", lo[k], hi[k])));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn centered(center: [f64; 3], half: [f64; 3]) -> Result<Self, HeatKernelError> {
        Self::new(std::array::from_fn(|k| center[k] - half[k]), std::array::from_fn(|k| center[k] + half[k]))
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.hi[k] - self.lo[k]).product()
    }

    pub fn contains(&self, v: [f64; 3]) -> bool {
        (0..3).all(|k| v[k] >= self.lo[k] && v[k] < self.hi[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub density: f64,
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
    pub steps: usize,
}

pub const MIN_PATHS: usize = 10_000;
pub const DEFAULT_MC_STEPS: usize = 2048;

/// Endpoints at time `t` of the diffusion generated by `Δ`, started at the origin.
///
/// Horizontal increments are `√2 dW` (generator `Δ`, not `½Δ`), the height follows
/// `dz = ½(x dy − y dx)`. Path `i` uses its own ChaCha stream, so the output does not depend on
/// the thread count.
pub fn simulate_endpoints(t: f64, paths: usize, steps: usize, seed: u64) -> Result<Vec<[f64; 3]>, HeatKernelError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(HeatKernelError::InvalidTime(t));
    }
    if paths < MIN_PATHS {
        return Err(HeatKernelError::TooFewPaths { min: MIN_PATHS, got: paths });
    }
    if steps == 0 {
        return Err(HeatKernelError::InvalidStep(0.0));
    }
    let sd = (2.0 * t / steps as f64).sqrt();
    Ok((0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (mut x, mut y, mut z) = (0.0f64, 0.0f64, 0.0f64);
            for _ in 0..steps {
                let dx = sd * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                let dy = sd * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                z += 0.5 * (x * dy - y * dx);
                x += dx;
                y += dy;
            }
            [x, y, z]
        })
        .collect())
}

/// Density estimates for several cells from one shared set of paths.
pub fn mc_estimate_cells(t: f64, cells: &[Cell], paths: usize, steps: usize, seed: u64) -> Result<Vec<DiffusionEstimate>, HeatKernelError> {
    let ends = simulate_endpoints(t, paths, steps, seed)?;
    Ok(cells
        .iter()
        .map(|cell| {
            let hits = ends.iter().filter(|e| cell.contains(**e)).count();
            let frac = hits as f64 / paths as f64;
            let vol = cell.volume();
            // one pseudo-count keeps the error positive for empty cells
            let var_frac = frac.max(1.0 / paths as f64) * (1.0 - frac);
            DiffusionEstimate {
                density: frac / vol,
                std_error: (var_frac / paths as f64).sqrt() / vol,
                paths,
                seed,
                steps,
            }
        })
        .collect())
}

pub fn mc_estimate(t: f64, cell: &Cell, paths: usize, seed: u64) -> Result<DiffusionEstimate, HeatKernelError> {
    Ok(mc_estimate_cells(t, std::slice::from_ref(cell), paths, DEFAULT_MC_STEPS, seed)?.remove(0))
}

/// `(1/|cell|) ∫_cell p(t, 0, ·)` by a tensor Gauss–Legendre rule.
pub fn cell_average(kernel: &HeatKernel, t: f64, cell: &Cell, nodes: usize) -> Result<f64, HeatKernelError> {
    let rules: Vec<Vec<(f64, f64)>> = (0..3).map(|k| composite_rule(cell.lo[k], cell.hi[k], 2, nodes)).collect();
    let mut pts = Vec::new();
    for &(x, wx) in &rules[0] {
        for &(y, wy) in &rules[1] {
            for &(z, wz) in &rules[2] {
                pts.push((Point::h1(x, y, z), wx * wy * wz));
            }
        }
    }
    let vals: Result<Vec<f64>, _> =
        pts.par_iter().map(|(q, w)| kernel.ln_density_at(t, q).map(|(l, _)| w * l.exp())).collect();
    Ok(vals?.iter().sum::<f64>() / cell.volume())
}

/// `∫ p(t, 0, ·) dμ` in cylindrical coordinates over `r ≤ R`, `|z| ≤ Z` chosen from `t`.
pub fn total_mass(kernel: &HeatKernel, t: f64) -> Result<f64, HeatKernelError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(HeatKernelError::InvalidTime(t));
    }
    let r_max = 14.0 * t.sqrt();
    let z_max = 16.0 * t;
    let opts = QuadOptions { rel_tol: 1e-11, abs_floor: 1e-18, max_intervals: 400, initial_pieces: 4 };
    let failed = std::sync::atomic::AtomicBool::new(false);
    let inner = |r: f64| -> f64 {
        let res = integrate(
            |z: f64| match kernel.ln_density_at(t, &Point::h1(r, 0.0, z)) {
                Ok((l, _)) => [l.exp()],
                Err(_) => {
                    failed.store(true, std::sync::atomic::Ordering::Relaxed);
                    [0.0]
                }
            },
            0.0,
            z_max,
            &opts,
        );
        2.0 * res.value[0]
    };
    let outer = integrate(|r: f64| [2.0 * PI * r * inner(r)], 0.0, r_max, &opts);
    if failed.into_inner() {
        return Err(HeatKernelError::Quadrature { value: outer.value[0], error: outer.error[0], intervals: outer.intervals });
    }
    Ok(outer.value[0])
}

/// `μ(B(x, √t)) = c₁ t^{Q/2}` with `c₁ = μ(B(0, 1))` estimated once by Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeScale {
    pub unit_ball: VolumeEstimate,
    pub homogeneous_dim: usize,
}

pub const DEFAULT_VOLUME_SAMPLES: usize = 1_000_000;

impl VolumeScale {
    pub fn estimate(space: &ModelSpace, samples: usize, seed: u64) -> Result<Self, crate::model_space::ModelError> {
        Ok(Self { unit_ball: space.ball_volume(1.0, samples, seed)?, homogeneous_dim: space.homogeneous_dim() })
    }

    /// Shared H¹ instance with `DEFAULT_VOLUME_SAMPLES` and seed 0.
    pub fn h1_default() -> &'static VolumeScale {
        static CELL: OnceLock<VolumeScale> = OnceLock::new();
        CELL.get_or_init(|| Self::estimate(&ModelSpace::h1(), DEFAULT_VOLUME_SAMPLES, 0).expect("valid volume parameters"))
    }

    pub fn c1(&self) -> f64 {
        self.unit_ball.value
    }

    /// The base point does not enter: the measure is left-invariant.
    pub fn ball_volume_at_scale(&self, _x: &Point, t: f64) -> f64 {
        self.c1() * t.powf(self.homogeneous_dim as f64 / 2.0)
    }
}
