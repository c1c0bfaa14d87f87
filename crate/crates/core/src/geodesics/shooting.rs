use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::closed_form::x_minus_sin;
use super::{hamiltonian, GeodesicError, GeodesicResult, MetricSpec};
use crate::model_space::{dilate, relative, Covector, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Fixed RK4 steps over unit time.
    pub steps: usize,
    /// Number of positive frequencies on the log grid; each is used with both signs.
    pub pz_levels: usize,
    /// Convergence threshold on the normalized endpoint error.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra uniformly random starts drawn from `seed`.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { steps: 512, pz_levels: 8, tol: 1e-9, max_iter: 60, random_starts: 0, seed: 0 }
    }
}

/// One sample of a phase-space trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub point: Point,
    pub covector: Covector,
}

// Flat phase layout: [x_1..x_n, y_1..y_n, z, px_1..px_n, py_1..py_n, pz].
fn vector_field(n: usize, tau_sq: f64, s: &[f64], out: &mut [f64]) {
    let m = 2 * n;
    let pz = s[2 * m + 1];
    let mut zdot = 0.0;
    for i in 0..n {
        let (x, y) = (s[i], s[n + i]);
        let xi = s[m + 1 + i] - 0.5 * y * pz;
        let eta = s[m + 1 + n + i] + 0.5 * x * pz;
        out[i] = xi;
        out[n + i] = eta;
        zdot += 0.5 * (x * eta - y * xi);
        out[m + 1 + i] = -0.5 * pz * eta;
        out[m + 1 + n + i] = 0.5 * pz * xi;
    }
    out[m] = zdot + tau_sq * pz;
    out[2 * m + 1] = 0.0;
}

struct Rk4 {
    n: usize,
    tau_sq: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize, tau_sq: f64) -> Self {
        let len = 2 * (2 * n + 1);
        Self { n, tau_sq, k: std::array::from_fn(|_| vec![0.0; len]), tmp: vec![0.0; len] }
    }

    fn step(&mut self, s: &mut [f64], h: f64) {
        let len = s.len();
        let [k1, k2, k3, k4] = &mut self.k;
        vector_field(self.n, self.tau_sq, s, k1);
        for j in 0..len {
            self.tmp[j] = s[j] + 0.5 * h * k1[j];
        }
        vector_field(self.n, self.tau_sq, &self.tmp, k2);
        for j in 0..len {
            self.tmp[j] = s[j] + 0.5 * h * k2[j];
        }
        vector_field(self.n, self.tau_sq, &self.tmp, k3);
        for j in 0..len {
            self.tmp[j] = s[j] + h * k3[j];
        }
        vector_field(self.n, self.tau_sq, &self.tmp, k4);
        for j in 0..len {
            s[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
}

fn pack(p: &Point, pv: &Covector) -> Vec<f64> {
    let mut s = Vec::with_capacity(2 * (p.x.len() + 1));
    s.extend_from_slice(&p.x);
    s.push(p.z);
    s.extend_from_slice(&pv.px);
    s.push(pv.pz);
    s
}

fn unpack(n: usize, s: &[f64]) -> PhaseState {
    let m = 2 * n;
    PhaseState {
        point: Point::new(s[..m].to_vec(), s[m]),
        covector: Covector::new(s[m + 1..2 * m + 1].to_vec(), s[2 * m + 1]),
    }
}

/// Integrates Hamilton's equations of `H_τ` with fixed-step classical RK4 and returns the
/// `steps + 1` samples of the trajectory.
pub fn integrate(
    spec: &MetricSpec,
    p0: &Point,
    pv0: &Covector,
    time: f64,
    steps: usize,
) -> Result<Vec<PhaseState>, GeodesicError> {
    spec.validate()?;
    if steps < 16 {
        return Err(GeodesicError::TooFewSteps(steps));
    }
    if p0.x.len() != pv0.px.len() {
        return Err(GeodesicError::DimensionMismatch);
    }
    if !p0.is_finite() || !pv0.is_finite() || !time.is_finite() {
        return Err(GeodesicError::NonFinite);
    }
    let n = p0.n();
    let mut rk = Rk4::new(n, spec.tau_sq());
    let mut s = pack(p0, pv0);
    let h = time / steps as f64;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(unpack(n, &s));
    for step in 1..=steps {
        rk.step(&mut s, h);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(GeodesicError::Diverged { step });
        }
        path.push(unpack(n, &s));
    }
    Ok(path)
}

/// Time-1 endpoint `(x, z)` of the geodesic from the origin with initial momentum `v`.
struct EndpointMap {
    n: usize,
    tau_sq: f64,
    steps: usize,
}

impl EndpointMap {
    fn endpoint(&self, v: &[f64]) -> Option<Vec<f64>> {
        let m = 2 * self.n;
        let mut s = vec![0.0; 2 * (m + 1)];
        s[m + 1..].copy_from_slice(v);
        let mut rk = Rk4::new(self.n, self.tau_sq);
        let h = 1.0 / self.steps as f64;
        for _ in 0..self.steps {
            rk.step(&mut s, h);
        }
        if s.iter().any(|x| !x.is_finite()) {
            return None;
        }
        s.truncate(m + 1);
        Some(s)
    }

    fn energy(&self, v: &[f64]) -> f64 {
        let m = 2 * self.n;
        0.5 * v[..m].iter().map(|a| a * a).sum::<f64>() + 0.5 * self.tau_sq * v[m] * v[m]
    }

    /// Energy at the end of the trajectory, for drift monitoring.
    fn final_energy(&self, v: &[f64]) -> f64 {
        let m = 2 * self.n;
        let mut s = vec![0.0; 2 * (m + 1)];
        s[m + 1..].copy_from_slice(v);
        let mut rk = Rk4::new(self.n, self.tau_sq);
        let h = 1.0 / self.steps as f64;
        for _ in 0..self.steps {
            rk.step(&mut s, h);
        }
        let p = Point::new(s[..m].to_vec(), s[m]);
        let pv = Covector::new(s[m + 1..2 * m + 1].to_vec(), s[2 * m + 1]);
        let spec = if self.tau_sq == 0.0 {
            MetricSpec::SubRiemannian
        } else {
            MetricSpec::Riemannian { tau: self.tau_sq.sqrt() }
        };
        hamiltonian(&spec, &p, &pv)
    }
}

fn residual(target: &[f64], end: &[f64]) -> Vec<f64> {
    end.iter().zip(target).map(|(e, t)| e - t).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

// Minimizing geodesics turn through at most one full circle; anything beyond this is a start
// wandering off.
const MAX_FREQUENCY: f64 = 4.0 * PI;

struct StartOutcome {
    v: Vec<f64>,
    error: f64,
    converged: bool,
}

/// Damped Gauss–Newton (Levenberg–Marquardt) on the endpoint map.
fn refine(map: &EndpointMap, target: &[f64], start: Vec<f64>, opts: &ShootingOptions) -> StartOutcome {
    let dim = start.len();
    let mut v = start;
    let Some(end) = map.endpoint(&v) else {
        return StartOutcome { v, error: f64::INFINITY, converged: false };
    };
    let mut r = residual(target, &end);
    let mut err = inf_norm(&r);
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iter {
        if err <= opts.tol {
            return StartOutcome { v, error: err, converged: true };
        }
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            let step = 1e-7 * v[j].abs().max(1.0);
            let mut vp = v.clone();
            vp[j] += step;
            let Some(ep) = map.endpoint(&vp) else {
                return StartOutcome { v, error: err, converged: false };
            };
            for i in 0..dim {
                jac[(i, j)] = (ep[i] - end_at(target, &r, i)) / step;
            }
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let max_diag = (0..dim).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut accepted = false;
        for _ in 0..12 {
            let mut damped = a.clone();
            for i in 0..dim {
                damped[(i, i)] += lambda * (a[(i, i)] + 1e-9 * max_diag);
            }
            let Some(delta) = damped.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = v.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if trial[dim - 1].abs() > MAX_FREQUENCY {
                lambda *= 10.0;
                continue;
            }
            if let Some(e) = map.endpoint(&trial) {
                let rt = residual(target, &e);
                if l2_sq(&rt) < l2_sq(&r) {
                    v = trial;
                    r = rt;
                    err = inf_norm(&r);
                    lambda = (lambda / 5.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    StartOutcome { converged: err <= opts.tol, v, error: err }
}

fn end_at(target: &[f64], r: &[f64], i: usize) -> f64 {
    target[i] + r[i]
}

/// Initial momenta for a unit-gauge target, in the flat layout `[px_1..px_n, py_1..py_n, pz]`.
///
/// For each frequency `pz` on a symmetric log grid (plus zero) the horizontal momentum is either
/// aimed so that the sub-Riemannian geodesic with that frequency hits the target's horizontal
/// displacement, or sized so that it reaches the target's height.
fn initial_guesses(n: usize, target: &Point, tau_sq: f64, opts: &ShootingOptions) -> Vec<Vec<f64>> {
    let levels = opts.pz_levels.max(1);
    let (lo, hi): (f64, f64) = (1e-3, 2.0 * PI * (1.0 - 1e-3));
    let mut freqs = vec![0.0];
    for k in 0..levels {
        let g = if levels == 1 { hi } else { lo * (hi / lo).powf(k as f64 / (levels - 1) as f64) };
        freqs.push(g);
        freqs.push(-g);
    }
    let c = target.horizontal_norm();
    let dir: Vec<f64> = if c > 1e-12 {
        target.x.iter().map(|v| v / c).collect()
    } else {
        let mut d = vec![0.0; 2 * n];
        d[0] = 1.0;
        d
    };

    // w_j = x_j + i y_j rotated by −pz/2 and scaled by `scale`
    let rotated = |w: &[f64], pz: f64, scale: f64| -> Vec<f64> {
        let (s, co) = (-pz / 2.0).sin_cos();
        let mut v = vec![0.0; 2 * n + 1];
        for j in 0..n {
            let (re, im) = (w[j], w[n + j]);
            v[j] = scale * (re * co - im * s);
            v[n + j] = scale * (re * s + im * co);
        }
        v[2 * n] = pz;
        v
    };

    let mut starts = Vec::new();
    for &pz in &freqs {
        let half = pz / 2.0;
        let aim = if half.abs() < 1e-12 { 1.0 } else { half / half.sin() };
        starts.push(rotated(&target.x, pz, aim));
        if pz != 0.0 {
            let area = target.z - tau_sq * pz;
            if area * pz > 0.0 {
                let len = (2.0 * pz * pz * area / x_minus_sin(pz)).sqrt();
                starts.push(rotated(&dir, pz, len));
            }
        }
    }
    if opts.random_starts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.random_starts {
            let pz = rng.random_range(-hi..hi);
            let half = pz / 2.0;
            let aim = if half.abs() < 1e-12 { 1.0 } else { half / half.sin() };
            let jitter = rng.random_range(0.5..1.5);
            starts.push(rotated(&target.x, pz, aim * jitter));
        }
    }
    starts
}

/// Length-minimizing geodesic between `a` and `b` for the metric `spec`.
///
/// Every start is refined independently; the result is the shortest converged geodesic, ties
/// broken by the lexicographic order of the initial momentum so the outcome does not depend on
/// scheduling.
pub fn distance(spec: &MetricSpec, a: &Point, b: &Point, opts: &ShootingOptions) -> Result<GeodesicResult, GeodesicError> {
    spec.validate()?;
    if opts.steps < 16 {
        return Err(GeodesicError::TooFewSteps(opts.steps));
    }
    if a.x.len() != b.x.len() {
        return Err(GeodesicError::DimensionMismatch);
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(GeodesicError::NonFinite);
    }
    let n = a.n();
    let q = relative(a, b);
    if q.is_origin() {
        return Ok(GeodesicResult {
            length: 0.0,
            initial_covector: Covector::new(vec![0.0; 2 * n], 0.0),
            endpoint_error: 0.0,
            restarts_used: 0,
            converged: true,
            energy_drift: 0.0,
        });
    }
    let s = q.gauge();
    let unit = dilate(1.0 / s, &q).map_err(|_| GeodesicError::NonFinite)?;
    let scaled = spec.rescaled(s);
    let map = EndpointMap { n, tau_sq: scaled.tau_sq(), steps: opts.steps };
    let target = unit.coords();
    let starts = initial_guesses(n, &unit, scaled.tau_sq(), opts);
    let tried = starts.len();

    let outcomes: Vec<StartOutcome> = starts.into_par_iter().map(|v| refine(&map, &target, v, opts)).collect();

    let best_error = outcomes.iter().map(|o| o.error).fold(f64::INFINITY, f64::min);
    let best = outcomes
        .iter()
        .filter(|o| o.converged)
        .map(|o| (map.energy(&o.v), o))
        .min_by(|(e1, o1), (e2, o2)| {
            e1.total_cmp(e2).then_with(|| {
                o1.v.iter().zip(&o2.v).map(|(x, y)| x.total_cmp(y)).find(|c| c.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            })
        });
    let Some((energy, outcome)) = best else {
        return Err(GeodesicError::NoConvergence { starts: tried, best_error });
    };
    let drift = (map.final_energy(&outcome.v) - energy).abs() / energy.max(1.0);
    let m = 2 * n;
    Ok(GeodesicResult {
        length: s * (2.0 * energy).sqrt(),
        initial_covector: Covector::new(outcome.v[..m].iter().map(|p| p * s).collect(), outcome.v[m]),
        endpoint_error: outcome.error,
        restarts_used: tried,
        converged: true,
        energy_drift: drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesics::closed_form_distance;

    #[test]
    fn straight_horizontal_line() {
        let path = integrate(&MetricSpec::SubRiemannian, &Point::origin(1), &Covector::h1(1.0, 0.0, 0.0), 1.0, 512).unwrap();
        let end = &path.last().unwrap().point;
        assert_eq!(path.len(), 513);
        assert!((end.x[0] - 1.0).abs() < 1e-10 && end.x[1].abs() < 1e-10 && end.z.abs() < 1e-10);
    }

    #[test]
    fn integrate_preconditions() {
        let o = Point::origin(1);
        let pv = Covector::h1(1.0, 0.0, 0.0);
        assert_eq!(integrate(&MetricSpec::SubRiemannian, &o, &pv, 1.0, 8), Err(GeodesicError::TooFewSteps(8)));
        let bad = Covector::h1(f64::NAN, 0.0, 0.0);
        assert_eq!(integrate(&MetricSpec::SubRiemannian, &o, &bad, 1.0, 32), Err(GeodesicError::NonFinite));
        let huge = Covector::h1(1e300, 1e300, 1e300);
        assert!(matches!(
            integrate(&MetricSpec::SubRiemannian, &o, &huge, 1.0, 32),
            Err(GeodesicError::Diverged { .. })
        ));
    }

    #[test]
    fn degenerate_pair_is_zero() {
        let p = Point::h1(1.0, 2.0, 3.0);
        let r = distance(&MetricSpec::SubRiemannian, &p, &p, &ShootingOptions::default()).unwrap();
        assert_eq!(r.length, 0.0);
        assert_eq!(r.restarts_used, 0);
    }

    #[test]
    fn distance_examples() {
        let opts = ShootingOptions::default();
        let o = Point::origin(1);
        let r = distance(&MetricSpec::SubRiemannian, &o, &Point::h1(2.0, 0.0, 0.0), &opts).unwrap();
        assert!((r.length - 2.0).abs() < 1e-8);
        let r = distance(&MetricSpec::SubRiemannian, &o, &Point::h1(0.0, 0.0, 1.0), &opts).unwrap();
        assert!((r.length - 2.0 * PI.sqrt()).abs() < 1e-6, "{}", r.length);
        for tau in [0.1, 1.0, 10.0] {
            let spec = MetricSpec::riemannian(tau).unwrap();
            let r = distance(&spec, &o, &Point::h1(1.5, 0.0, 0.0), &opts).unwrap();
            assert!((r.length - 1.5).abs() < 1e-8, "tau={tau}: {}", r.length);
        }
    }

    #[test]
    fn shooting_matches_closed_form_on_a_few_pairs() {
        let opts = ShootingOptions::default();
        let pairs = [
            (Point::h1(0.0, 0.0, 0.0), Point::h1(1.0, 0.5, 0.3)),
            (Point::h1(1.0, -1.0, 2.0), Point::h1(-0.5, 0.2, -1.0)),
            (Point::h1(0.1, 0.0, 0.0), Point::h1(0.1, 0.01, 2.5)),
        ];
        for (a, b) in pairs {
            let d = closed_form_distance(&a, &b).unwrap();
            let r = distance(&MetricSpec::SubRiemannian, &a, &b, &opts).unwrap();
            assert!((r.length - d).abs() <= 1e-6 * d, "{} vs {d}", r.length);
            assert!(r.energy_drift < 1e-10);
        }
    }
}
