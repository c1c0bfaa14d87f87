use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{FitResult, InequalityReport, Provenance, ResidualSummary, VerifyError};
use crate::geodesics::{closed_form_distance, distance, GeodesicResult, MetricSpec, ShootingOptions};
use crate::model_space::{dilate, Point};

/// Relative accuracy assumed for shooting lengths when forming tolerances.
pub const SOLVER_REL_TOL: f64 = 1e-6;

/// `d` and `d_τ` for one pair at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub a: Point,
    pub b: Point,
    pub tau: f64,
    pub d: f64,
    pub d_tau: f64,
    pub d_provenance: Provenance,
    pub d_tau_provenance: Provenance,
}

impl DistanceSample {
    /// The time `τ d_τ` at which the heat-kernel argument balances the two regimes.
    pub fn balance_time(&self) -> f64 {
        self.tau * self.d_tau
    }
}

fn shooting_prov(r: &GeodesicResult) -> Provenance {
    Provenance::Shooting { endpoint_error: r.endpoint_error, starts: r.restarts_used }
}

fn sr_distance(a: &Point, b: &Point, opts: &ShootingOptions) -> Result<(f64, Provenance), VerifyError> {
    if a.n() == 1 {
        Ok((closed_form_distance(a, b)?, Provenance::ClosedForm))
    } else {
        let r = distance(&MetricSpec::SubRiemannian, a, b, opts)?;
        Ok((r.length, shooting_prov(&r)))
    }
}

/// `d` and `d_τ` for every pair and every `τ`, in pair-major order.
pub fn sample_distances(pairs: &[(Point, Point)], taus: &[f64], opts: &ShootingOptions) -> Result<Vec<DistanceSample>, VerifyError> {
    let jobs: Vec<(usize, f64)> = (0..pairs.len()).flat_map(|i| taus.iter().map(move |&t| (i, t))).collect();
    let sr: Vec<(f64, Provenance)> = pairs.par_iter().map(|(a, b)| sr_distance(a, b, opts)).collect::<Result<_, _>>()?;
    jobs.par_iter()
        .map(|&(i, tau)| {
            let (a, b) = &pairs[i];
            let r = distance(&MetricSpec::riemannian(tau)?, a, b, opts)?;
            Ok(DistanceSample {
                a: a.clone(),
                b: b.clone(),
                tau,
                d: sr[i].0,
                d_tau: r.length,
                d_provenance: sr[i].1.clone(),
                d_tau_provenance: shooting_prov(&r),
            })
        })
        .collect()
}

fn random_point(rng: &mut ChaCha8Rng, half: f64) -> Point {
    Point::h1(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

/// Random pairs in the box `|x|, |y|, |z| ≤ 3`.
pub fn mixed_fit_pairs(count: usize, seed: u64) -> Vec<(Point, Point)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (random_point(&mut rng, 3.0), random_point(&mut rng, 3.0))).collect()
}

/// `(0, (0, 0, h))` for `h` log-spaced over `[lo, hi]`.
pub fn vertical_family(lo: f64, hi: f64, count: usize) -> Vec<(Point, Point)> {
    (0..count)
        .map(|i| {
            let h = if count == 1 { lo } else { lo * (hi / lo).powf(i as f64 / (count - 1) as f64) };
            (Point::origin(1), Point::h1(0.0, 0.0, h))
        })
        .collect()
}

/// Fresh pairs in the box `|x|, |y|, |z| ≤ 3`, each assigned one `τ` from `taus` in turn.
pub fn heldout_pairs(count: usize, seed: u64, taus: &[f64]) -> Vec<(Point, Point, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_4e1d);
    (0..count)
        .map(|i| (random_point(&mut rng, 3.0), random_point(&mut rng, 3.0), taus[i % taus.len().max(1)]))
        .collect()
}

/// `d_τ ≤ d` and `d ≤ A d_τ + B √τ d_τ^{1/2}` for one pair.
pub fn check_global_distance(
    x: &Point,
    y: &Point,
    tau: f64,
    a: f64,
    b: f64,
    opts: &ShootingOptions,
) -> Result<[InequalityReport; 2], VerifyError> {
    let spec = MetricSpec::riemannian(tau)?;
    let (d, d_prov) = sr_distance(x, y, opts)?;
    let r = distance(&spec, x, y, opts)?;
    let dt = r.length;
    let tol = SOLVER_REL_TOL * d.max(dt);
    let first = InequalityReport::new("d_tau_le_d", dt, d, tol)
        .input("x", x.coords())
        .input("y", y.coords())
        .input("tau", tau)
        .provenance("d", d_prov.clone())
        .provenance("d_tau", shooting_prov(&r));
    let bound = a * dt + b * tau.sqrt() * dt.sqrt();
    let second = InequalityReport::new("d_le_bound", d, bound, tol)
        .input("x", x.coords())
        .input("y", y.coords())
        .input("tau", tau)
        .input("A", a)
        .input("B", b)
        .input("d_tau", dt)
        .provenance("d", d_prov)
        .provenance("d_tau", shooting_prov(&r));
    Ok([first, second])
}

struct Constraint {
    d: f64,
    u: f64,
    v: f64,
}

/// `A + max(0, max_i (d_i − A u_i)/v_i)`: the objective after eliminating `B`.
fn objective(cs: &[Constraint], a: f64) -> (f64, f64) {
    let b = cs.iter().map(|c| (c.d - a * c.u) / c.v).fold(0.0, f64::max);
    (a + b, b)
}

/// Minimal `A + B` over `A ≥ 1`, `B ≥ 0` with `d_i ≤ A u_i + B v_i` for every sample, where
/// `u = d_τ` and `v = √(τ d_τ)`.
///
/// The optimum of this two-variable LP sits at a vertex: `A = 1`, a point where one constraint
/// meets `B = 0`, or the crossing of two constraints. All vertices are enumerated; the objective
/// restricted to them is convex in `A`, so the minimum is located by bisection over the sorted
/// candidates.
pub fn fit_distance_constants(samples: &[DistanceSample]) -> Result<FitResult, VerifyError> {
    if samples.is_empty() {
        return Err(VerifyError::InvalidParameters("empty distance sample".into()));
    }
    let mut cs = Vec::new();
    let mut degenerate = 0usize;
    for s in samples {
        if s.d <= 0.0 {
            continue;
        }
        let u = s.d_tau;
        let v = (s.tau * s.d_tau).sqrt();
        if !(u > 0.0 && v > 0.0) {
            degenerate += 1;
            continue;
        }
        cs.push(Constraint { d: s.d, u, v });
    }
    let mut constants = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("degenerate_constraints".into(), degenerate as f64);
    let description = describe(samples);
    if degenerate > 0 {
        // d > 0 with d_τ = 0 cannot be bounded by any constants
        return Ok(FitResult {
            kind: "global_distance".into(),
            constants,
            feasible: false,
            residual: ResidualSummary { max_violation: f64::MAX, active: 0, worst_index: None },
            samples: samples.len(),
            sample_description: description,
            diagnostics,
        });
    }
    let a_max = cs.iter().map(|c| c.d / c.u).fold(1.0, f64::max);
    let mut cand = vec![1.0, a_max];
    for c in &cs {
        cand.push(c.d / c.u);
    }
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let den = cs[i].u * cs[j].v - cs[j].u * cs[i].v;
            if den != 0.0 {
                cand.push((cs[i].d * cs[j].v - cs[j].d * cs[i].v) / den);
            }
        }
    }
    cand.retain(|a| a.is_finite() && *a >= 1.0 && *a <= a_max);
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    diagnostics.insert("vertices".into(), cand.len() as f64);
    let (mut lo, mut hi) = (0usize, cand.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if objective(&cs, cand[mid]).0 <= objective(&cs, cand[mid + 1]).0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let a = cand[lo];
    let (_, b) = objective(&cs, a);
    let slack = |c: &Constraint| c.d - (a * c.u + b * c.v);
    let mut worst = None;
    let mut max_violation = f64::NEG_INFINITY;
    let mut active = 0;
    for (i, s) in samples.iter().enumerate() {
        let u = s.d_tau;
        let v = (s.tau * s.d_tau).sqrt();
        let e = slack(&Constraint { d: s.d, u, v });
        if e > max_violation {
            max_violation = e;
            worst = Some(i);
        }
        if s.d > 0.0 && e.abs() <= 1e-9 * s.d {
            active += 1;
        }
    }
    constants.insert("A".into(), a);
    constants.insert("B".into(), b);
    let max_ratio = samples.iter().filter(|s| s.d_tau > 0.0).map(|s| s.d / s.d_tau).fold(1.0, f64::max);
    diagnostics.insert("max_d_over_d_tau".into(), max_ratio);
    diagnostics.insert(
        "balance_time_min".into(),
        samples.iter().map(DistanceSample::balance_time).filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min),
    );
    diagnostics.insert("balance_time_max".into(), samples.iter().map(DistanceSample::balance_time).fold(0.0, f64::max));
    let d_max = samples.iter().map(|s| s.d).fold(0.0, f64::max);
    let feasible = a.is_finite() && b.is_finite() && a >= 1.0 && b >= 0.0 && max_violation <= 1e-12 * d_max.max(1.0);
    Ok(FitResult {
        kind: "global_distance".into(),
        constants,
        feasible,
        residual: ResidualSummary { max_violation, active, worst_index: worst },
        samples: samples.len(),
        sample_description: description,
        diagnostics,
    })
}

fn describe(samples: &[DistanceSample]) -> String {
    let mut taus: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let closed = samples.iter().filter(|s| s.d_provenance == Provenance::ClosedForm).count();
    format!(
        "{} (pair, τ) samples over τ ∈ {:?}; d by {} closed form / {} shooting, d_τ by shooting",
        samples.len(),
        taus,
        closed,
        samples.len() - closed
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePoint {
    pub lambda: f64,
    pub d: f64,
    pub d_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub tau: f64,
    pub base: Point,
    pub target: Point,
    pub small: Vec<RegimePoint>,
    pub large: Vec<RegimePoint>,
    /// Least-squares slope of `ln d` against `ln d_τ`.
    pub small_slope: f64,
    pub large_slope: f64,
}

fn slope(points: &[RegimePoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.d_tau.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.d.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn decade(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

/// `d(δ_λ a, δ_λ b)` against `d_τ(δ_λ a, δ_λ b)` for `λ` across one small and one large decade.
pub fn regime_analysis(
    a: &Point,
    b: &Point,
    tau: f64,
    small: (f64, f64),
    large: (f64, f64),
    per_decade: usize,
    opts: &ShootingOptions,
) -> Result<RegimeReport, VerifyError> {
    if per_decade < 2 {
        return Err(VerifyError::InvalidParameters("need at least two scales per decade".into()));
    }
    let spec = MetricSpec::riemannian(tau)?;
    let run = |range: (f64, f64)| -> Result<Vec<RegimePoint>, VerifyError> {
        decade(range.0, range.1, per_decade)
            .par_iter()
            .map(|&lambda| {
                let da = dilate(lambda, a).map_err(|e| VerifyError::InvalidParameters(e.to_string()))?;
                let db = dilate(lambda, b).map_err(|e| VerifyError::InvalidParameters(e.to_string()))?;
                let d = sr_distance(&da, &db, opts)?.0;
                let d_tau = distance(&spec, &da, &db, opts)?.length;
                Ok(RegimePoint { lambda, d, d_tau })
            })
            .collect()
    };
    let small = run(small)?;
    let large = run(large)?;
    Ok(RegimeReport {
        tau,
        base: a.clone(),
        target: b.clone(),
        small_slope: slope(&small),
        large_slope: slope(&large),
        small,
        large,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(d: f64, d_tau: f64, tau: f64) -> DistanceSample {
        DistanceSample {
            a: Point::origin(1),
            b: Point::origin(1),
            tau,
            d,
            d_tau,
            d_provenance: Provenance::Analytic,
            d_tau_provenance: Provenance::Analytic,
        }
    }

    fn brute_force(samples: &[DistanceSample]) -> f64 {
        // dense scan of A; the LP optimum can only be lower
        let cs: Vec<Constraint> = samples
            .iter()
            .filter(|s| s.d > 0.0)
            .map(|s| Constraint { d: s.d, u: s.d_tau, v: (s.tau * s.d_tau).sqrt() })
            .collect();
        let a_max = cs.iter().map(|c| c.d / c.u).fold(1.0, f64::max);
        (0..=200_000).map(|k| 1.0 + (a_max - 1.0) * k as f64 / 200_000.0).map(|a| objective(&cs, a).0).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn horizontal_only_sample_gives_a_one_b_zero() {
        let s: Vec<_> = [0.5, 1.0, 3.0].iter().flat_map(|&r| [0.01, 1.0, 100.0].map(|t| sample(r, r, t))).collect();
        let fit = fit_distance_constants(&s).unwrap();
        assert!(fit.feasible);
        assert_eq!(fit.constants["A"], 1.0);
        assert_eq!(fit.constants["B"], 0.0);
    }

    #[test]
    fn lp_matches_dense_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s: Vec<_> = (0..40)
                .map(|_| {
                    let dt: f64 = rng.random_range(0.01..5.0);
                    let tau: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
                    sample(dt * rng.random_range(1.0..4.0), dt, tau)
                })
                .collect();
            let fit = fit_distance_constants(&s).unwrap();
            let obj = fit.constants["A"] + fit.constants["B"];
            assert!(fit.feasible);
            assert!(obj <= brute_force(&s) + 1e-12, "{obj}");
            assert!(fit.residual.max_violation <= 1e-12);
        }
    }

    #[test]
    fn zero_d_tau_with_positive_d_is_infeasible() {
        let fit = fit_distance_constants(&[sample(1.0, 0.0, 1.0)]).unwrap();
        assert!(!fit.feasible);
    }

    #[test]
    fn coincident_points_pass_trivially() {
        let p = Point::h1(0.5, 0.5, 0.5);
        let [a, b] = check_global_distance(&p, &p, 1.0, 1.0, 0.0, &ShootingOptions::default()).unwrap();
        assert!(a.pass && b.pass && a.lhs == 0.0 && b.lhs == 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<RegimePoint> = [1.0, 2.0, 4.0].iter().map(|&x: &f64| RegimePoint { lambda: x, d: 3.0 * x.sqrt(), d_tau: x }).collect();
        assert!((slope(&pts) - 0.5).abs() < 1e-14);
    }
}
