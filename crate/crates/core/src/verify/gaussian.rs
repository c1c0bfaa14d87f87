use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{FitResult, InequalityReport, Provenance, ResidualSummary, VerifyError};
use crate::geodesics::closed_form_distance;
use crate::heatkernel::{HeatKernel, VolumeScale};
use crate::model_space::Point;

/// One grid point of the Gaussian fit with the quantities it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSample {
    pub t: f64,
    pub y: Point,
    pub ln_p: f64,
    pub d: f64,
    pub ln_volume: f64,
}

/// `t` log-spaced over `[0.1, 10]` crossed with the origin and 49 seeded targets in
/// `|x|, |y|, |z| ≤ 2`.
pub fn default_gaussian_grid(times: usize, targets: usize, seed: u64) -> Vec<(f64, Point)> {
    let ts: Vec<f64> = (0..times)
        .map(|i| if times == 1 { 1.0 } else { 0.1 * 100f64.powf(i as f64 / (times - 1) as f64) })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ys = vec![Point::origin(1)];
    while ys.len() < targets {
        ys.push(Point::h1(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
    }
    ys.truncate(targets);
    ts.iter().flat_map(|&t| ys.iter().map(move |y| (t, y.clone()))).collect()
}

fn collect(kernel: &HeatKernel, volume: &VolumeScale, grid: &[(f64, Point)]) -> Result<Vec<GaussianSample>, VerifyError> {
    let o = Point::origin(1);
    grid.par_iter()
        .map(|(t, y)| {
            let ln_p = kernel.ln_density_at(*t, y)?.0;
            let d = closed_form_distance(&o, y)?;
            Ok(GaussianSample { t: *t, y: y.clone(), ln_p, d, ln_volume: volume.ball_volume_at_scale(&o, *t).ln() })
        })
        .collect()
}

/// Smallest `C ≥ 1` with
/// `C⁻¹ V(t)⁻¹ e^{−(1+3/n) d²/((4−ε)t)} ≤ p(t, 0, y) ≤ C V(t)⁻¹ e^{−d²/((4+ε)t)}` on the grid, and
/// the on-diagonal constant `C₀ = min_t p(t/2, 0, 0) V(t)`.
pub fn fit_gaussian_constants(
    kernel: &HeatKernel,
    volume: &VolumeScale,
    grid: &[(f64, Point)],
    eps: f64,
) -> Result<FitResult, VerifyError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(VerifyError::InvalidParameters(format!("ε must lie in (0, 1], got {eps}")));
    }
    if grid.is_empty() {
        return Err(VerifyError::InvalidParameters("empty grid".into()));
    }
    let n = 1.0;
    let samples = collect(kernel, volume, grid)?;
    let mut ln_c = 0.0f64;
    let mut worst = None;
    let mut upper_worst = f64::NEG_INFINITY;
    let mut lower_worst = f64::NEG_INFINITY;
    for (i, s) in samples.iter().enumerate() {
        let d2 = s.d * s.d;
        let upper = s.ln_p + s.ln_volume + d2 / ((4.0 + eps) * s.t);
        let lower = -(1.0 + 3.0 / n) * d2 / ((4.0 - eps) * s.t) - s.ln_volume - s.ln_p;
        upper_worst = upper_worst.max(upper);
        lower_worst = lower_worst.max(lower);
        if upper.max(lower) > ln_c {
            ln_c = upper.max(lower);
            worst = Some(i);
        }
    }
    let active = samples
        .iter()
        .filter(|s| {
            let d2 = s.d * s.d;
            let upper = s.ln_p + s.ln_volume + d2 / ((4.0 + eps) * s.t);
            let lower = -(1.0 + 3.0 / n) * d2 / ((4.0 - eps) * s.t) - s.ln_volume - s.ln_p;
            (upper.max(lower) - ln_c).abs() <= 1e-9 * ln_c.abs().max(1.0)
        })
        .count();
    let mut times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let o = Point::origin(1);
    let mut ln_c0 = f64::INFINITY;
    for &t in &times {
        let half = kernel.ln_density_at(t / 2.0, &o)?.0;
        ln_c0 = ln_c0.min(half + volume.ball_volume_at_scale(&o, t).ln());
    }
    let c = ln_c.exp();
    let mut constants = BTreeMap::new();
    constants.insert("C_eps".to_string(), c);
    constants.insert("C_0".to_string(), ln_c0.exp());
    constants.insert("eps".to_string(), eps);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("ln_C_upper_bound".to_string(), upper_worst);
    diagnostics.insert("ln_C_lower_bound".to_string(), lower_worst);
    diagnostics.insert("unit_ball_volume".to_string(), volume.c1());
    diagnostics.insert("unit_ball_volume_std_error".to_string(), volume.unit_ball.std_error);
    Ok(FitResult {
        kind: "gaussian".into(),
        feasible: c.is_finite() && c >= 1.0 && ln_c0.is_finite(),
        constants,
        residual: ResidualSummary { max_violation: 0.0, active, worst_index: worst },
        samples: samples.len(),
        sample_description: format!(
            "{} grid points over {} times in [{}, {}]; d from the closed form, p by contour quadrature",
            samples.len(),
            times.len(),
            times.first().copied().unwrap_or(f64::NAN),
            times.last().copied().unwrap_or(f64::NAN)
        ),
        diagnostics,
    })
}

/// Both sides of the two-sided Gaussian bound at `(t, y)` for given `C` and `ε`, in log form.
pub fn check_gaussian_bounds(
    kernel: &HeatKernel,
    volume: &VolumeScale,
    t: f64,
    y: &Point,
    eps: f64,
    c: f64,
) -> Result<[InequalityReport; 2], VerifyError> {
    if !(eps > 0.0 && eps <= 1.0 && c > 0.0) {
        return Err(VerifyError::InvalidParameters(format!("need ε in (0, 1] and C > 0, got ε = {eps}, C = {c}")));
    }
    let n = 1.0;
    let o = Point::origin(1);
    let (ln_p, rel) = kernel.ln_density_at(t, y)?;
    let d = closed_form_distance(&o, y)?;
    let ln_v = volume.ball_volume_at_scale(&o, t).ln();
    let d2 = d * d;
    // ln of the relative quadrature error plus the fitted constant's own round-off
    let tol = 10.0 * rel + 1e-12 * c.ln().abs().max(1.0);
    let upper = InequalityReport::new("gaussian_upper", ln_p, c.ln() - ln_v - d2 / ((4.0 + eps) * t), tol);
    let lower = InequalityReport::new("gaussian_lower", -c.ln() - ln_v - (1.0 + 3.0 / n) * d2 / ((4.0 - eps) * t), ln_p, tol);
    let tag = |r: InequalityReport| {
        r.input("t", t)
            .input("y", y.coords())
            .input("eps", eps)
            .input("C", c)
            .input("d", d)
            .provenance("p", Provenance::Quadrature { rel_error: rel })
            .provenance("d", Provenance::ClosedForm)
            .provenance(
                "volume",
                Provenance::MonteCarlo { std_error: volume.unit_ball.std_error, samples: volume.unit_ball.samples },
            )
            .note("sides are logarithms")
    };
    Ok([tag(upper), tag(lower)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::ModelSpace;

    #[test]
    fn diagonal_only_grid_gives_c_at_least_one() {
        let k = HeatKernel::default();
        let vol = VolumeScale::estimate(&ModelSpace::h1(), 20_000, 3).unwrap();
        let grid: Vec<(f64, Point)> = [0.1, 1.0, 10.0].iter().map(|&t| (t, Point::origin(1))).collect();
        let fit = fit_gaussian_constants(&k, &vol, &grid, 0.5).unwrap();
        let c = fit.constants["C_eps"];
        assert!(fit.feasible && c >= 1.0);
        // p(t, 0, 0) V(t) = c₁/16 for every t
        let expected = (vol.c1() / 16.0).max(16.0 / vol.c1());
        assert!((c - expected).abs() < 1e-9 * expected, "{c} vs {expected}");
        assert!((fit.constants["C_0"] - vol.c1() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn grid_shape() {
        let g = default_gaussian_grid(10, 50, 0);
        assert_eq!(g.len(), 500);
        assert!((g[0].0 - 0.1).abs() < 1e-15 && (g[499].0 - 10.0).abs() < 1e-12);
        assert!(g[0].1.is_origin());
    }

    #[test]
    fn fitted_constant_satisfies_bounds() {
        let k = HeatKernel::default();
        let vol = VolumeScale::estimate(&ModelSpace::h1(), 20_000, 3).unwrap();
        let grid = default_gaussian_grid(3, 4, 1);
        let fit = fit_gaussian_constants(&k, &vol, &grid, 0.5).unwrap();
        let c = fit.constants["C_eps"];
        for (t, y) in &grid {
            let [u, l] = check_gaussian_bounds(&k, &vol, *t, y, 0.5, c).unwrap();
            assert!(u.pass && l.pass, "{u:?} {l:?}");
        }
        let (t, y) = &grid[fit.residual.worst_index.unwrap()];
        let [u, l] = check_gaussian_bounds(&k, &vol, *t, y, 0.5, 0.5 * c).unwrap();
        assert!(!(u.pass && l.pass));
    }
}
