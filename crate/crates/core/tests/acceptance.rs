//! Acceptance run: one PASS/FAIL line per criterion, then a single assertion over all of them.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use sasaki_core::diffops::{frame_commutator, CurvatureTerms};
use sasaki_core::geodesics::{closed_form_distance, distance, MetricSpec, ShootingOptions};
use sasaki_core::heatkernel::{HeatKernel, VolumeScale};
use sasaki_core::polynomial::Polynomial;
use sasaki_core::verify::{
    check_cd_terms, check_global_distance, check_harnack, check_liyau, check_scaled_liyau, default_gaussian_grid,
    fit_distance_constants, fit_gaussian_constants, harnack_tuples, heldout_pairs, liyau_grid, mixed_fit_pairs,
    random_points, random_polynomials, regime_analysis, sample_distances, validation_gate, vertical_family, GateConfig,
    InequalityReport,
};
use sasaki_core::Point;

type Verdict = Result<String, String>;

fn line(text: &str) {
    // bypasses the test harness capture so the lines show up in plain `cargo test` output
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn record(results: &mut Vec<(usize, bool)>, id: usize, title: &str, started: Instant, v: Verdict) {
    let secs = started.elapsed().as_secs_f64();
    let (ok, detail) = match v {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    line(&format!("[{}] {id:>2} {title}: {detail} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" }));
    results.push((id, ok));
}

fn ensure(cond: bool, msg: String) -> Verdict {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn commutator_order() -> Verdict {
    let f = |q: &Point| (0.7 * q.x[0]).sin() * (0.4 * q.x[1]).cos() * (0.3 * q.z).exp() + q.x[0] * q.x[1] * q.z;
    let tf = |q: &Point| 0.3 * (0.7 * q.x[0]).sin() * (0.4 * q.x[1]).cos() * (0.3 * q.z).exp() + q.x[0] * q.x[1];
    let mut worst = f64::INFINITY;
    for p in [Point::h1(0.4, -0.3, 0.8), Point::h1(-1.2, 0.9, -0.5), Point::h1(2.0, 1.0, 1.5)] {
        let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|&h| (frame_commutator(&f, &p, 0, 1, h) - tf(&p)).abs()).collect();
        for w in errs.windows(2) {
            worst = worst.min((w[0] / w[1]).log2());
        }
    }
    ensure(worst >= 1.9, format!("minimum observed order {worst:.4} over three halvings at three points"))
}

fn shooting_vs_closed_form() -> Verdict {
    let start = Instant::now();
    let pairs = mixed_fit_pairs(100, 2);
    let opts = ShootingOptions::default();
    let errs: Vec<Result<f64, String>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let exact = closed_form_distance(a, b).map_err(|e| e.to_string())?;
            let shot = distance(&MetricSpec::SubRiemannian, a, b, &opts).map_err(|e| e.to_string())?;
            Ok((shot.length - exact).abs() / exact)
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for e in errs {
        worst = worst.max(e?);
    }
    ensure(worst <= 1e-6 && secs <= 60.0, format!("100 pairs, worst relative error {worst:.2e}, {secs:.1}s of 60s"))
}

fn metric_ordering() -> Verdict {
    let taus = [0.01, 0.1, 1.0, 10.0];
    let pairs = mixed_fit_pairs(100, 3);
    let samples = sample_distances(&pairs, &taus, &ShootingOptions::default()).map_err(|e| e.to_string())?;
    let (mut order, mut mono, mut gap, mut gap_checked) = (0, 0, 0, 0);
    let mut worst_gap = 0.0f64;
    for chunk in samples.chunks(taus.len()) {
        for s in chunk {
            if s.d_tau > s.d * (1.0 + 1e-6) {
                order += 1;
            }
        }
        for w in chunk.windows(2) {
            if w[1].d_tau > w[0].d_tau * (1.0 + 1e-6) {
                mono += 1;
            }
        }
        let s = &chunk[0];
        if s.d >= 1.0 {
            gap_checked += 1;
            let g = (s.d - s.d_tau) / s.d;
            worst_gap = worst_gap.max(g);
            if g > 0.01 {
                gap += 1;
            }
        }
    }
    ensure(
        order == 0 && mono == 0 && gap == 0,
        format!(
            "{} samples: {order} d_τ > d, {mono} monotonicity breaks, {gap}/{gap_checked} gaps above 1% (worst {worst_gap:.2e})",
            samples.len()
        ),
    )
}

fn gate(kernel: &HeatKernel) -> Verdict {
    let g = validation_gate(kernel, &GateConfig::default()).map_err(|e| e.to_string())?;
    let failed: Vec<String> = g.failures().map(|c| format!("{} {:?}", c.name, c.inputs)).collect();
    ensure(g.pass, format!("{} checks, failing: {:?}", g.checks.len(), failed))
}

fn curvature_dimension() -> Verdict {
    let nus = [0.1, 1.0, 10.0];
    let polys = random_polynomials(50, 5, 1, 5);
    let points = random_points(100, 2.0, 1, 6);
    let worst = polys
        .par_iter()
        .map(|f| {
            let terms = CurvatureTerms::new(1, f);
            let mut w = f64::INFINITY;
            for p in &points {
                for &nu in &nus {
                    w = w.min(terms.residual_at(p, nu));
                }
            }
            w
        })
        .reduce(|| f64::INFINITY, f64::min);
    let z = CurvatureTerms::new(1, &Polynomial::var(3, 2));
    let sharp = nus.iter().map(|&nu| z.residual_at(&Point::origin(1), nu).abs()).fold(0.0, f64::max);
    let report = check_cd_terms(&z, &Point::origin(1), 1.0).map_err(|e| e.to_string())?;
    ensure(
        worst >= -1e-10 && sharp <= 1e-12 && report.pass,
        format!("15000 instances, minimum residual {worst:.3e}; |residual| for f = z at the origin {sharp:.1e}"),
    )
}

fn tally(reports: &[Result<InequalityReport, String>]) -> (usize, f64, Vec<String>) {
    let mut fails = Vec::new();
    let mut min_margin = f64::INFINITY;
    for r in reports {
        match r {
            Ok(r) if r.pass => min_margin = min_margin.min(r.margin),
            Ok(r) => fails.push(format!("{} {:?} margin {:e}", r.name, r.inputs, r.margin)),
            Err(e) => fails.push(e.clone()),
        }
    }
    (reports.len(), min_margin, fails)
}

fn liyau(kernel: &HeatKernel) -> Verdict {
    let grid = liyau_grid();
    let reports: Vec<Result<InequalityReport, String>> = grid
        .par_iter()
        .flat_map_iter(|(t, y)| {
            let mut out = vec![check_liyau(kernel, *t, y).map_err(|e| e.to_string())];
            for tau in [0.1, 1.0, 10.0] {
                out.push(check_scaled_liyau(kernel, *t, y, tau).map_err(|e| e.to_string()));
            }
            out
        })
        .collect();
    let (n, m, fails) = tally(&reports);
    ensure(fails.is_empty(), format!("{n} instances on the 10×10 grid, {} failures {:?}, min margin {m:.3e}", fails.len(), fails))
}

fn harnack(kernel: &HeatKernel) -> Verdict {
    let opts = ShootingOptions::default();
    let reports: Vec<Result<InequalityReport, String>> = harnack_tuples(200, 7)
        .par_iter()
        .map(|h| check_harnack(kernel, h.s, h.t, &h.x, &h.y, &h.z, h.tau, &opts).map_err(|e| e.to_string()))
        .collect();
    let (n, m, fails) = tally(&reports);
    let y = Point::h1(0.4, -0.2, 0.3);
    let o = Point::origin(1);
    let p1 = kernel.density(1.0, &o, &y).map_err(|e| e.to_string())?;
    let p2 = kernel.density(2.0, &o, &y).map_err(|e| e.to_string())?;
    let degenerate = 16.0 * p2 - p1;
    ensure(
        fails.is_empty() && degenerate >= 0.0,
        format!("{n} tuples, {} failures {:?}, min log margin {m:.3}; 16 p(2) − p(1) = {degenerate:.3e}", fails.len(), fails),
    )
}

#[derive(Deserialize)]
struct Baseline {
    grid: BaselineGrid,
    volume: BaselineVolume,
    drift_tolerance: f64,
    fits: Vec<BaselineFit>,
}

#[derive(Deserialize)]
struct BaselineGrid {
    times: usize,
    targets: usize,
    seed: u64,
}

#[derive(Deserialize)]
struct BaselineVolume {
    samples: usize,
    seed: u64,
}

#[derive(Deserialize)]
struct BaselineFit {
    eps: f64,
    #[serde(rename = "C_eps")]
    c_eps: f64,
    #[serde(rename = "C_0")]
    c_0: f64,
}

fn gaussian(kernel: &HeatKernel) -> Verdict {
    let base: Baseline = serde_json::from_str(include_str!("data/gaussian_baseline.json")).map_err(|e| e.to_string())?;
    let vol = VolumeScale::h1_default();
    if vol.unit_ball.samples != base.volume.samples || vol.unit_ball.seed != base.volume.seed {
        return Err("volume estimate settings differ from the baseline".into());
    }
    let grid = default_gaussian_grid(base.grid.times, base.grid.targets, base.grid.seed);
    let mut parts = Vec::new();
    let mut ok = true;
    for b in &base.fits {
        let fit = fit_gaussian_constants(kernel, vol, &grid, b.eps).map_err(|e| e.to_string())?;
        let c = fit.constants["C_eps"];
        let c0 = fit.constants["C_0"];
        let drift = ((c - b.c_eps) / b.c_eps).abs().max(((c0 - b.c_0) / b.c_0).abs());
        ok &= fit.feasible && c.is_finite() && drift <= base.drift_tolerance;
        parts.push(format!("ε={} C={c:.6} C₀={c0:.6} drift {drift:.1e}", b.eps));
    }
    ensure(ok, format!("{} grid points; {}", grid.len(), parts.join("; ")))
}

fn global_distance() -> Verdict {
    let taus: Vec<f64> = (0..5).map(|i| 0.01 * 10f64.powi(i)).collect();
    let opts = ShootingOptions::default();
    let mut pairs = mixed_fit_pairs(60, 1);
    pairs.extend(vertical_family(0.01, 20.0, 30));
    let samples = sample_distances(&pairs, &taus, &opts).map_err(|e| e.to_string())?;
    let fit = fit_distance_constants(&samples).map_err(|e| e.to_string())?;
    if !fit.feasible {
        return Err(format!("fit infeasible: {:?}", fit.residual));
    }
    let (a, b) = (fit.constants["A"], fit.constants["B"]);
    let checks: Vec<Result<[InequalityReport; 2], String>> = heldout_pairs(200, 1, &taus)
        .par_iter()
        .map(|(x, y, tau)| check_global_distance(x, y, *tau, a, b, &opts).map_err(|e| e.to_string()))
        .collect();
    let mut violations = 0;
    for c in &checks {
        match c {
            Ok([r1, r2]) if r1.pass && r2.pass => {}
            _ => violations += 1,
        }
    }
    ensure(
        a >= 1.0 && violations == 0,
        format!("A = {a:.6}, B = {b:.6} from {} samples; {violations} held-out violations in 200 pairs", samples.len()),
    )
}

fn regimes() -> Verdict {
    let r = regime_analysis(&Point::origin(1), &Point::h1(0.0, 0.0, 1.0), 1.0, (1e-3, 1e-2), (1e2, 1e3), 6, &ShootingOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(
        (r.small_slope - 0.5).abs() <= 0.1 && (r.large_slope - 1.0).abs() <= 0.1,
        format!("small-λ slope {:.5}, large-λ slope {:.5}", r.small_slope, r.large_slope),
    )
}

fn determinism(kernel: &HeatKernel) -> Verdict {
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| {
            let opts = ShootingOptions::default();
            let reports: Vec<InequalityReport> = harnack_tuples(10, 7)
                .par_iter()
                .map(|h| check_harnack(kernel, h.s, h.t, &h.x, &h.y, &h.z, h.tau, &opts).map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            serde_json::to_string(&reports).map_err(|e| e.to_string())
        })
    };
    let one = run(1)?;
    let again = run(1)?;
    let four = run(4)?;
    ensure(one == again && one == four, format!("{} bytes; repeat identical: {}, 1 vs 4 threads identical: {}", one.len(), one == again, one == four))
}

#[test]
fn acceptance() {
    let kernel = HeatKernel::default();
    let mut results = Vec::new();

    let t = Instant::now();
    record(&mut results, 1, "frame bracket", t, commutator_order());
    let t = Instant::now();
    record(&mut results, 2, "shooting vs closed-form distance", t, shooting_vs_closed_form());
    let t = Instant::now();
    record(&mut results, 3, "metric ordering and convergence", t, metric_ordering());
    let t = Instant::now();
    let gate_verdict = gate(&kernel);
    let gate_ok = gate_verdict.is_ok();
    record(&mut results, 4, "heat-kernel validation gate", t, gate_verdict);
    let t = Instant::now();
    record(&mut results, 5, "curvature-dimension", t, curvature_dimension());

    let gated = |f: &dyn Fn(&HeatKernel) -> Verdict| if gate_ok { f(&kernel) } else { Err("not run: validation gate failed".into()) };
    let t = Instant::now();
    record(&mut results, 6, "Li-Yau and scaled Li-Yau", t, gated(&liyau));
    let t = Instant::now();
    record(&mut results, 7, "Harnack", t, gated(&harnack));
    let t = Instant::now();
    record(&mut results, 8, "Gaussian bounds and baseline", t, gated(&gaussian));
    let t = Instant::now();
    record(&mut results, 9, "global distance constants", t, global_distance());
    let t = Instant::now();
    record(&mut results, 10, "scale regimes", t, regimes());
    let t = Instant::now();
    record(&mut results, 11, "determinism", t, determinism(&kernel));

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    line(&format!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
