//! `verify` and `fit` subcommands.

use rayon::prelude::*;
use serde_json::json;

use sasaki_core::diffops::CurvatureTerms;
use sasaki_core::heatkernel::{HeatKernel, VolumeScale};
use sasaki_core::model_space::ModelSpace;
use sasaki_core::polynomial::Polynomial;
use sasaki_core::verify::{
    check_cd_terms, check_gaussian_bounds, check_global_distance, check_harnack, check_liyau, check_scaled_liyau,
    default_gaussian_grid, fit_distance_constants, fit_gaussian_constants, harnack_tuples, heldout_pairs, liyau_grid,
    mixed_fit_pairs, random_points, random_polynomials, regime_analysis, sample_distances, validation_gate,
    vertical_family, FitResult, GateReport, InequalityReport, VerifyError,
};
use sasaki_core::Point;

use crate::config::RunConfig;
use crate::report::{write_json, write_suite, Summary, SuiteReport};
use crate::{CliError, Outcome};

pub fn classify(e: VerifyError) -> CliError {
    match e {
        VerifyError::InvalidParameters(m) => CliError::Usage(m),
        other => CliError::NonConvergence(other.to_string()),
    }
}

fn or_failure(name: &str, r: Result<InequalityReport, VerifyError>) -> InequalityReport {
    r.unwrap_or_else(|e| InequalityReport::failure(name, e))
}

/// 0 when everything passed, 1 on any violated instance or infeasible fit, otherwise 3 when
/// some instance could not be computed.
pub fn outcome(reports: &[InequalityReport], fits: &[FitResult]) -> Outcome {
    let s = Summary::of(reports);
    if s.failed > 0 || fits.iter().any(|f| !f.feasible) {
        Outcome::Fail
    } else if s.errors > 0 {
        Outcome::NonConvergence
    } else {
        Outcome::Pass
    }
}

fn run_gate(cfg: &RunConfig, kernel: &HeatKernel) -> Result<Option<GateReport>, CliError> {
    if !cfg.gate {
        return Ok(None);
    }
    validation_gate(kernel, &cfg.gate_config()).map(Some).map_err(classify)
}

struct Finished {
    fits: Vec<FitResult>,
    details: Option<serde_json::Value>,
    reports: Vec<InequalityReport>,
}

fn finish(cfg: &RunConfig, suite: &str, gate: Option<&GateReport>, done: Finished) -> Result<Outcome, CliError> {
    let summary = Summary::of(&done.reports);
    let code = outcome(&done.reports, &done.fits);
    let report = SuiteReport {
        schema_version: crate::report::SCHEMA_VERSION,
        suite,
        config: cfg,
        gate,
        fits: done.fits,
        details: done.details,
        summary,
        reports: done.reports,
    };
    let path = write_suite(&cfg.out_dir, suite, &report)?;
    eprintln!(
        "{suite}: {} passed, {} failed, {} errors of {}; report {}",
        summary.passed,
        summary.failed,
        summary.errors,
        summary.total,
        path.display()
    );
    Ok(code)
}

/// Runs the validation gate first for suites that rely on the heat kernel.
fn gated(cfg: &RunConfig, suite: &str, body: impl FnOnce(&HeatKernel) -> Result<Finished, CliError>) -> Result<Outcome, CliError> {
    cfg.require_h1(suite)?;
    let kernel = cfg.kernel();
    let gate = run_gate(cfg, &kernel)?;
    if let Some(g) = &gate {
        if !g.pass {
            eprintln!("{suite}: validation gate failed; suite not run");
            for c in g.failures() {
                eprintln!("  {} margin {:e} tol {:e}", c.name, c.margin, c.tol);
            }
            finish(cfg, suite, Some(g), Finished { fits: vec![], details: None, reports: vec![] })?;
            return Ok(Outcome::Fail);
        }
    }
    let done = body(&kernel)?;
    finish(cfg, suite, gate.as_ref(), done)
}

pub fn verify_cd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let polys = random_polynomials(cfg.cd_polys, cfg.cd_degree, cfg.n, cfg.seed);
    let points = random_points(cfg.cd_points, 2.0, cfg.n, cfg.seed.wrapping_add(1));
    let mut reports: Vec<InequalityReport> = polys
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, f)| {
            let terms = CurvatureTerms::new(cfg.n, f);
            let mut out = Vec::with_capacity(points.len() * cfg.nus.len());
            for p in &points {
                for &nu in &cfg.nus {
                    out.push(or_failure("curvature_dimension", check_cd_terms(&terms, p, nu)).input("polynomial", i));
                }
            }
            out
        })
        .collect();
    // f = z at the origin: every term balances exactly
    let z = CurvatureTerms::new(cfg.n, &Polynomial::var(2 * cfg.n + 1, 2 * cfg.n));
    for &nu in &cfg.nus {
        reports.push(
            or_failure("curvature_dimension", check_cd_terms(&z, &Point::origin(cfg.n), nu))
                .input("polynomial", "z")
                .note("equality case"),
        );
    }
    let details = json!({ "polynomials": polys.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>() });
    finish(cfg, "cd", None, Finished { fits: vec![], details: Some(details), reports })
}

pub fn verify_liyau(cfg: &RunConfig) -> Result<Outcome, CliError> {
    gated(cfg, "liyau", |kernel| {
        let reports = liyau_grid()
            .par_iter()
            .flat_map_iter(|(t, y)| {
                let mut out = vec![or_failure("li_yau", check_liyau(kernel, *t, y))];
                for &tau in &cfg.taus {
                    out.push(or_failure("scaled_li_yau", check_scaled_liyau(kernel, *t, y, tau)));
                }
                out
            })
            .collect();
        Ok(Finished { fits: vec![], details: None, reports })
    })
}

pub fn verify_harnack(cfg: &RunConfig) -> Result<Outcome, CliError> {
    gated(cfg, "harnack", |kernel| {
        let opts = cfg.shooting();
        let tuples = harnack_tuples(cfg.count, cfg.seed);
        let mut reports: Vec<InequalityReport> = tuples
            .par_iter()
            .map(|h| {
                check_harnack(kernel, h.s, h.t, &h.x, &h.y, &h.z, h.tau, &opts)
                    .unwrap_or_else(|e| InequalityReport::failure("harnack", e).input("tuple", h.describe()))
            })
            .collect();
        // y = z: the factor reduces to (t/s)^{n+3}
        let y = Point::h1(0.4, -0.2, 0.3);
        reports.push(
            or_failure("harnack", check_harnack(kernel, 1.0, 2.0, &Point::origin(1), &y, &y, 1.0, &opts))
                .note("coincident points"),
        );
        Ok(Finished { fits: vec![], details: None, reports })
    })
}

fn volume(cfg: &RunConfig) -> Result<VolumeScale, CliError> {
    VolumeScale::estimate(&ModelSpace::h1(), cfg.volume_samples, cfg.seed).map_err(|e| CliError::Usage(e.to_string()))
}

fn gaussian_fits(cfg: &RunConfig, kernel: &HeatKernel, vol: &VolumeScale) -> Result<Vec<FitResult>, CliError> {
    if cfg.eps.is_empty() {
        return Err(CliError::Usage("no ε values given".into()));
    }
    let grid = default_gaussian_grid(cfg.gaussian_times, cfg.gaussian_targets, cfg.seed);
    cfg.eps.iter().map(|&eps| fit_gaussian_constants(kernel, vol, &grid, eps).map_err(classify)).collect()
}

pub fn verify_gaussian(cfg: &RunConfig) -> Result<Outcome, CliError> {
    gated(cfg, "gaussian", |kernel| {
        let vol = volume(cfg)?;
        let fits = gaussian_fits(cfg, kernel, &vol)?;
        let grid = default_gaussian_grid(cfg.gaussian_times, cfg.gaussian_targets, cfg.seed);
        let mut reports = Vec::new();
        for (fit, &eps) in fits.iter().zip(&cfg.eps) {
            let c = fit.constants["C_eps"];
            let chunk: Vec<InequalityReport> = grid
                .par_iter()
                .flat_map_iter(|(t, y)| match check_gaussian_bounds(kernel, &vol, *t, y, eps, c) {
                    Ok(pair) => pair.to_vec(),
                    Err(e) => vec![InequalityReport::failure("gaussian", e).input("t", *t).input("y", y.coords())],
                })
                .collect();
            reports.extend(chunk);
        }
        Ok(Finished { fits, details: None, reports })
    })
}

fn fit_global(cfg: &RunConfig) -> Result<FitResult, CliError> {
    let mut pairs = mixed_fit_pairs(cfg.fit_pairs, cfg.seed);
    pairs.extend(vertical_family(0.01, 20.0, cfg.vertical_pairs));
    if pairs.is_empty() || cfg.taus.is_empty() {
        return Err(CliError::Usage("distance fit needs at least one pair and one τ".into()));
    }
    let samples = sample_distances(&pairs, &cfg.taus, &cfg.shooting()).map_err(classify)?;
    fit_distance_constants(&samples).map_err(classify)
}

pub fn verify_global(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fit = fit_global(cfg)?;
    let mut reports = Vec::new();
    if fit.feasible {
        let (a, b) = (fit.constants["A"], fit.constants["B"]);
        let opts = cfg.shooting();
        reports = heldout_pairs(cfg.heldout, cfg.seed, &cfg.taus)
            .par_iter()
            .flat_map_iter(|(x, y, tau)| match check_global_distance(x, y, *tau, a, b, &opts) {
                Ok(pair) => pair.to_vec(),
                Err(e) => vec![InequalityReport::failure("global_distance", e)
                    .input("x", x.coords())
                    .input("y", y.coords())
                    .input("tau", *tau)],
            })
            .collect();
    }
    finish(cfg, "global", None, Finished { fits: vec![fit], details: None, reports })
}

pub fn verify_regimes(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let opts = cfg.shooting();
    // expected slopes at small and large scale; horizontal displacement keeps d ≍ d_τ throughout
    let cases = [
        ("vertical", Point::origin(1), Point::h1(0.0, 0.0, 1.0), 0.5),
        ("mixed", Point::origin(1), Point::h1(0.6, -0.3, 0.8), 1.0),
    ];
    let mut reports = Vec::new();
    let mut details = Vec::new();
    for (label, a, b, small_expected) in &cases {
        let r = regime_analysis(a, b, cfg.regime_tau, (1e-3, 1e-2), (1e2, 1e3), cfg.per_decade, &opts).map_err(classify)?;
        reports.push(
            InequalityReport::equality("small_scale_slope", r.small_slope, *small_expected, 0.1)
                .input("case", *label)
                .input("tau", r.tau),
        );
        reports.push(
            InequalityReport::equality("large_scale_slope", r.large_slope, 1.0, 0.1)
                .input("case", *label)
                .input("tau", r.tau),
        );
        details.push(json!({ "case": label, "analysis": r }));
    }
    finish(cfg, "regimes", None, Finished { fits: vec![], details: Some(json!(details)), reports })
}

fn fit_outcome(fits: &[FitResult]) -> Outcome {
    if fits.iter().all(|f| f.feasible) {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

#[derive(serde::Serialize)]
struct FitReport<'a> {
    schema_version: u32,
    kind: &'a str,
    config: &'a RunConfig,
    fits: &'a [FitResult],
}

fn write_fit(cfg: &RunConfig, kind: &str, fits: &[FitResult]) -> Result<Outcome, CliError> {
    let path = cfg.out_dir.join(format!("fit_{kind}.json"));
    write_json(&path, &FitReport { schema_version: crate::report::SCHEMA_VERSION, kind, config: cfg, fits })?;
    for f in fits {
        let constants: Vec<String> = f.constants.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        println!("{}: {} (feasible: {})", f.kind, constants.join(", "), f.feasible);
    }
    eprintln!("fit report {}", path.display());
    Ok(fit_outcome(fits))
}

pub fn fit_gaussian(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.require_h1("gaussian fit")?;
    let kernel = cfg.kernel();
    let vol = volume(cfg)?;
    let fits = gaussian_fits(cfg, &kernel, &vol)?;
    write_fit(cfg, "gaussian", &fits)
}

pub fn fit_global_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fit = fit_global(cfg)?;
    write_fit(cfg, "global", &[fit])
}
