//! `distance` and `sweep` subcommands.

use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

use sasaki_core::geodesics::{closed_form_distance, distance, GeodesicError, GeodesicResult, MetricSpec};
use sasaki_core::model_space::dilate;
use sasaki_core::verify::{check_liyau, check_scaled_liyau, liyau_grid, InequalityReport};
use sasaki_core::Point;

use crate::config::RunConfig;
use crate::report::{emit, timestamp, to_json_with_timestamp};
use crate::{CliError, Outcome};

/// `x1,…,xn,y1,…,yn,z`.
pub fn parse_point(s: &str, n: usize) -> Result<Point, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad coordinate in point {s:?}"))))
        .collect::<Result<_, _>>()?;
    if v.len() != 2 * n + 1 {
        return Err(CliError::Usage(format!("point {s:?} has {} coordinates, expected {} for n = {n}", v.len(), 2 * n + 1)));
    }
    Point::from_coords(&v).map_err(|e| CliError::Usage(e.to_string()))
}

/// A comma list (`0.1,0.5,2`), `lin:lo:hi:count` or `log:lo:hi:count`. Returned sorted and
/// deduplicated; the empty string is the empty grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let spec = spec.trim();
    let bad = || CliError::Usage(format!("bad grid {spec:?}"));
    let mut v: Vec<f64> = if spec.is_empty() {
        Vec::new()
    } else if let Some(rest) = spec.strip_prefix("lin:").or_else(|| spec.strip_prefix("log:")) {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        let log = spec.starts_with("log:");
        if log && !(lo > 0.0 && hi > 0.0) {
            return Err(bad());
        }
        (0..count)
            .map(|i| {
                let s = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
                if log {
                    lo * (hi / lo).powf(s)
                } else {
                    lo + (hi - lo) * s
                }
            })
            .collect()
    } else {
        spec.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if v.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

#[derive(Serialize)]
struct DistanceOutput<'a> {
    schema_version: u32,
    metric: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(flatten)]
    result: &'a GeodesicResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
}

pub fn distance_cmd(cfg: &RunConfig, tau: Option<f64>, a: &str, b: &str, out: Option<&Path>) -> Result<Outcome, CliError> {
    let a = parse_point(a, cfg.n)?;
    let b = parse_point(b, cfg.n)?;
    let spec = match tau {
        Some(t) => MetricSpec::riemannian(t).map_err(|e| CliError::Usage(e.to_string()))?,
        None => MetricSpec::SubRiemannian,
    };
    let result = match distance(&spec, &a, &b, &cfg.shooting()) {
        Ok(r) => r,
        Err(e @ GeodesicError::NoConvergence { .. }) | Err(e @ GeodesicError::Diverged { .. }) => {
            return Err(CliError::NonConvergence(e.to_string()))
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let closed_form = match (tau, cfg.n) {
        (None, 1) => closed_form_distance(&a, &b).ok(),
        _ => None,
    };
    let output = DistanceOutput {
        schema_version: crate::report::SCHEMA_VERSION,
        metric: if tau.is_some() { "riemannian" } else { "sub_riemannian" },
        tau,
        a: a.coords(),
        b: b.coords(),
        result: &result,
        closed_form,
    };
    let text = to_json_with_timestamp(&output, timestamp())?;
    emit(out, &text)?;
    Ok(Outcome::Pass)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Shortest round-trip form, with an exponent for very small or large magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn point_cells(p: &Point) -> Vec<String> {
    p.coords().into_iter().map(num).collect()
}

fn sweep_outcome(errors: usize, violations: usize) -> Outcome {
    if violations > 0 {
        Outcome::Fail
    } else if errors > 0 {
        Outcome::NonConvergence
    } else {
        Outcome::Pass
    }
}

fn targets(cfg: &RunConfig, ys: &[String]) -> Result<Vec<Point>, CliError> {
    if ys.is_empty() {
        let mut v: Vec<Point> = Vec::new();
        for (_, y) in liyau_grid() {
            if !v.contains(&y) {
                v.push(y);
            }
        }
        Ok(v)
    } else {
        ys.iter().map(|s| parse_point(s, cfg.n)).collect()
    }
}

/// Heat kernel from the origin and its log-derivatives over a grid of times.
pub fn sweep_heat(cfg: &RunConfig, times: &str, ys: &[String], out: Option<&Path>) -> Result<Outcome, CliError> {
    cfg.require_h1("sweep heat")?;
    let ts = parse_grid(times)?;
    if ts.iter().any(|&t| t <= 0.0) {
        return Err(CliError::Usage("times must be positive".into()));
    }
    let ys = targets(cfg, ys)?;
    let kernel = cfg.kernel();
    let jobs: Vec<(f64, &Point)> = ts.iter().flat_map(|&t| ys.iter().map(move |y| (t, y))).collect();
    let rows: Vec<(bool, Vec<String>)> = jobs
        .par_iter()
        .map(|&(t, y)| {
            let mut row = vec![num(t)];
            row.extend(point_cells(y));
            match kernel.evaluate(t, &Point::origin(1), y) {
                Ok(b) => {
                    row.extend([b.p, b.ln_p, b.dt_log, b.grad_log[0], b.grad_log[1], b.reeb_log, b.quad_error, b.deriv_error].map(num));
                    row.push("ok".into());
                    (true, row)
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 8));
                    row.push(e.to_string());
                    (false, row)
                }
            }
        })
        .collect();
    let errors = rows.iter().filter(|r| !r.0).count();
    let header = ["t", "x", "y", "z", "p", "ln_p", "dt_log", "grad_log_x", "grad_log_y", "reeb_log", "quad_error", "deriv_error", "status"];
    emit(out, &csv_text(&header, &rows.into_iter().map(|r| r.1).collect::<Vec<_>>())?)?;
    Ok(sweep_outcome(errors, 0))
}

/// Margins of the Li–Yau inequality, or its scaled form when `tau` is given.
pub fn sweep_liyau(cfg: &RunConfig, times: &str, ys: &[String], tau: Option<f64>, out: Option<&Path>) -> Result<Outcome, CliError> {
    cfg.require_h1("sweep liyau-margin")?;
    let ts = parse_grid(times)?;
    if ts.iter().any(|&t| t <= 0.0) {
        return Err(CliError::Usage("times must be positive".into()));
    }
    let ys = targets(cfg, ys)?;
    let kernel = cfg.kernel();
    let jobs: Vec<(f64, &Point)> = ts.iter().flat_map(|&t| ys.iter().map(move |y| (t, y))).collect();
    let reports: Vec<InequalityReport> = jobs
        .par_iter()
        .map(|&(t, y)| {
            let r = match tau {
                Some(tau) => check_scaled_liyau(&kernel, t, y, tau),
                None => check_liyau(&kernel, t, y),
            };
            r.unwrap_or_else(|e| InequalityReport::failure("li_yau", e))
        })
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&reports)
        .map(|((t, y), r)| {
            let mut row = vec![num(*t)];
            row.extend(point_cells(y));
            row.extend([r.lhs, r.rhs, r.margin, r.tol].map(num));
            row.push(r.pass.to_string());
            row
        })
        .collect();
    let errors = reports.iter().filter(|r| r.is_failure()).count();
    let violations = reports.iter().filter(|r| !r.pass && !r.is_failure()).count();
    emit(out, &csv_text(&["t", "x", "y", "z", "lhs", "rhs", "margin", "tol", "pass"], &rows)?)?;
    Ok(sweep_outcome(errors, violations))
}

/// `d / d_τ` for the dilated pair `(δ_λ a, δ_λ b)` over a grid of `λ`.
pub fn sweep_distance(cfg: &RunConfig, lambdas: &str, a: &str, b: &str, tau: f64, out: Option<&Path>) -> Result<Outcome, CliError> {
    let ls = parse_grid(lambdas)?;
    if ls.iter().any(|&l| l <= 0.0) {
        return Err(CliError::Usage("dilation factors must be positive".into()));
    }
    let a = parse_point(a, cfg.n)?;
    let b = parse_point(b, cfg.n)?;
    let spec = MetricSpec::riemannian(tau).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = cfg.shooting();
    let rows: Vec<(bool, Vec<String>)> = ls
        .par_iter()
        .map(|&l| {
            let mut row = vec![num(l)];
            let pair = dilate(l, &a).and_then(|da| dilate(l, &b).map(|db| (da, db)));
            let res = match pair {
                Ok((da, db)) => distance(&MetricSpec::SubRiemannian, &da, &db, &opts)
                    .and_then(|d| distance(&spec, &da, &db, &opts).map(|dt| (d, dt)))
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            match res {
                Ok((d, dt)) => {
                    row.extend([d.length, dt.length, d.length / dt.length, d.endpoint_error, dt.endpoint_error].map(num));
                    row.push("ok".into());
                    (true, row)
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 5));
                    row.push(e);
                    (false, row)
                }
            }
        })
        .collect();
    let errors = rows.iter().filter(|r| !r.0).count();
    let header = ["lambda", "d", "d_tau", "ratio", "d_endpoint_error", "d_tau_endpoint_error", "status"];
    emit(out, &csv_text(&header, &rows.into_iter().map(|r| r.1).collect::<Vec<_>>())?)?;
    Ok(sweep_outcome(errors, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_grid("2, 1,2").unwrap(), vec![1.0, 2.0]);
        assert_eq!(parse_grid("lin:0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse_grid("log:0.1:10:3").unwrap();
        assert!((g[1] - 1.0).abs() < 1e-15);
        assert!(parse_grid("log:0:1:3").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("lin:0:1").is_err());
    }

    #[test]
    fn points() {
        assert_eq!(parse_point("1,-2,0.5", 1).unwrap(), Point::h1(1.0, -2.0, 0.5));
        assert!(parse_point("1,2", 1).is_err());
        assert!(parse_point("1,2,x", 1).is_err());
        assert_eq!(parse_point("1,2,3,4,5", 2).unwrap().n(), 2);
    }
}
