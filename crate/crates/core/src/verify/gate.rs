use serde::{Deserialize, Serialize};

use super::{InequalityReport, Provenance, VerifyError};
use crate::heatkernel::{
    cell_average, heat_equation_residual, mc_estimate_cells, total_mass, Cell, HeatKernel, DEFAULT_MC_STEPS,
};
use crate::model_space::{dilate, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub mc_paths: usize,
    pub mc_steps: usize,
    pub seed: u64,
    /// Finite-difference step of the residual check, in units of `√t`.
    pub fd_step: f64,
    pub residual_tol: f64,
    pub mass_tol: f64,
    pub scaling_tol: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            mc_paths: 100_000,
            mc_steps: DEFAULT_MC_STEPS,
            seed: 2024,
            fd_step: 5e-4,
            residual_tol: 1e-5,
            mass_tol: 1e-6,
            scaling_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub config: GateConfig,
    pub checks: Vec<InequalityReport>,
    pub pass: bool,
}

impl GateReport {
    pub fn failures(&self) -> impl Iterator<Item = &InequalityReport> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Fixed sample points for the residual check.
pub fn residual_points() -> Vec<(f64, Point)> {
    vec![
        (1.0, Point::h1(1.0, 0.0, 0.0)),
        (1.0, Point::origin(1)),
        (1.0, Point::h1(0.5, -1.0, 2.0)),
        (0.5, Point::h1(0.2, 0.3, -0.4)),
        (0.5, Point::h1(0.0, 0.0, 1.5)),
        (2.0, Point::h1(-1.5, 0.5, 0.7)),
        (2.0, Point::h1(0.0, 0.0, 3.0)),
        (1.5, Point::h1(2.0, 2.0, -1.0)),
        (0.7, Point::h1(-0.3, 0.9, 0.1)),
        (1.2, Point::h1(1.1, -0.6, -2.2)),
    ]
}

pub fn mc_cells() -> Vec<Cell> {
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [-0.5, 1.0, 0.5]]
        .iter()
        .map(|c| Cell::centered(*c, [0.25, 0.25, 0.25]).expect("fixed cells are valid"))
        .collect()
}

/// Normalization, heat-equation residual, Monte Carlo agreement and parabolic scaling of the
/// kernel. The inequality suites only run when every check passes.
pub fn validation_gate(kernel: &HeatKernel, cfg: &GateConfig) -> Result<GateReport, VerifyError> {
    let mut checks = Vec::new();
    let mass = total_mass(kernel, 1.0)?;
    checks.push(
        InequalityReport::equality("normalization", mass, 1.0, cfg.mass_tol)
            .input("t", 1.0)
            .provenance("mass", Provenance::Quadrature { rel_error: kernel.quad.rel_tol }),
    );

    for (t, y) in residual_points() {
        let r = heat_equation_residual(kernel, t, &y, cfg.fd_step * t.sqrt())?;
        checks.push(
            InequalityReport::new("heat_equation_residual", r.residual, 0.0, cfg.residual_tol)
                .input("t", t)
                .input("y", y.coords())
                .input("step", r.step)
                .input("dt_over_p", r.dt_over_p)
                .input("lap_over_p", r.lap_over_p)
                .provenance("dt_over_p", Provenance::Analytic)
                .provenance("lap_over_p", Provenance::FiniteDifference { est_error: r.residual }),
        );
    }

    let cells = mc_cells();
    let mc = mc_estimate_cells(1.0, &cells, cfg.mc_paths, cfg.mc_steps, cfg.seed)?;
    for (cell, est) in cells.iter().zip(&mc) {
        let avg = cell_average(kernel, 1.0, cell, 6)?;
        checks.push(
            InequalityReport::equality("monte_carlo_cell", est.density, avg, 3.0 * est.std_error)
                .input("t", 1.0)
                .input("cell_lo", cell.lo.to_vec())
                .input("cell_hi", cell.hi.to_vec())
                .provenance("a", Provenance::MonteCarlo { std_error: est.std_error, samples: est.paths })
                .provenance("b", Provenance::Quadrature { rel_error: kernel.quad.rel_tol }),
        );
    }

    let o = Point::origin(1);
    let lambda: f64 = 2.0;
    for (t, q) in [(1.0, Point::h1(0.3, 0.7, -0.4)), (0.5, Point::h1(1.2, -0.1, 2.0)), (1.0, Point::h1(0.0, 0.0, 0.8))] {
        let scaled = dilate(lambda, &q).map_err(|e| VerifyError::InvalidParameters(e.to_string()))?;
        let big = kernel.density(lambda * lambda * t, &o, &scaled)? * lambda.powi(4);
        let small = kernel.density(t, &o, &q)?;
        checks.push(
            InequalityReport::equality("parabolic_scaling", big / small, 1.0, cfg.scaling_tol)
                .input("t", t)
                .input("q", q.coords())
                .input("lambda", lambda)
                .provenance("a", Provenance::Quadrature { rel_error: kernel.quad.rel_tol }),
        );
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(GateReport { config: *cfg, checks, pass })
}
