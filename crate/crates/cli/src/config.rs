//! Run configuration: built-in defaults, then `SASAKI_SEED`, then a `key = value` file, then
//! command-line overrides.

use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub seed: u64,
    /// Where reports go; not part of the recorded configuration.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub quad_rel_tol: f64,
    pub shooting_steps: usize,
    pub shooting_tol: f64,
    pub pz_levels: usize,
    pub random_starts: usize,
    pub gate: bool,
    pub gate_paths: usize,
    pub gate_seed: u64,
    pub gate_steps: usize,
    pub count: usize,
    pub taus: Vec<f64>,
    pub eps: Vec<f64>,
    pub gaussian_times: usize,
    pub gaussian_targets: usize,
    pub volume_samples: usize,
    pub cd_polys: usize,
    pub cd_points: usize,
    pub cd_degree: u32,
    pub nus: Vec<f64>,
    pub fit_pairs: usize,
    pub vertical_pairs: usize,
    pub heldout: usize,
    pub regime_tau: f64,
    pub per_decade: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 1,
            seed: 0,
            out_dir: PathBuf::from("reports"),
            quad_rel_tol: 1e-10,
            shooting_steps: 512,
            shooting_tol: 1e-9,
            pz_levels: 8,
            random_starts: 0,
            gate: true,
            gate_paths: 20_000,
            gate_seed: 2024,
            gate_steps: 2048,
            count: 200,
            taus: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            eps: vec![0.1, 0.5, 1.0],
            gaussian_times: 10,
            gaussian_targets: 50,
            volume_samples: 1_000_000,
            cd_polys: 20,
            cd_points: 20,
            cd_degree: 5,
            nus: vec![0.1, 1.0, 10.0],
            fit_pairs: 60,
            vertical_pairs: 30,
            heldout: 200,
            regime_tau: 1.0,
            per_decade: 6,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("bad value for {key}: {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    /// Defaults, with `SASAKI_SEED` applied when set.
    pub fn from_env() -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Ok(s) = std::env::var("SASAKI_SEED") {
            cfg.set("seed", &s)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "n" => self.n = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "quad_rel_tol" => self.quad_rel_tol = parse(key, value)?,
            "shooting_steps" => self.shooting_steps = parse(key, value)?,
            "shooting_tol" => self.shooting_tol = parse(key, value)?,
            "pz_levels" => self.pz_levels = parse(key, value)?,
            "random_starts" => self.random_starts = parse(key, value)?,
            "gate" => self.gate = parse(key, value)?,
            "gate_paths" => self.gate_paths = parse(key, value)?,
            "gate_seed" => self.gate_seed = parse(key, value)?,
            "gate_steps" => self.gate_steps = parse(key, value)?,
            "count" => self.count = parse(key, value)?,
            "taus" => self.taus = parse_list(key, value)?,
            "eps" => self.eps = parse_list(key, value)?,
            "gaussian_times" => self.gaussian_times = parse(key, value)?,
            "gaussian_targets" => self.gaussian_targets = parse(key, value)?,
            "volume_samples" => self.volume_samples = parse(key, value)?,
            "cd_polys" => self.cd_polys = parse(key, value)?,
            "cd_points" => self.cd_points = parse(key, value)?,
            "cd_degree" => self.cd_degree = parse(key, value)?,
            "nus" => self.nus = parse_list(key, value)?,
            "fit_pairs" => self.fit_pairs = parse(key, value)?,
            "vertical_pairs" => self.vertical_pairs = parse(key, value)?,
            "heldout" => self.heldout = parse(key, value)?,
            "regime_tau" => self.regime_tau = parse(key, value)?,
            "per_decade" => self.per_decade = parse(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// `key=value` overrides from `--set`.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), CliError> {
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// The heat-kernel suites only exist for the first Heisenberg group.
    pub fn require_h1(&self, what: &str) -> Result<(), CliError> {
        if self.n != 1 {
            return Err(CliError::Usage(format!("{what} is only available for n = 1, got n = {}", self.n)));
        }
        Ok(())
    }

    pub fn shooting(&self) -> sasaki_core::geodesics::ShootingOptions {
        sasaki_core::geodesics::ShootingOptions {
            steps: self.shooting_steps,
            pz_levels: self.pz_levels,
            tol: self.shooting_tol,
            random_starts: self.random_starts,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn kernel(&self) -> sasaki_core::heatkernel::HeatKernel {
        let mut k = sasaki_core::heatkernel::HeatKernel::default();
        k.quad.rel_tol = self.quad_rel_tol;
        k
    }

    pub fn gate_config(&self) -> sasaki_core::verify::GateConfig {
        sasaki_core::verify::GateConfig {
            mc_paths: self.gate_paths,
            mc_steps: self.gate_steps,
            seed: self.gate_seed,
            ..Default::default()
        }
    }
}
