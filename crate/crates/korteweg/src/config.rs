//! Experiment configuration: flat `key = value` files with dotted sections,
//! plus CLI overrides using the same keys. Unknown keys are errors, never
//! silently ignored.

use std::path::{Path, PathBuf};

use crate::constitutive::{FluidParams, LameMode};
use crate::error::{Error, Result};
use crate::relax::Preparation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Ek,
    Nsk,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Ek => "ek",
            Model::Nsk => "nsk",
        }
    }
}

/// Full description of one experiment (a single run or a sweep).
/// Deterministic by construction: there is no seed anywhere.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: Model,
    pub gamma: f64,
    pub s: f64,
    /// Relaxation parameters, one run per entry (descending for sweeps).
    pub epsilon_list: Vec<f64>,
    /// Viscosities: empty means 0 for every run (EK); one entry broadcasts;
    /// otherwise must match `epsilon_list` length.
    pub nu_list: Vec<f64>,
    pub grid_n: usize,
    pub grid_length: f64,
    pub rho_mean: f64,
    pub amplitude: f64,
    pub wavenumber: u32,
    pub prepared: Preparation,
    pub t_final: f64,
    pub n_outputs: usize,
    /// Slack tolerance factor: `tol_slack = factor * max(Psi(0), eps^4)`.
    pub tol_slack_factor: f64,
    pub out_dir: PathBuf,
    pub cfl_advective: f64,
    pub cfl_dispersive: f64,
    pub cfl_viscous: f64,
    pub dt_override: Option<f64>,
    pub eq_dt: Option<f64>,
    /// Density floor as a fraction of the initial mean density.
    pub rho_floor_frac: f64,
    /// Equilibrium lower bound delta.
    pub delta_floor: f64,
    /// Worker pool size; 0 = available parallelism.
    pub workers: usize,
    /// Budget checkpoint cadence in solver steps.
    pub budget_stride: usize,
    /// Equilibrium tracker cadence in solver steps (must divide the budget
    /// stride).
    pub tracker_stride: usize,
    pub snapshot_times: Vec<f64>,
    pub lame: LameMode,
}

impl Default for ExperimentConfig {
    /// The reference configuration: gamma-law exponent 2, constant
    /// capillarity, a single cosine perturbation on the 2 pi torus.
    fn default() -> Self {
        Self {
            model: Model::Ek,
            gamma: 2.0,
            s: 0.0,
            epsilon_list: vec![0.4, 0.2, 0.1, 0.05],
            nu_list: Vec::new(),
            grid_n: 256,
            grid_length: 2.0 * std::f64::consts::PI,
            rho_mean: 2.0,
            amplitude: 0.5,
            wavenumber: 1,
            prepared: Preparation::WellPrepared,
            t_final: 0.3,
            n_outputs: 60,
            tol_slack_factor: 1e-6,
            out_dir: PathBuf::from("out"),
            cfl_advective: 0.4,
            cfl_dispersive: 0.8,
            cfl_viscous: 0.2,
            dt_override: None,
            eq_dt: None,
            rho_floor_frac: 1e-6,
            delta_floor: 1e-3,
            workers: 0,
            budget_stride: 16,
            tracker_stride: 8,
            snapshot_times: Vec::new(),
            lame: LameMode::MatchCapillarity,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}' as a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}' as an integer")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_f64(key, v.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "model.type" => {
                self.model = match value {
                    "ek" => Model::Ek,
                    "nsk" => Model::Nsk,
                    other => {
                        return Err(Error::Config(format!(
                            "model.type must be 'ek' or 'nsk', got '{other}'"
                        )))
                    }
                }
            }
            "fluid.gamma" => self.gamma = parse_f64(key, value)?,
            "fluid.s" => self.s = parse_f64(key, value)?,
            "fluid.nu" => self.nu_list = parse_list(key, value)?,
            "sweep.epsilon" => self.epsilon_list = parse_list(key, value)?,
            "grid.n" => self.grid_n = parse_usize(key, value)?,
            "grid.length" => self.grid_length = parse_f64(key, value)?,
            "ic.rho_mean" => self.rho_mean = parse_f64(key, value)?,
            "ic.amplitude" => self.amplitude = parse_f64(key, value)?,
            "ic.wavenumber" => {
                self.wavenumber = value.parse::<u32>().map_err(|_| {
                    Error::Config(format!("ic.wavenumber: cannot parse '{value}'"))
                })?
            }
            "ic.prepared" => {
                self.prepared = match value {
                    "well" => Preparation::WellPrepared,
                    "ill" => Preparation::IllPrepared,
                    other => {
                        return Err(Error::Config(format!(
                            "ic.prepared must be 'well' or 'ill', got '{other}'"
                        )))
                    }
                }
            }
            "time.t_final" => self.t_final = parse_f64(key, value)?,
            "time.outputs" => self.n_outputs = parse_usize(key, value)?,
            "time.dt_override" => self.dt_override = Some(parse_f64(key, value)?),
            "time.eq_dt" => self.eq_dt = Some(parse_f64(key, value)?),
            "time.snapshots" => self.snapshot_times = parse_list(key, value)?,
            "tol.slack" => self.tol_slack_factor = parse_f64(key, value)?,
            "out.dir" => self.out_dir = PathBuf::from(value),
            "cfl.advective" => self.cfl_advective = parse_f64(key, value)?,
            "cfl.dispersive" => self.cfl_dispersive = parse_f64(key, value)?,
            "cfl.viscous" => self.cfl_viscous = parse_f64(key, value)?,
            "solver.rho_floor_frac" => self.rho_floor_frac = parse_f64(key, value)?,
            "solver.delta_floor" => self.delta_floor = parse_f64(key, value)?,
            "solver.budget_stride" => self.budget_stride = parse_usize(key, value)?,
            "solver.tracker_stride" => self.tracker_stride = parse_usize(key, value)?,
            "run.workers" => self.workers = parse_usize(key, value)?,
            "lame.mode" => match value {
                "match" => self.lame = LameMode::MatchCapillarity,
                "custom" => {
                    if !matches!(self.lame, LameMode::Custom { .. }) {
                        self.lame = LameMode::Custom {
                            mu_coef: 1.0,
                            mu_exp: 1.0,
                            lambda_coef: 0.0,
                            lambda_exp: 1.0,
                        };
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "lame.mode must be 'match' or 'custom', got '{other}'"
                    )))
                }
            },
            "lame.mu_coef" | "lame.mu_exp" | "lame.lambda_coef" | "lame.lambda_exp" => {
                let v = parse_f64(key, value)?;
                let (mut mc, mut me, mut lc, mut le) = match self.lame {
                    LameMode::Custom {
                        mu_coef,
                        mu_exp,
                        lambda_coef,
                        lambda_exp,
                    } => (mu_coef, mu_exp, lambda_coef, lambda_exp),
                    LameMode::MatchCapillarity => (1.0, 1.0, 0.0, 1.0),
                };
                match key {
                    "lame.mu_coef" => mc = v,
                    "lame.mu_exp" => me = v,
                    "lame.lambda_coef" => lc = v,
                    _ => le = v,
                }
                self.lame = LameMode::Custom {
                    mu_coef: mc,
                    mu_exp: me,
                    lambda_coef: lc,
                    lambda_exp: le,
                };
            }
            unknown => {
                return Err(Error::Config(format!("unknown config key '{unknown}'")));
            }
        }
        Ok(())
    }

    /// Parse a whole config file body (`#` comments, blank lines allowed).
    pub fn apply_str(&mut self, body: &str) -> Result<()> {
        for (lineno, raw) in body.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::default();
        cfg.apply_str(&body)?;
        Ok(cfg)
    }

    /// Fluid parameters for one `(epsilon, nu)` pair of this experiment.
    pub fn params(&self, epsilon: f64, nu: f64) -> Result<FluidParams> {
        FluidParams::with_lame(self.gamma, self.s, epsilon, nu, self.lame)
    }

    /// The `(epsilon, nu)` schedule: nu broadcasts, or pairs up entrywise.
    pub fn schedule(&self) -> Result<Vec<(f64, f64)>> {
        if self.epsilon_list.is_empty() {
            return Ok(Vec::new());
        }
        let nus: Vec<f64> = match (self.model, self.nu_list.len()) {
            (Model::Ek, 0) => vec![0.0; self.epsilon_list.len()],
            (Model::Ek, _) => {
                if self.nu_list.iter().any(|&v| v != 0.0) {
                    return Err(Error::Config(
                        "model.type = ek requires nu = 0; use model.type = nsk".into(),
                    ));
                }
                vec![0.0; self.epsilon_list.len()]
            }
            (Model::Nsk, 0) => {
                return Err(Error::Config("model.type = nsk requires fluid.nu".into()))
            }
            (Model::Nsk, 1) => vec![self.nu_list[0]; self.epsilon_list.len()],
            (Model::Nsk, n) if n == self.epsilon_list.len() => self.nu_list.clone(),
            (Model::Nsk, n) => {
                return Err(Error::Config(format!(
                    "fluid.nu has {n} entries but sweep.epsilon has {}",
                    self.epsilon_list.len()
                )))
            }
        };
        Ok(self.epsilon_list.iter().cloned().zip(nus).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_mean - self.amplitude.abs() >= self.delta_floor) {
            return Err(Error::Config(format!(
                "initial data touches vacuum: rho_mean - |amplitude| = {} < delta = {}",
                self.rho_mean - self.amplitude.abs(),
                self.delta_floor
            )));
        }
        if !(self.delta_floor > 0.0) {
            return Err(Error::Config("solver.delta_floor must be > 0".into()));
        }
        if self.wavenumber < 1 {
            return Err(Error::Config("ic.wavenumber must be >= 1".into()));
        }
        if self.epsilon_list.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("sweep.epsilon entries must be > 0".into()));
        }
        if self.budget_stride == 0 || self.tracker_stride == 0 {
            return Err(Error::Config("strides must be >= 1".into()));
        }
        if self.budget_stride % self.tracker_stride != 0 {
            return Err(Error::Config(
                "solver.tracker_stride must divide solver.budget_stride".into(),
            ));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config("time.t_final must be > 0".into()));
        }
        if self.n_outputs == 0 {
            return Err(Error::Config("time.outputs must be >= 1".into()));
        }
        self.schedule()?;
        // constitutive constraints checked by the params constructor
        let probe_eps = self.epsilon_list.first().copied().unwrap_or(0.1);
        self.params(probe_eps, self.nu_list.first().copied().unwrap_or(0.0))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_file() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_str(
            "# reference sweep\n\
             model.type = ek\n\
             fluid.gamma = 2.0\n\
             fluid.s = 0\n\
             sweep.epsilon = 0.4, 0.2, 0.1, 0.05\n\
             grid.n = 256\n\
             grid.length = 6.283185307179586\n\
             ic.rho_mean = 2.0\n\
             ic.amplitude = 0.5\n\
             ic.wavenumber = 1\n\
             time.t_final = 0.3\n\
             time.outputs = 60\n\
             tol.slack = 1e-6\n\
             out.dir = /tmp/sweep_out\n",
        )
        .unwrap();
        assert_eq!(cfg.model, Model::Ek);
        assert_eq!(cfg.epsilon_list, vec![0.4, 0.2, 0.1, 0.05]);
        assert_eq!(cfg.grid_n, 256);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/sweep_out"));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply_str("fluid.gamm = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
    }

    #[test]
    fn vacuum_initial_data_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("ic.amplitude", "2.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nsk_needs_nu_and_ek_rejects_it() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("model.type", "nsk").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("fluid.nu", "0.1").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.schedule().unwrap()[0], (0.4, 0.1));

        let mut ek = ExperimentConfig::default();
        ek.set("fluid.nu", "0.1").unwrap();
        assert!(ek.validate().is_err());
    }

    #[test]
    fn custom_lame_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_str(
            "lame.mode = custom\nlame.mu_coef = 1.0\nlame.mu_exp = 1.0\nlame.lambda_coef = -1.0\nlame.lambda_exp = 1.0\n",
        )
        .unwrap();
        cfg.validate().unwrap(); // 2 mu_L + lambda_L = rho >= 0 is admissible
        cfg.set("lame.lambda_coef", "-3.0").unwrap();
        assert!(cfg.validate().is_err());
    }
}
