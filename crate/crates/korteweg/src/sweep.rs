//! Epsilon/viscosity sweeps: each run integrates the relaxation system in
//! lockstep with an equilibrium tracker, accumulates the relative-entropy
//! budget at solver resolution, and records the quantities the stability
//! estimates are checked against.


use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Model};
use crate::constitutive::FluidParams;
use crate::entropy::{budget_with, psi_with, weighted_velocity_diff, EntropyBudget, EquilibriumFields};
use crate::equilibrium::GradientFlowTracker;
use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};
use crate::relax::{
    cfl_dt, prepare_initial, RelaxSample, SolverConfig, Stepper,
};
use crate::relax;

/// Everything recorded for one `(epsilon, nu)` run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub epsilon: f64,
    pub nu: f64,
    pub psi0: f64,
    /// `sup` of Psi over the output times.
    pub sup_psi: f64,
    pub slack_min: f64,
    pub tol_slack: f64,
    /// `|| m(T) ||_2` at the final time.
    pub m_norm_final: f64,
    /// `sup_t || m(t) ||_2` over output times: the first Hilbert order,
    /// expected O(eps) uniformly in time.
    pub m_norm_sup: f64,
    /// `|| m(T) - m_bar(T) ||_2` against the Darcy reconstruction.
    pub m_minus_darcy_final: f64,
    /// `sup_t || sqrt(rho)(u - u_bar) ||_2` over budget checkpoints.
    pub sup_weighted_du: f64,
    pub mass_drift_rel: f64,
    pub wall_time_s: f64,
    /// Abort message if the run did not finish; partial records remain.
    pub error: Option<String>,
    pub times: Vec<f64>,
    pub psi_series: Vec<f64>,
    pub budget_rows: Vec<EntropyBudget>,
    /// Fine-accumulated `integral_0^t RHS` at each output time.
    pub cumulative_rhs: Vec<f64>,
    pub slack_series: Vec<f64>,
    pub relax_samples: Vec<RelaxSample>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Result of one sweep, ordered by descending epsilon.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub model: Model,
    pub records: Vec<RunRecord>,
    pub complete: bool,
    /// `(slope, intercept, max |log residual|)` of `log sup_psi` vs
    /// `log epsilon`; only fitted when every run completed and at least
    /// three distinct epsilons are present.
    pub fit: Option<(f64, f64, f64)>,
    /// Normalized constants `sup_psi / (psi0 + eps^4 [+ nu eps])` per run.
    pub c_values: Vec<f64>,
    pub c_emp: Option<f64>,
    pub c_emp_min: Option<f64>,
}

impl SweepResult {
    pub fn c_emp_ratio(&self) -> Option<f64> {
        match (self.c_emp, self.c_emp_min) {
            (Some(max), Some(min)) if min > 0.0 => Some(max / min),
            _ => None,
        }
    }
}

/// Least squares on `(log eps, log value)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Usage(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(e, v)| !(e > 0.0) || !(v > 0.0)) {
        return Err(Error::Domain(
            "rate fit requires strictly positive abscissae and values".into(),
        ));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(e, v) in points {
        let x = e.ln();
        let y = v.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() <= 1e-300 {
        return Err(Error::Domain("rate fit abscissae are degenerate".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = points
        .iter()
        .map(|&(e, v)| (v.ln() - slope * e.ln() - intercept).abs())
        .fold(0.0f64, f64::max);
    Ok((slope, intercept, residual))
}

fn initial_density(config: &ExperimentConfig) -> Result<Field> {
    let grid = TorusGrid::new(config.grid_n, config.grid_length)?;
    let (mean, amp, k) = (config.rho_mean, config.amplitude, config.wavenumber as f64);
    let base = 2.0 * std::f64::consts::PI / config.grid_length;
    Ok(Field::from_fn(grid, move |x| {
        mean + amp * (k * base * x).cos()
    }))
}

/// One relaxation run driven in lockstep with the gradient-flow tracker.
///
/// Steps per output interval are rounded up to a multiple of the budget
/// stride so that tracker steps, budget checkpoints and output times all
/// coincide; the right-hand side of the entropy inequality is accumulated by
/// trapezoid over the checkpoints, which resolves both the slow dynamics and
/// the initial friction layer.
pub fn run_paired(rho0: &Field, params: &FluidParams, config: &ExperimentConfig) -> RunRecord {
    let started = Instant::now();
    let mut rec = RunRecord {
        epsilon: params.epsilon(),
        nu: params.nu(),
        psi0: 0.0,
        sup_psi: 0.0,
        slack_min: f64::INFINITY,
        tol_slack: 0.0,
        m_norm_final: 0.0,
        m_norm_sup: 0.0,
        m_minus_darcy_final: 0.0,
        sup_weighted_du: 0.0,
        mass_drift_rel: 0.0,
        wall_time_s: 0.0,
        error: None,
        times: Vec::new(),
        psi_series: Vec::new(),
        budget_rows: Vec::new(),
        cumulative_rhs: Vec::new(),
        slack_series: Vec::new(),
        relax_samples: Vec::new(),
    };

    let outcome = (|| -> Result<()> {
        let floor = config.rho_floor_frac * rho0.integrate() / rho0.grid().length();
        let state0 = prepare_initial(rho0, params, config.prepared);
        let mut stepper = Stepper::new(&state0, *params, floor);
        let mut tracker =
            GradientFlowTracker::new(rho0.clone(), *params, config.delta_floor, 0.25);

        let solver_cfg = SolverConfig {
            params: *params,
            t_final: config.t_final,
            n_outputs: config.n_outputs,
            cfl_advective: config.cfl_advective,
            cfl_dispersive: config.cfl_dispersive,
            cfl_viscous: config.cfl_viscous,
            rho_floor: Some(floor),
            dt_override: config.dt_override,
            energy_monitor: false,
        };

        let eqf0 = EquilibriumFields::build(&tracker.state(), params, true)?;
        let psi0 = psi_with(&state0, &eqf0, params)?;
        let row0 = budget_with(&state0, &eqf0, params)?;
        rec.psi0 = psi0;
        rec.sup_psi = psi0;
        rec.tol_slack = config.tol_slack_factor * psi0.max(params.epsilon().powi(4));
        rec.times.push(0.0);
        rec.psi_series.push(psi0);
        rec.budget_rows.push(row0);
        rec.cumulative_rhs.push(0.0);
        rec.slack_series.push(0.0);
        rec.slack_min = 0.0;
        rec.relax_samples
            .push(relax_sample(&stepper.state(), params));
        rec.sup_weighted_du = weighted_velocity_diff(&state0, &eqf0, params)?;
        rec.m_norm_sup = state0.momentum.norm_l2();

        let delta = config.t_final / config.n_outputs as f64;
        let b_stride = config.budget_stride;
        let t_stride = config.tracker_stride;
        // Two trapezoid accumulators over the checkpoint series (spacing
        // Dc and 2 Dc), Romberg-combined at readout: the h^2 term of the
        // Euler-Maclaurin expansion, boundary contributions included,
        // cancels exactly, leaving O(h^4) quadrature error on the slack.
        let mut cum_fine = 0.0f64;
        let mut cum_coarse = 0.0f64;
        let mut prev_t = 0.0f64;
        let mut prev_rhs = row0.rhs_total();
        let mut prev2_t = 0.0f64;
        let mut prev2_rhs = row0.rhs_total();
        let mut checkpoint_index = 0usize;

        for i in 1..=config.n_outputs {
            let t_start = delta * (i - 1) as f64;
            let t_end = delta * i as f64;
            let dt_target = match config.dt_override {
                Some(dt) => dt,
                None => cfl_dt(&stepper.state(), params, &solver_cfg)?,
            };
            let raw = (delta / dt_target).ceil().max(1.0) as usize;
            // an even number of checkpoints per interval keeps the coarse
            // accumulator aligned with output times
            let chunk = 2 * b_stride;
            let steps = raw.div_ceil(chunk) * chunk;
            let h = delta / steps as f64;

            for k in 1..=steps {
                stepper.step(h)?;
                if k % t_stride == 0 {
                    tracker.step(h * t_stride as f64)?;
                }
                if k % b_stride == 0 {
                    // re-pin both clocks to the exact checkpoint time
                    let t_check = if k == steps {
                        t_end
                    } else {
                        t_start + h * k as f64
                    };
                    stepper.t = t_check;
                    tracker.set_time(t_check);
                    // validate the error-term derivative once per interval
                    let validate = k == b_stride;
                    let eqf = EquilibriumFields::build(&tracker.state(), params, validate)?;
                    let state = stepper.state();
                    let row = budget_with(&state, &eqf, params)?;
                    checkpoint_index += 1;
                    let rhs = row.rhs_total();
                    cum_fine += 0.5 * (t_check - prev_t) * (prev_rhs + rhs);
                    prev_t = t_check;
                    prev_rhs = rhs;
                    if checkpoint_index % 2 == 0 {
                        cum_coarse += 0.5 * (t_check - prev2_t) * (prev2_rhs + rhs);
                        prev2_t = t_check;
                        prev2_rhs = rhs;
                    }
                    let wdu = weighted_velocity_diff(&state, &eqf, params)?;
                    rec.sup_weighted_du = rec.sup_weighted_du.max(wdu);
                    if k == steps {
                        let cum = (4.0 * cum_fine - cum_coarse) / 3.0;
                        let psi_t = psi_with(&state, &eqf, params)?;
                        rec.sup_psi = rec.sup_psi.max(psi_t);
                        rec.times.push(t_end);
                        rec.psi_series.push(psi_t);
                        rec.budget_rows.push(row);
                        rec.cumulative_rhs.push(cum);
                        let slack = rec.psi0 + cum - psi_t;
                        rec.slack_min = rec.slack_min.min(slack);
                        rec.slack_series.push(slack);
                        rec.relax_samples.push(relax_sample(&state, params));
                        rec.m_norm_sup = rec.m_norm_sup.max(state.momentum.norm_l2());
                        if i == config.n_outputs {
                            rec.m_norm_final = state.momentum.norm_l2();
                            rec.m_minus_darcy_final = state
                                .momentum
                                .zip_map(&eqf.m_bar, |a, b| a - b)
                                .norm_l2();
                        }
                    }
                }
            }
        }

        let mass0 = rec.relax_samples[0].mass;
        rec.mass_drift_rel = rec
            .relax_samples
            .iter()
            .map(|s| (s.mass - mass0).abs())
            .fold(0.0f64, f64::max)
            / mass0.abs().max(1e-300);
        Ok(())
    })();

    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec.wall_time_s = started.elapsed().as_secs_f64();
    rec
}

fn relax_sample(state: &crate::relax::RelaxState, params: &FluidParams) -> RelaxSample {
    RelaxSample {
        t: state.t,
        mass: state.rho.integrate(),
        energy: relax::total_energy(state, params),
        friction_dissipation: relax::friction_dissipation(state, params),
        viscous_dissipation: relax::viscous_dissipation(state, params),
        constraint_drift: relax::constraint_drift(state, params),
    }
}

/// Run the whole sweep: one paired run per `(epsilon, nu)` entry, dispatched
/// to a worker pool, results ordered by descending epsilon.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let rho0 = initial_density(config)?;
    let schedule = config.schedule()?;

    let workers = if config.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        config.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(schedule.len().max(1)))
        .build()
        .map_err(|e| Error::Config(format!("failed to build worker pool: {e}")))?;

    let params_list: Vec<FluidParams> = schedule
        .iter()
        .map(|&(eps, nu)| config.params(eps, nu))
        .collect::<Result<_>>()?;

    let mut records: Vec<RunRecord> = pool.install(|| {
        params_list
            .par_iter()
            .map(|p| run_paired(&rho0, p, config))
            .collect()
    });

    // records sorted by descending epsilon, stable for duplicates
    records.sort_by(|a, b| b.epsilon.partial_cmp(&a.epsilon).unwrap());

    let complete = records.iter().all(RunRecord::ok);
    let mut fit = None;
    if complete && records.len() >= 3 {
        let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.epsilon, r.sup_psi)).collect();
        if pts.iter().all(|&(_, v)| v > 0.0) {
            fit = fit_rate(&pts).ok();
        }
    }

    let c_values: Vec<f64> = records
        .iter()
        .map(|r| {
            let eps4 = r.epsilon.powi(4);
            let norm = match config.model {
                Model::Ek => r.psi0 + eps4,
                Model::Nsk => r.psi0 + eps4 + r.nu * r.epsilon,
            };
            r.sup_psi / norm
        })
        .collect();
    let (c_emp, c_emp_min) = if complete && !c_values.is_empty() {
        (
            Some(c_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
            Some(c_values.iter().cloned().fold(f64::INFINITY, f64::min)),
        )
    } else {
        (None, None)
    };

    Ok(SweepResult {
        model: config.model,
        records,
        complete,
        fit,
        c_values,
        c_emp,
        c_emp_min,
    })
}

/// First-Hilbert-order report measured on a completed sweep.
#[derive(Clone, Debug)]
pub struct HilbertReport {
    /// Slope of `|| m(T) ||_2` vs epsilon; Darcy scaling predicts 1.
    pub m_slope: Option<f64>,
    /// Slope of `sup_t || sqrt(rho)(u - u_bar) ||_2`; the stability bound
    /// makes it at least ~2.
    pub weighted_du_slope: Option<f64>,
    /// Slope of `|| m(T) - m_bar(T) ||_2` (reported; expected o(eps)).
    pub m_minus_darcy_slope: Option<f64>,
}

pub fn hilbert_orders(result: &SweepResult) -> HilbertReport {
    let fit_of = |value: fn(&RunRecord) -> f64| -> Option<f64> {
        if !result.complete || result.records.len() < 3 {
            return None;
        }
        let pts: Vec<(f64, f64)> = result
            .records
            .iter()
            .map(|r| (r.epsilon, value(r)))
            .collect();
        if pts.iter().any(|&(_, v)| !(v > 0.0)) {
            return None;
        }
        fit_rate(&pts).ok().map(|(s, _, _)| s)
    };
    HilbertReport {
        m_slope: fit_of(|r| r.m_norm_sup),
        weighted_du_slope: fit_of(|r| r.sup_weighted_du),
        m_minus_darcy_slope: fit_of(|r| r.m_minus_darcy_final),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_rate_examples() {
        // exact quartic power law
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&e: &f64| (e, e.powi(4)))
            .collect();
        let (slope, _, res) = fit_rate(&pts).unwrap();
        assert!((slope - 4.0).abs() <= 1e-12);
        assert!(res <= 1e-12);

        // pure linear law with a constant
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&e: &f64| (e, 3.7 * e))
            .collect();
        let (slope, intercept, _) = fit_rate(&pts).unwrap();
        assert!((slope - 1.0).abs() <= 1e-12);
        assert!((intercept - 3.7f64.ln()).abs() <= 1e-12);

        // mixed power law: slope between 1 and 4, decreasing toward 1
        let mixed = |e: f64| e.powi(4) + 0.01 * e;
        let hi: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&e| (e, mixed(e))).collect();
        let lo: Vec<(f64, f64)> = [0.05, 0.025, 0.0125]
            .iter()
            .map(|&e| (e, mixed(e)))
            .collect();
        let (s_hi, _, _) = fit_rate(&hi).unwrap();
        let (s_lo, _, _) = fit_rate(&lo).unwrap();
        assert!(s_hi > 1.0 && s_hi < 4.0);
        assert!(s_lo > 1.0 && s_lo < 4.0);
        assert!(s_lo < s_hi);

        // error paths
        assert!(fit_rate(&[(0.1, 1.0), (0.2, 2.0)]).is_err());
        assert!(fit_rate(&[(0.1, 1.0), (0.2, -2.0), (0.3, 1.0)]).is_err());
    }

    #[test]
    fn duplicated_epsilon_gives_identical_records() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("grid.n", "64").unwrap();
        cfg.set("sweep.epsilon", "0.3, 0.3").unwrap();
        cfg.set("time.t_final", "0.01").unwrap();
        cfg.set("time.outputs", "2").unwrap();
        let result = run_sweep(&cfg).unwrap();
        assert!(result.complete);
        assert_eq!(result.records.len(), 2);
        let (a, b) = (&result.records[0], &result.records[1]);
        assert_eq!(a.sup_psi, b.sup_psi);
        assert_eq!(a.psi_series, b.psi_series);
        assert_eq!(a.cumulative_rhs, b.cumulative_rhs);
        assert_eq!(a.slack_min, b.slack_min);
        assert!(result.fit.is_none()); // fewer than 3 points
    }

    #[test]
    fn short_sweep_is_well_behaved() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("grid.n", "64").unwrap();
        cfg.set("sweep.epsilon", "0.4, 0.3, 0.2").unwrap();
        cfg.set("time.t_final", "0.02").unwrap();
        cfg.set("time.outputs", "4").unwrap();
        let result = run_sweep(&cfg).unwrap();
        assert!(result.complete);
        // records descending in epsilon
        assert!(result.records.windows(2).all(|w| w[0].epsilon >= w[1].epsilon));
        for r in &result.records {
            assert!(r.psi0.abs() <= 1e-18, "well-prepared Psi(0) = {:.3e}", r.psi0);
            assert!(r.sup_psi >= 0.0);
            assert!(r.mass_drift_rel <= 1e-12);
            // n = 64 undersamples the fastest dispersive ripple in the
            // budget integrand, so this smoke test only pins the slack
            // relative to the signal; the acceptance suite enforces the
            // strict tolerance at the reference resolution
            assert!(
                r.slack_min.abs() <= 1e-5 * r.sup_psi.max(1e-6),
                "eps = {}: slack {} out of proportion to sup_psi {}",
                r.epsilon,
                r.slack_min,
                r.sup_psi
            );
        }
        // sup_psi decreases with epsilon
        assert!(result.records.windows(2).all(|w| w[0].sup_psi > w[1].sup_psi));
    }
}
