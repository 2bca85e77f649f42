//! Command-line front end.
//!
//! ```text
//! korteweg <simulate|equilibrium|sweep|check> [config-file] [--key value]...
//! ```
//!
//! Flags mirror the config-file keys one to one (`--sweep.epsilon 0.4,0.2`);
//! flags override file values. Exit codes: 0 success, 2 configuration
//! error, 3 numerical abort, 4 property-suite failure.

use std::path::PathBuf;
use std::process::ExitCode;

use korteweg::config::ExperimentConfig;
use korteweg::entropy::{budget, mu_identity_residual, psi};
use korteweg::equilibrium::{
    gf_rhs, gf_rhs_bohm, run_equilibrium, EquilibriumConfig, EquilibriumState,
};
use korteweg::error::Error;
use korteweg::grid::Field;
use korteweg::relax::{bohm_residual, prepare_initial, run, SolverConfig};
use korteweg::report;
use korteweg::sweep::{fit_rate, hilbert_orders, run_sweep};
use korteweg::{FluidParams, Result, TorusGrid};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn usage() -> String {
    "usage: korteweg <simulate|equilibrium|sweep|check> [config-file] [--key value]...\n\
     keys mirror the config file (model.type, fluid.gamma, fluid.s, fluid.nu,\n\
     sweep.epsilon, grid.n, grid.length, ic.rho_mean, ic.amplitude,\n\
     ic.wavenumber, ic.prepared, time.t_final, time.outputs, time.dt_override,\n\
     time.eq_dt, time.snapshots, tol.slack, out.dir, cfl.advective,\n\
     cfl.dispersive, cfl.viscous, solver.rho_floor_frac, solver.delta_floor,\n\
     solver.budget_stride, solver.tracker_stride, run.workers, lame.*)"
        .to_string()
}

fn parse_cli(args: &[String]) -> Result<(String, ExperimentConfig)> {
    if args.is_empty() {
        return Err(Error::Config(usage()));
    }
    let command = args[0].clone();
    let mut config_path: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if let Some(flag) = a.strip_prefix("--") {
            if let Some((k, v)) = flag.split_once('=') {
                overrides.push((k.to_string(), v.to_string()));
            } else {
                i += 1;
                let Some(v) = args.get(i) else {
                    return Err(Error::Config(format!("flag --{flag} needs a value")));
                };
                overrides.push((flag.to_string(), v.clone()));
            }
        } else if config_path.is_none() {
            config_path = Some(PathBuf::from(a));
        } else {
            return Err(Error::Config(format!("unexpected argument '{a}'")));
        }
        i += 1;
    }
    let mut cfg = match config_path {
        Some(p) => ExperimentConfig::load(&p)?,
        None => ExperimentConfig::default(),
    };
    for (k, v) in &overrides {
        cfg.set(k, v)?;
    }
    Ok((command, cfg))
}

fn dispatch(args: &[String]) -> Result<ExitCode> {
    let (command, cfg) = parse_cli(args)?;
    match command.as_str() {
        "simulate" => simulate(&cfg),
        "equilibrium" => equilibrium(&cfg),
        "sweep" => sweep(&cfg),
        "check" => Ok(check(&cfg)),
        other => Err(Error::Config(format!(
            "unknown subcommand '{other}'\n{}",
            usage()
        ))),
    }
}

fn initial_density(cfg: &ExperimentConfig) -> Result<Field> {
    let grid = TorusGrid::new(cfg.grid_n, cfg.grid_length)?;
    let (mean, amp, k) = (cfg.rho_mean, cfg.amplitude, cfg.wavenumber as f64);
    let base = 2.0 * std::f64::consts::PI / cfg.grid_length;
    Ok(Field::from_fn(grid, move |x| {
        mean + amp * (k * base * x).cos()
    }))
}

/// One relaxation run at the first scheduled `(epsilon, nu)`.
fn simulate(cfg: &ExperimentConfig) -> Result<ExitCode> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let Some(&(eps, nu)) = schedule.first() else {
        return Err(Error::Config("sweep.epsilon must have at least one entry".into()));
    };
    let params = cfg.params(eps, nu)?;
    let rho0 = initial_density(cfg)?;
    let initial = prepare_initial(&rho0, &params, cfg.prepared);
    let solver_cfg = SolverConfig {
        params,
        t_final: cfg.t_final,
        n_outputs: cfg.n_outputs,
        cfl_advective: cfg.cfl_advective,
        cfl_dispersive: cfg.cfl_dispersive,
        cfl_viscous: cfg.cfl_viscous,
        rho_floor: None,
        dt_override: cfg.dt_override,
        energy_monitor: true,
    };
    let traj = run(&initial, &solver_cfg)?;
    let csv = cfg.out_dir.join("trajectory.csv");
    report::write_relax_csv(&csv, &traj.samples)?;
    println!("wrote {}", csv.display());
    for (si, &t_req) in cfg.snapshot_times.iter().enumerate() {
        // snapshots land on the nearest output time
        let idx = traj
            .states
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.t - t_req).abs();
                let db = (b.1.t - t_req).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let st = &traj.states[idx];
        let path = cfg.out_dir.join(format!("snapshot_{si}.dat"));
        report::write_snapshot(
            &path,
            st.t,
            &[("rho", &st.rho), ("m", &st.momentum), ("J", &st.drift_momentum)],
        )?;
        println!("wrote {} (t = {})", path.display(), st.t);
    }
    println!(
        "simulate: eps = {eps}, nu = {nu}, mass drift = {:.3e}, energy slack rate = {:.3e}",
        traj.mass_drift_rel,
        traj.max_energy_slack_rate.unwrap_or(f64::NAN)
    );
    Ok(ExitCode::SUCCESS)
}

/// One gradient-flow run.
fn equilibrium(cfg: &ExperimentConfig) -> Result<ExitCode> {
    cfg.validate()?;
    let eps = cfg.epsilon_list.first().copied().unwrap_or(0.1);
    let params = cfg.params(eps, 0.0)?;
    let rho0 = initial_density(cfg)?;
    let mut eq_cfg = EquilibriumConfig::new(params, cfg.t_final, cfg.n_outputs);
    eq_cfg.dt = cfg.eq_dt;
    eq_cfg.delta_floor = cfg.delta_floor;
    let traj = run_equilibrium(&rho0, &eq_cfg)?;
    let csv = cfg.out_dir.join("equilibrium.csv");
    report::write_equilibrium_csv(&csv, &traj.samples)?;
    println!("wrote {}", csv.display());
    for (si, &t_req) in cfg.snapshot_times.iter().enumerate() {
        let idx = traj
            .states
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.t - t_req).abs();
                let db = (b.1.t - t_req).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let st = &traj.states[idx];
        let path = cfg.out_dir.join(format!("equilibrium_snapshot_{si}.dat"));
        report::write_snapshot(&path, st.t, &[("rho_bar", &st.rho_bar)])?;
        println!("wrote {} (t = {})", path.display(), st.t);
    }
    let first = traj.samples.first().unwrap();
    let last = traj.samples.last().unwrap();
    println!(
        "equilibrium: mass drift = {:.3e}, free energy {:.6e} -> {:.6e}",
        (last.mass - first.mass).abs() / first.mass.abs(),
        first.free_energy,
        last.free_energy
    );
    Ok(ExitCode::SUCCESS)
}

/// The rate study.
fn sweep(cfg: &ExperimentConfig) -> Result<ExitCode> {
    cfg.validate()?;
    if cfg.epsilon_list.is_empty() {
        return Err(Error::Config("sweep.epsilon must not be empty".into()));
    }
    let result = run_sweep(cfg)?;
    let files = report::emit_reports(&result, cfg)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    for (r, c) in result.records.iter().zip(&result.c_values) {
        println!(
            "eps = {:<6} nu = {:<6} sup_psi = {:.6e}  c = {:.4e}  slack_min = {:+.3e}  ({})",
            r.epsilon,
            r.nu,
            r.sup_psi,
            c,
            r.slack_min,
            r.error.as_deref().unwrap_or("ok"),
        );
    }
    if let Some((slope, _, _)) = result.fit {
        println!("fitted slope of sup_psi vs eps: {slope:.4}");
    }
    if let Some(ratio) = result.c_emp_ratio() {
        println!("c_emp spread across the sweep: factor {ratio:.3}");
    }
    let h = hilbert_orders(&result);
    if let (Some(a), Some(b)) = (h.m_slope, h.weighted_du_slope) {
        println!("hilbert orders: ||m(T)|| slope {a:.3}, sup ||sqrt(rho)(u-u_bar)|| slope {b:.3}");
    }
    if result.complete {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("sweep incomplete: at least one run aborted");
        Ok(ExitCode::from(3))
    }
}

struct Checker {
    failures: usize,
    total: usize,
}

impl Checker {
    fn assert(&mut self, name: &str, pass: bool, detail: String) {
        self.total += 1;
        if pass {
            println!("PASS  {name}: {detail}");
        } else {
            self.failures += 1;
            println!("FAIL  {name}: {detail}");
        }
    }
}

/// Fast property suite over the configured constitutive family plus the
/// reference exponent pairs; exit code 4 on any failure.
fn check(cfg: &ExperimentConfig) -> ExitCode {
    let mut c = Checker {
        failures: 0,
        total: 0,
    };
    if let Err(e) = check_inner(cfg, &mut c) {
        eprintln!("error while running checks: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    println!("check: {} passed, {} failed", c.total - c.failures, c.failures);
    if c.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}

fn check_inner(cfg: &ExperimentConfig, c: &mut Checker) -> Result<()> {
    // constitutive identities on 100 log-spaced densities
    for &(gamma, s) in &[(2.0, 0.0), (2.0, -1.0), (3.0, 1.0), (1.4, -1.0)] {
        let p = FluidParams::new(gamma, s, 0.1, 0.0)?;
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let t = i as f64 / 99.0;
            let rho: f64 = 1e-3 * 1e6f64.powf(t);
            let f = p.capillarity_family(rho)?;
            let hpp = p.h_double_prime(rho)?;
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
            worst = worst
                .max(rel(hpp, p.dpressure(rho)? / rho))
                .max(rel(f.mu_prime * f.mu_prime, rho * f.k))
                .max(rel(f.lambda, (s + 1.0) * f.mu));
            // well-separated pair: at coincident arguments the Bregman
            // value underflows its constituents and "relative" loses
            // meaning
            let rho_bar = 1.7 * rho;
            let h_rel = p.h_rel(rho, rho_bar)?;
            let p_rel = p.p_rel(rho, rho_bar)?;
            worst = worst.max((p_rel - (gamma - 1.0) * h_rel).abs() / p_rel.abs().max(1e-300));
        }
        c.assert(
            "constitutive identities",
            worst <= 1e-12,
            format!("gamma={gamma} s={s}: worst relative error {worst:.3e}"),
        );
    }

    // Bohm identity residual at the reference resolution
    for &s in &[-1.0, 0.0, 1.0] {
        let gamma = if s > 0.0 { 3.0 } else { 2.0 };
        let p = FluidParams::new(gamma, s, 0.1, 0.0)?;
        let grid = TorusGrid::new(256, cfg.grid_length)?;
        let rho = Field::from_fn(grid, |x| 2.0 + x.cos());
        let res = bohm_residual(&rho, &p).max_abs();
        c.assert(
            "bohm identity",
            res <= 1e-8,
            format!("s={s}: max residual {res:.3e}"),
        );
    }

    // dual-form gradient-flow agreement (sign audit)
    {
        let p = FluidParams::new(2.0, -1.0, 0.1, 0.0)?;
        let rho = Field::from_fn(TorusGrid::new(256, cfg.grid_length)?, |x| 2.0 + 0.5 * x.cos());
        let err = gf_rhs(&rho, &p)
            .zip_map(&gf_rhs_bohm(&rho, &p), |a, b| a - b)
            .max_abs();
        c.assert("dual-form agreement", err <= 1e-8, format!("s=-1 N=256: {err:.3e}"));
        let p0 = FluidParams::new(2.0, 0.0, 0.1, 0.0)?;
        let rho128 = Field::from_fn(TorusGrid::new(128, cfg.grid_length)?, |x| 2.0 + 0.5 * x.cos());
        let err128 = gf_rhs(&rho128, &p0)
            .zip_map(&gf_rhs_bohm(&rho128, &p0), |a, b| a - b)
            .max_abs();
        c.assert("dual-form agreement", err128 <= 1e-8, format!("s=0 N=128: {err128:.3e}"));
    }

    // mu'' identity residual
    for &s in &[-1.0, 0.0, 1.0] {
        let gamma = if s > 0.0 { 3.0 } else { 2.0 };
        let p = FluidParams::new(gamma, s, 0.1, 0.0)?;
        let grid = TorusGrid::new(256, cfg.grid_length)?;
        let rho = Field::from_fn(grid.clone(), |x| 2.0 + x.cos());
        let flat = Field::constant(grid, 2.0);
        let res = mu_identity_residual(&rho, &flat, &p);
        c.assert(
            "mu'' identity",
            res <= 1e-10,
            format!("s={s}: max residual {res:.3e}"),
        );
    }

    // weighted mu' bound: train on an inclusive grid, test on a disjoint one
    {
        let p = FluidParams::new(2.0, 0.0, 0.1, 0.0)?;
        let c_emp =
            korteweg::constitutive::lemma8_empirical_constant(&p, (0.1, 10.0), (0.5, 4.0), 100, 100, 0.0)?;
        let mut holds = true;
        let mut margin: f64 = f64::INFINITY;
        for i in 0..100 {
            let t = (i as f64 + 0.5) / 100.0;
            let rho = 0.1 * 100.0f64.powf(t);
            for jj in 0..100 {
                let u = (jj as f64 + 0.5) / 100.0;
                let rho_bar = 0.5 * 8.0f64.powf(u);
                let ratio = p.lemma8_ratio(rho, rho_bar)?;
                margin = margin.min(c_emp - ratio);
                if ratio > c_emp {
                    holds = false;
                }
            }
        }
        c.assert(
            "weighted mu' bound",
            holds,
            format!("C_emp = {c_emp:.4e}, worst test margin {margin:.3e}"),
        );
    }

    // rate fitting on exact power laws
    {
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&e: &f64| (e, e.powi(4))).collect();
        let (slope, _, res) = fit_rate(&pts)?;
        c.assert(
            "rate fit",
            (slope - 4.0).abs() <= 1e-12 && res <= 1e-12,
            format!("slope {slope}, residual {res:.3e}"),
        );
    }

    // short dynamical run: mass, energy, inequality slack
    {
        let p = cfg.params(0.2, if cfg.model == korteweg::Model::Nsk { 0.1 } else { 0.0 })?;
        let grid = TorusGrid::new(256, cfg.grid_length)?;
        let rho0 = Field::from_fn(grid, |x| 2.0 + 0.5 * x.cos());
        let initial = prepare_initial(&rho0, &p, korteweg::relax::Preparation::WellPrepared);
        let mut run_cfg = SolverConfig::new(p, 0.01, 2);
        run_cfg.energy_monitor = true;
        let traj = run(&initial, &run_cfg)?;
        c.assert(
            "mass conservation",
            traj.mass_drift_rel <= 1e-12,
            format!("relative drift {:.3e}", traj.mass_drift_rel),
        );
        let slack_rate = traj.max_energy_slack_rate.unwrap();
        c.assert(
            "discrete energy inequality",
            slack_rate <= 1e-8,
            format!("max slack per unit time {slack_rate:+.3e}"),
        );
        // one instantaneous budget + psi evaluation against the matching
        // equilibrium state
        let eq = EquilibriumState::new(0.0, rho0.clone());
        let psi0 = psi(&initial, &eq, &p)?;
        let b = budget(&initial, &eq, &p)?;
        c.assert(
            "well-prepared distance",
            psi0.abs() <= 1e-20 && b.psi.abs() <= 1e-20,
            format!("Psi(0) = {psi0:.3e}"),
        );
    }

    Ok(())
}
