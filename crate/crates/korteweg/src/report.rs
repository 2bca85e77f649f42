//! File emission: trajectory and budget CSVs, field snapshots, the sweep
//! summary, and the plot-ready rate data. All numeric output is printed
//! with a fixed 17-significant-digit format so identical runs produce
//! byte-identical files; the only non-reproducible quantities are the
//! `wall_time_s` lines in the summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, Model};
use crate::entropy::EntropyBudget;
use crate::equilibrium::EquilibriumSample;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::relax::RelaxSample;
use crate::sweep::{hilbert_orders, RunRecord, SweepResult};

pub fn fmt_float(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Relaxation trajectory CSV:
/// `t,mass,energy,friction_dissipation,viscous_dissipation,constraint_drift`.
pub fn write_relax_csv(path: &Path, samples: &[RelaxSample]) -> Result<()> {
    let mut body =
        String::from("t,mass,energy,friction_dissipation,viscous_dissipation,constraint_drift\n");
    for s in samples {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            fmt_float(s.t),
            fmt_float(s.mass),
            fmt_float(s.energy),
            fmt_float(s.friction_dissipation),
            fmt_float(s.viscous_dissipation),
            fmt_float(s.constraint_drift)
        );
    }
    write_file(path, &body)
}

/// Equilibrium trajectory CSV: `t,mass,free_energy`.
pub fn write_equilibrium_csv(path: &Path, samples: &[EquilibriumSample]) -> Result<()> {
    let mut body = String::from("t,mass,free_energy\n");
    for s in samples {
        let _ = writeln!(
            body,
            "{},{},{}",
            fmt_float(s.t),
            fmt_float(s.mass),
            fmt_float(s.free_energy)
        );
    }
    write_file(path, &body)
}

/// Budget CSV with the documented fixed column set.
pub fn write_budget_csv(path: &Path, rows: &[EntropyBudget], slack: &[f64]) -> Result<()> {
    assert_eq!(rows.len(), slack.len());
    let mut body = String::from(EntropyBudget::CSV_HEADER);
    body.push('\n');
    for (b, s) in rows.iter().zip(slack) {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_float(b.t),
            fmt_float(b.psi),
            fmt_float(b.friction),
            fmt_float(b.conv_u),
            fmt_float(b.conv_v),
            fmt_float(b.pressure),
            fmt_float(b.err),
            fmt_float(b.mu2),
            fmt_float(b.mu1),
            fmt_float(b.visc_q1),
            fmt_float(b.visc_q2),
            fmt_float(b.visc_x1),
            fmt_float(b.visc_x2),
            fmt_float(*s)
        );
    }
    write_file(path, &body)
}

/// Text snapshot: a header carrying `N`, `L`, `t` and the field names, then
/// one value per line per field, fields concatenated in header order.
pub fn write_snapshot(path: &Path, t: f64, fields: &[(&str, &Field)]) -> Result<()> {
    let mut body = String::new();
    let grid = fields[0].1.grid();
    let _ = writeln!(
        body,
        "# N={} L={} t={}",
        grid.n(),
        fmt_float(grid.length()),
        fmt_float(t)
    );
    let names: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
    let _ = writeln!(body, "# fields: {}", names.join(" "));
    for (_, f) in fields {
        for &v in f.values() {
            let _ = writeln!(body, "{}", fmt_float(v));
        }
    }
    write_file(path, &body)
}

fn summary_body(result: &SweepResult, config: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "status = {}",
        if result.complete { "complete" } else { "incomplete" }
    );
    let _ = writeln!(s, "model = {}", result.model.as_str());
    let _ = writeln!(s, "runs = {}", result.records.len());
    let _ = writeln!(s, "grid.n = {}", config.grid_n);
    let _ = writeln!(s, "time.t_final = {}", fmt_float(config.t_final));
    if let Some((slope, intercept, residual)) = result.fit {
        let _ = writeln!(s, "sweep.slope = {}", fmt_float(slope));
        let _ = writeln!(s, "sweep.intercept = {}", fmt_float(intercept));
        let _ = writeln!(s, "sweep.max_log_residual = {}", fmt_float(residual));
    }
    if let Some(c) = result.c_emp {
        let _ = writeln!(s, "sweep.c_emp = {}", fmt_float(c));
    }
    if let Some(c) = result.c_emp_min {
        let _ = writeln!(s, "sweep.c_emp_min = {}", fmt_float(c));
    }
    if let Some(r) = result.c_emp_ratio() {
        let _ = writeln!(s, "sweep.c_emp_ratio = {}", fmt_float(r));
    }
    let hilbert = hilbert_orders(result);
    if let Some(v) = hilbert.m_slope {
        let _ = writeln!(s, "hilbert.m_slope = {}", fmt_float(v));
    }
    if let Some(v) = hilbert.weighted_du_slope {
        let _ = writeln!(s, "hilbert.weighted_du_slope = {}", fmt_float(v));
    }
    if let Some(v) = hilbert.m_minus_darcy_slope {
        let _ = writeln!(s, "hilbert.m_minus_darcy_slope = {}", fmt_float(v));
    }
    for (i, r) in result.records.iter().enumerate() {
        let _ = writeln!(s, "run.{i}.epsilon = {}", fmt_float(r.epsilon));
        let _ = writeln!(s, "run.{i}.nu = {}", fmt_float(r.nu));
        let _ = writeln!(
            s,
            "run.{i}.status = {}",
            match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("aborted: {e}"),
            }
        );
        let _ = writeln!(s, "run.{i}.psi0 = {}", fmt_float(r.psi0));
        let _ = writeln!(s, "run.{i}.sup_psi = {}", fmt_float(r.sup_psi));
        let _ = writeln!(s, "run.{i}.slack_min = {}", fmt_float(r.slack_min));
        let _ = writeln!(s, "run.{i}.tol_slack = {}", fmt_float(r.tol_slack));
        let _ = writeln!(s, "run.{i}.m_norm_final = {}", fmt_float(r.m_norm_final));
        let _ = writeln!(s, "run.{i}.m_norm_sup = {}", fmt_float(r.m_norm_sup));
        let _ = writeln!(
            s,
            "run.{i}.m_minus_darcy_final = {}",
            fmt_float(r.m_minus_darcy_final)
        );
        let _ = writeln!(
            s,
            "run.{i}.sup_weighted_du = {}",
            fmt_float(r.sup_weighted_du)
        );
        let _ = writeln!(s, "run.{i}.mass_drift_rel = {}", fmt_float(r.mass_drift_rel));
        let _ = writeln!(s, "run.{i}.wall_time_s = {}", fmt_float(r.wall_time_s));
    }
    s
}

fn rate_body(result: &SweepResult) -> String {
    let expected = match result.model {
        Model::Ek => "4 (sup Psi <= C eps^4)",
        Model::Nsk => "between 1 and 4 (sup Psi <= C (eps^4 + nu eps))",
    };
    let mut s = format!("# log10(epsilon) log10(sup_psi), expected slope {expected}\n");
    for r in &result.records {
        if r.ok() && r.sup_psi > 0.0 {
            let _ = writeln!(
                s,
                "{} {}",
                fmt_float(r.epsilon.log10()),
                fmt_float(r.sup_psi.log10())
            );
        }
    }
    s
}

fn budget_file_name(i: usize, r: &RunRecord) -> String {
    format!("budget_run{}_eps{:.4}.csv", i, r.epsilon)
}

/// Write the machine-readable summary, one budget CSV per run, and the
/// plot-ready rate file. Returns the paths written.
pub fn emit_reports(result: &SweepResult, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &config.out_dir;
    let mut written = Vec::new();

    let summary = dir.join("summary.txt");
    write_file(&summary, &summary_body(result, config))?;
    written.push(summary);

    for (i, r) in result.records.iter().enumerate() {
        let path = dir.join(budget_file_name(i, r));
        write_budget_csv(&path, &r.budget_rows, &r.slack_series)?;
        written.push(path);
    }

    let rate = dir.join("rate.dat");
    write_file(&rate, &rate_body(result))?;
    written.push(rate);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::SweepResult;

    #[test]
    fn empty_sweep_summary() {
        let result = SweepResult {
            model: Model::Ek,
            records: Vec::new(),
            complete: false,
            fit: None,
            c_values: Vec::new(),
            c_emp: None,
            c_emp_min: None,
        };
        let cfg = ExperimentConfig::default();
        let body = summary_body(&result, &cfg);
        assert!(body.contains("status = incomplete"));
        assert!(body.contains("runs = 0"));
        assert!(!body.contains("sweep.slope"));
    }

    #[test]
    fn budget_csv_schema() {
        let header = EntropyBudget::CSV_HEADER;
        assert_eq!(header.split(',').count(), 14);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let rows = vec![EntropyBudget::default(); 3];
        write_budget_csv(&path, &rows, &[0.0, 0.0, 0.0]).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), header);
        for line in lines {
            assert_eq!(line.split(',').count(), 14, "schema mismatch: {line}");
        }
    }

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.0, 1.0, -3.5e-7, 0.1 + 0.2, f64::MIN_POSITIVE] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
