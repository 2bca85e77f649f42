use korteweg::config::ExperimentConfig;
use korteweg::sweep::run_sweep;

fn main() {
    for cfl in ["0.8", "0.45", "0.3"] {
        let mut cfg = ExperimentConfig::default();
        cfg.set("sweep.epsilon", "0.05").unwrap();
        cfg.set("cfl.dispersive", cfl).unwrap();
        let result = run_sweep(&cfg).unwrap();
        let r = &result.records[0];
        println!(
            "cfl={cfl}: slack_min={:+.3e} tol={:.2e} margin={:.2}x [{:.0}s]",
            r.slack_min, r.tol_slack, r.tol_slack / r.slack_min.abs().max(1e-300), r.wall_time_s
        );
    }
}
