use korteweg::relax::*;
use korteweg::*;
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let p = FluidParams::new(2.0, 0.0, 0.2, 0.0).unwrap();
    let g = TorusGrid::new(256, 2.0 * PI).unwrap();
    let rho = Field::from_fn(g, |x| 2.0 + 0.5 * x.cos());
    let initial = prepare_initial(&rho, &p, Preparation::WellPrepared);
    let cfg = SolverConfig::new(p, 1.0, 1);
    let dt = cfl_dt(&initial, &p, &cfg).unwrap();
    println!("cfl dt at eps=0.2, N=256: {dt:.3e} -> steps for T=0.3: {:.0}", 0.3 / dt);

    let mut stepper_steps = 20_000usize;
    let t0 = Instant::now();
    {
        // use the public step once to warm, then time a run via `run` with dt_override
        let mut c = SolverConfig::new(p, dt * stepper_steps as f64, 1);
        c.dt_override = Some(dt);
        let _ = run(&initial, &c).unwrap();
    }
    let el = t0.elapsed().as_secs_f64();
    println!("{} steps in {:.2}s -> {:.1} us/step (nu=0)", stepper_steps, el, el / stepper_steps as f64 * 1e6);

    let pv = p.with_nu(0.1).unwrap();
    let initial_v = prepare_initial(&rho, &pv, Preparation::WellPrepared);
    stepper_steps = 20_000;
    let t0 = Instant::now();
    {
        let mut c = SolverConfig::new(pv, dt * stepper_steps as f64, 1);
        c.dt_override = Some(dt);
        let _ = run(&initial_v, &c).unwrap();
    }
    let el = t0.elapsed().as_secs_f64();
    println!("{} steps in {:.2}s -> {:.1} us/step (nu=0.1)", stepper_steps, el, el / stepper_steps as f64 * 1e6);
}
