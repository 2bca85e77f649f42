//! Time integration of the scaled augmented Euler-Korteweg system and its
//! Navier-Stokes-Korteweg extension on the 1-D torus.
//!
//! State is `(rho, m, J)` with `m = rho u` and the drift momentum
//! `J = rho v`. The stiff friction `-m/eps^2` is linear and diagonal, so it
//! is split off and integrated exactly; the remaining fluxes go through an
//! explicit SSP-RK3 stage under a dispersive CFL bound. Velocities are
//! always derived from the conserved fields at the point of use.

use std::sync::Arc;

use crate::constitutive::FluidParams;
use crate::equilibrium::{capillary_stress_divergence, darcy_flux, drift_momentum, drift_velocity};
use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};

/// Augmented state at one time instant.
#[derive(Clone, Debug)]
pub struct RelaxState {
    pub t: f64,
    pub rho: Field,
    /// Momentum `rho u`.
    pub momentum: Field,
    /// Drift momentum `rho v`.
    pub drift_momentum: Field,
}

impl RelaxState {
    pub fn new(t: f64, rho: Field, momentum: Field, drift_momentum: Field) -> Self {
        Self {
            t,
            rho,
            momentum,
            drift_momentum,
        }
    }

    /// Pointwise velocity `u = m / rho`.
    pub fn velocity(&self) -> Field {
        self.momentum.zip_map(&self.rho, |m, r| m / r)
    }

    /// Pointwise drift velocity `v = J / rho`.
    pub fn drift_velocity(&self) -> Field {
        self.drift_momentum.zip_map(&self.rho, |j, r| j / r)
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.rho.grid()
    }
}

/// The two scalar capillary stresses, built from the same coefficient
/// `mu + lambda/2`: `S1` from the drift velocity, `S2` from the velocity.
#[derive(Clone, Debug)]
pub struct StressPair {
    pub s1: Field,
    pub s2: Field,
}

pub fn stress_pair(state: &RelaxState, params: &FluidParams) -> StressPair {
    let coef = state.rho.map(|r| params.stress_coef_raw(r));
    let u = state.velocity().dealias();
    let v = state.drift_velocity().dealias();
    let s1 = coef.zip_map(&v.deriv_dealiased(1), |c, d| c * d).dealias();
    let s2 = coef.zip_map(&u.deriv_dealiased(1), |c, d| c * d).dealias();
    StressPair { s1, s2 }
}

/// Whether the initial momentum sits on the Darcy manifold or at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preparation {
    /// `m = eps (-grad p + div S1)`, `J = d mu/dx`: the relative entropy
    /// against the matching equilibrium state starts at zero.
    WellPrepared,
    /// `m = 0`: exhibits the initial-layer contribution through Psi(0).
    IllPrepared,
}

/// Well- or ill-prepared relaxation data built from a smooth density.
pub fn prepare_initial(rho0: &Field, params: &FluidParams, prep: Preparation) -> RelaxState {
    let momentum = match prep {
        Preparation::WellPrepared => darcy_flux(rho0, params).map(|v| params.epsilon() * v),
        Preparation::IllPrepared => Field::constant(rho0.grid().clone(), 0.0),
    };
    let j = drift_momentum(rho0, params);
    RelaxState::new(0.0, rho0.clone(), momentum, j)
}

/// Residual of the Bohm identity: `div S1(rho)` built through the drift
/// velocity, minus the direct capillarity force
/// `rho d/dx ( k rho_xx + k'/2 rho_x^2 )`. Spectrally small for smooth
/// resolved densities.
pub fn bohm_residual(rho: &Field, params: &FluidParams) -> Field {
    let lhs = capillary_stress_divergence(rho, &drift_velocity(rho, params), params);
    let drho = rho.deriv_dealiased(1);
    let d2rho = rho.deriv_dealiased(2);
    let pot = rho.grid().clone();
    let mut vals = vec![0.0; rho.len()];
    for i in 0..rho.len() {
        let r = rho.values()[i];
        vals[i] = params.k_cap_raw(r) * d2rho.values()[i]
            + 0.5 * params.k_cap_prime_raw(r) * drho.values()[i] * drho.values()[i];
    }
    let dpot = Field::new(pot, vals).deriv_dealiased(1);
    lhs.zip_map(&rho.zip_map(&dpot, |r, g| r * g), |a, b| a - b)
}

/// Solver configuration for one relaxation run.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub params: FluidParams,
    pub t_final: f64,
    pub n_outputs: usize,
    pub cfl_advective: f64,
    pub cfl_dispersive: f64,
    pub cfl_viscous: f64,
    /// Density floor; `None` defaults to `1e-6 * mean(rho0)`.
    pub rho_floor: Option<f64>,
    /// Fixed step size instead of the CFL controller (still adjusted to
    /// land exactly on output times).
    pub dt_override: Option<f64>,
    /// Check the per-step discrete energy inequality (costs one extra
    /// derivative per step when viscosity is on).
    pub energy_monitor: bool,
}

impl SolverConfig {
    pub fn new(params: FluidParams, t_final: f64, n_outputs: usize) -> Self {
        Self {
            params,
            t_final,
            n_outputs,
            cfl_advective: 0.4,
            cfl_dispersive: 0.8,
            cfl_viscous: 0.2,
            rho_floor: None,
            dt_override: None,
            energy_monitor: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("cfl_advective", self.cfl_advective),
            ("cfl_dispersive", self.cfl_dispersive),
            ("cfl_viscous", self.cfl_viscous),
        ] {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {c}")));
            }
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if self.n_outputs == 0 {
            return Err(Error::Config("n_outputs must be >= 1".into()));
        }
        if let Some(dt) = self.dt_override {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("dt_override must be > 0, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Largest stable step for the explicit part:
/// advective `dx / max(|u| + sqrt(p'))`, dispersive
/// `eps dx^3 / max(rho k)`, and viscous `eps dx^2 / max(nu (2 mu_L +
/// lambda_L)/rho)`, each with its own CFL factor. Exact friction imposes no
/// restriction.
pub fn cfl_dt(state: &RelaxState, params: &FluidParams, config: &SolverConfig) -> Result<f64> {
    let grid = state.rho.grid();
    let dx = grid.dx();
    let eps = params.epsilon();

    let mut wave_max = 0.0f64;
    let mut cap_max = 0.0f64;
    let mut visc_max = 0.0f64;
    for i in 0..state.rho.len() {
        let r = state.rho.values()[i];
        let u = state.momentum.values()[i] / r;
        wave_max = wave_max.max(u.abs() + params.dpressure_raw(r).sqrt());
        cap_max = cap_max.max(r * params.k_cap_raw(r));
        if params.nu() > 0.0 {
            visc_max = visc_max.max(params.nu() * params.viscous_coef_raw(r) / r);
        }
    }
    let mut dt = f64::INFINITY;
    if wave_max > 0.0 {
        dt = dt.min(config.cfl_advective * dx / wave_max);
    }
    if cap_max > 0.0 {
        dt = dt.min(config.cfl_dispersive * eps * dx * dx * dx / cap_max);
    }
    if visc_max > 0.0 {
        dt = dt.min(config.cfl_viscous * eps * dx * dx / visc_max);
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("CFL controller produced dt = {dt}")));
    }
    Ok(dt)
}

/// Total mechanical energy `integral( m^2/2rho + J^2/2rho + h(rho) )`.
pub fn total_energy(state: &RelaxState, params: &FluidParams) -> f64 {
    let mut acc = 0.0;
    for i in 0..state.rho.len() {
        let r = state.rho.values()[i];
        let m = state.momentum.values()[i];
        let j = state.drift_momentum.values()[i];
        acc += 0.5 * (m * m + j * j) / r + params.h_raw(r);
    }
    acc * state.rho.grid().dx()
}

/// Friction dissipation rate `(1/eps^2) integral m^2/rho`.
pub fn friction_dissipation(state: &RelaxState, params: &FluidParams) -> f64 {
    let mut acc = 0.0;
    for i in 0..state.rho.len() {
        let m = state.momentum.values()[i];
        acc += m * m / state.rho.values()[i];
    }
    acc * state.rho.grid().dx() / (params.epsilon() * params.epsilon())
}

/// Viscous dissipation rate `(nu/eps) integral (2 mu_L + lambda_L) u_x^2`.
pub fn viscous_dissipation(state: &RelaxState, params: &FluidParams) -> f64 {
    if params.nu() == 0.0 {
        return 0.0;
    }
    let du = state.velocity().deriv_dealiased(1);
    let mut acc = 0.0;
    for i in 0..state.rho.len() {
        let r = state.rho.values()[i];
        let d = du.values()[i];
        acc += params.viscous_coef_raw(r) * d * d;
    }
    acc * state.rho.grid().dx() * params.nu() / params.epsilon()
}

/// `|| J - d mu(rho)/dx ||_2`: how far the evolved drift momentum has
/// wandered off the constraint manifold. Monitored, never enforced.
pub fn constraint_drift(state: &RelaxState, params: &FluidParams) -> f64 {
    let target = drift_momentum(&state.rho, params);
    state
        .drift_momentum
        .zip_map(&target, |a, b| a - b)
        .norm_l2()
}

/// Reusable buffers for the right-hand-side evaluation.
pub(crate) struct RhsWorkspace {
    u: Vec<f64>,
    v: Vec<f64>,
    du: Vec<f64>,
    coef: Vec<f64>,
    tmp: Vec<f64>,
    deriv: Vec<f64>,
}

impl RhsWorkspace {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            du: vec![0.0; n],
            coef: vec![0.0; n],
            tmp: vec![0.0; n],
            deriv: vec![0.0; n],
        }
    }
}

/// Non-stiff right-hand side of the scaled system (everything except the
/// friction term):
///
/// ```text
/// d rho/dt = -(1/eps) (m)_x
/// d m/dt   = -(1/eps) (m u)_x - (1/eps) p_x + (1/eps) (S1)_x
///            + (nu/eps) ((2 mu_L + lambda_L) u_x)_x
/// d J/dt   = -(1/eps) (J u)_x - (1/eps) (S2)_x
/// ```
///
/// All products are evaluated pointwise and dealiased. The drift equation
/// carries the same 1/eps as every other flux; the one printed appearance
/// without it is treated as a typo, consistent with the equilibrium system
/// and the weak formulation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rhs_nonstiff_into(
    grid: &TorusGrid,
    params: &FluidParams,
    rho: &[f64],
    m: &[f64],
    j: &[f64],
    out_rho: &mut [f64],
    out_m: &mut [f64],
    out_j: &mut [f64],
    ws: &mut RhsWorkspace,
) {
    let n = grid.n();
    let inv_eps = 1.0 / params.epsilon();

    // u = dealias(m / rho), v = dealias(J / rho)
    for i in 0..n {
        ws.tmp[i] = m[i] / rho[i];
    }
    grid.deriv_slice_into(&ws.tmp, 0, true, &mut ws.u);
    for i in 0..n {
        ws.tmp[i] = j[i] / rho[i];
    }
    grid.deriv_slice_into(&ws.tmp, 0, true, &mut ws.v);

    // d rho/dt = -(1/eps) m_x
    grid.deriv_slice_into(m, 1, true, out_rho);
    for i in 0..n {
        out_rho[i] *= -inv_eps;
    }

    // momentum: convective flux
    for i in 0..n {
        ws.tmp[i] = m[i] * ws.u[i];
    }
    grid.deriv_slice_into(&ws.tmp, 1, true, &mut ws.deriv);
    for i in 0..n {
        out_m[i] = -inv_eps * ws.deriv[i];
    }
    // pressure gradient
    for i in 0..n {
        ws.tmp[i] = params.pressure_raw(rho[i]);
    }
    grid.deriv_slice_into(&ws.tmp, 1, true, &mut ws.deriv);
    for i in 0..n {
        out_m[i] -= inv_eps * ws.deriv[i];
    }
    // capillary stress S1 = (mu + lambda/2) v_x
    for i in 0..n {
        ws.coef[i] = params.stress_coef_raw(rho[i]);
    }
    grid.deriv_slice_into(&ws.v, 1, true, &mut ws.deriv);
    for i in 0..n {
        ws.tmp[i] = ws.coef[i] * ws.deriv[i];
    }
    grid.deriv_slice_into(&ws.tmp, 1, true, &mut ws.deriv);
    for i in 0..n {
        out_m[i] += inv_eps * ws.deriv[i];
    }

    // drift: convective flux
    for i in 0..n {
        ws.tmp[i] = j[i] * ws.u[i];
    }
    grid.deriv_slice_into(&ws.tmp, 1, true, &mut ws.deriv);
    for i in 0..n {
        out_j[i] = -inv_eps * ws.deriv[i];
    }
    // capillary stress S2 = (mu + lambda/2) u_x
    grid.deriv_slice_into(&ws.u, 1, true, &mut ws.du);
    for i in 0..n {
        ws.tmp[i] = ws.coef[i] * ws.du[i];
    }
    grid.deriv_slice_into(&ws.tmp, 1, true, &mut ws.deriv);
    for i in 0..n {
        out_j[i] -= inv_eps * ws.deriv[i];
    }

    // Newtonian viscosity (present iff nu > 0)
    if params.nu() > 0.0 {
        for i in 0..n {
            ws.tmp[i] = params.viscous_coef_raw(rho[i]) * ws.du[i];
        }
        grid.deriv_slice_into(&ws.tmp, 1, true, &mut ws.deriv);
        let nu_eps = params.nu() * inv_eps;
        for i in 0..n {
            out_m[i] += nu_eps * ws.deriv[i];
        }
    }
}

/// Public wrapper returning the three time derivatives as fields.
pub fn rhs_nonstiff(state: &RelaxState, params: &FluidParams) -> (Field, Field, Field) {
    let grid = state.rho.grid().clone();
    let n = grid.n();
    let mut ws = RhsWorkspace::new(n);
    let mut dr = vec![0.0; n];
    let mut dm = vec![0.0; n];
    let mut dj = vec![0.0; n];
    rhs_nonstiff_into(
        &grid,
        params,
        state.rho.values(),
        state.momentum.values(),
        state.drift_momentum.values(),
        &mut dr,
        &mut dm,
        &mut dj,
        &mut ws,
    );
    (
        Field::new(grid.clone(), dr),
        Field::new(grid.clone(), dm),
        Field::new(grid, dj),
    )
}

/// Mutable state plus the stage buffers for one run; owned by a single
/// worker.
pub(crate) struct Stepper {
    grid: Arc<TorusGrid>,
    params: FluidParams,
    floor: f64,
    pub rho: Vec<f64>,
    pub m: Vec<f64>,
    pub j: Vec<f64>,
    pub t: f64,
    /// Exact mean density; the state is re-pinned to it every step.
    target_mean: f64,
    rho0: Vec<f64>,
    m0: Vec<f64>,
    j0: Vec<f64>,
    dr: Vec<f64>,
    dm: Vec<f64>,
    dj: Vec<f64>,
    ws: RhsWorkspace,
}

impl Stepper {
    pub(crate) fn new(initial: &RelaxState, params: FluidParams, floor: f64) -> Self {
        let grid = initial.rho.grid().clone();
        let n = grid.n();
        Self {
            grid,
            params,
            floor,
            rho: initial.rho.values().to_vec(),
            m: initial.momentum.values().to_vec(),
            j: initial.drift_momentum.values().to_vec(),
            t: initial.t,
            target_mean: crate::grid::compensated_mean(initial.rho.values()),
            rho0: vec![0.0; n],
            m0: vec![0.0; n],
            j0: vec![0.0; n],
            dr: vec![0.0; n],
            dm: vec![0.0; n],
            dj: vec![0.0; n],
            ws: RhsWorkspace::new(n),
        }
    }

    pub(crate) fn state(&self) -> RelaxState {
        RelaxState::new(
            self.t,
            Field::new(self.grid.clone(), self.rho.clone()),
            Field::new(self.grid.clone(), self.m.clone()),
            Field::new(self.grid.clone(), self.j.clone()),
        )
    }

    fn rhs(&mut self) {
        rhs_nonstiff_into(
            &self.grid,
            &self.params,
            &self.rho,
            &self.m,
            &self.j,
            &mut self.dr,
            &mut self.dm,
            &mut self.dj,
            &mut self.ws,
        );
    }

    /// Strang step: exact half-friction, SSP-RK3 on the fluxes, exact
    /// half-friction. `rho` and `J` are untouched by the friction flows.
    pub(crate) fn step(&mut self, dt: f64) -> Result<()> {
        let eps = self.params.epsilon();
        let friction = (-dt / (2.0 * eps * eps)).exp();
        for v in self.m.iter_mut() {
            *v *= friction;
        }

        let n = self.grid.n();
        self.rho0.copy_from_slice(&self.rho);
        self.m0.copy_from_slice(&self.m);
        self.j0.copy_from_slice(&self.j);

        // stage 1: u1 = u0 + dt f(u0)
        self.rhs();
        for i in 0..n {
            self.rho[i] = self.rho0[i] + dt * self.dr[i];
            self.m[i] = self.m0[i] + dt * self.dm[i];
            self.j[i] = self.j0[i] + dt * self.dj[i];
        }
        // stage 2: u2 = 3/4 u0 + 1/4 (u1 + dt f(u1))
        self.rhs();
        for i in 0..n {
            self.rho[i] = 0.75 * self.rho0[i] + 0.25 * (self.rho[i] + dt * self.dr[i]);
            self.m[i] = 0.75 * self.m0[i] + 0.25 * (self.m[i] + dt * self.dm[i]);
            self.j[i] = 0.75 * self.j0[i] + 0.25 * (self.j[i] + dt * self.dj[i]);
        }
        // stage 3: u3 = 1/3 u0 + 2/3 (u2 + dt f(u2))
        self.rhs();
        const THIRD: f64 = 1.0 / 3.0;
        const TWO_THIRDS: f64 = 2.0 / 3.0;
        for i in 0..n {
            self.rho[i] = THIRD * self.rho0[i] + TWO_THIRDS * (self.rho[i] + dt * self.dr[i]);
            self.m[i] = THIRD * self.m0[i] + TWO_THIRDS * (self.m[i] + dt * self.dm[i]);
            self.j[i] = THIRD * self.j0[i] + TWO_THIRDS * (self.j[i] + dt * self.dj[i]);
        }

        for v in self.m.iter_mut() {
            *v *= friction;
        }
        // Mass is an exact invariant of the semi-discrete flux form, but
        // biased per-value rounding of the stage updates walks it off
        // linearly over millions of steps. Re-pin with a uniform ulp-level
        // shift.
        let shift = self.target_mean - crate::grid::compensated_mean(&self.rho);
        for v in self.rho.iter_mut() {
            *v += shift;
        }
        self.t += dt;
        self.check()
    }

    fn check(&self) -> Result<()> {
        let mut min = f64::INFINITY;
        for &r in &self.rho {
            min = min.min(r);
        }
        if !min.is_finite() {
            return Err(Error::NonFinite {
                t: self.t,
                field: "rho",
            });
        }
        if min < self.floor {
            return Err(Error::FloorViolation {
                t: self.t,
                min_rho: min,
                floor: self.floor,
            });
        }
        for (name, vals) in [("m", &self.m), ("J", &self.j)] {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    t: self.t,
                    field: name,
                });
            }
        }
        Ok(())
    }
}

/// Advance one Strang step; convenience wrapper over the run machinery.
pub fn step(state: &RelaxState, dt: f64, params: &FluidParams, rho_floor: f64) -> Result<RelaxState> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let mut stepper = Stepper::new(state, *params, rho_floor);
    stepper.step(dt)?;
    Ok(stepper.state())
}

/// Per-output-time diagnostics of one relaxation run.
#[derive(Clone, Copy, Debug)]
pub struct RelaxSample {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub friction_dissipation: f64,
    pub viscous_dissipation: f64,
    pub constraint_drift: f64,
}

#[derive(Debug)]
pub struct RelaxTrajectory {
    pub samples: Vec<RelaxSample>,
    pub states: Vec<RelaxState>,
    /// Worst value of `(E(t) - E(0) + integral of dissipation) / t` over
    /// the output times (only when the energy monitor is on). Dissipation
    /// is accumulated by step-level trapezoid; evaluating the energy
    /// difference per step instead would drown in summation roundoff at
    /// small dt.
    pub max_energy_slack_rate: Option<f64>,
    pub mass_drift_rel: f64,
}

pub fn default_floor(rho0: &Field) -> f64 {
    1e-6 * rho0.integrate() / rho0.grid().length()
}

fn sample(state: &RelaxState, params: &FluidParams) -> RelaxSample {
    RelaxSample {
        t: state.t,
        mass: state.rho.integrate(),
        energy: total_energy(state, params),
        friction_dissipation: friction_dissipation(state, params),
        viscous_dissipation: viscous_dissipation(state, params),
        constraint_drift: constraint_drift(state, params),
    }
}

/// Integrate to `t_final`, landing exactly on `n_outputs` uniform output
/// times by step-size adjustment within each interval.
pub fn run(initial: &RelaxState, config: &SolverConfig) -> Result<RelaxTrajectory> {
    config.validate()?;
    let params = &config.params;
    let floor = config.rho_floor.unwrap_or_else(|| default_floor(&initial.rho));
    if initial.rho.min() < floor {
        return Err(Error::FloorViolation {
            t: initial.t,
            min_rho: initial.rho.min(),
            floor,
        });
    }

    let mut stepper = Stepper::new(initial, *params, floor);
    let delta = config.t_final / config.n_outputs as f64;

    let mut samples = vec![sample(&stepper.state(), params)];
    let mut states = vec![stepper.state()];
    let mut max_slack_rate: f64 = f64::NEG_INFINITY;
    let e_initial = total_energy(&stepper.state(), params);
    let mut diss_integral = 0.0f64;
    let mut diss_prev = friction_dissipation(&stepper.state(), params)
        + viscous_dissipation(&stepper.state(), params);

    for i in 1..=config.n_outputs {
        let t_end = delta * i as f64;
        let dt_target = match config.dt_override {
            Some(dt) => dt,
            None => cfl_dt(&stepper.state(), params, config)?,
        };
        let steps = (delta / dt_target).ceil().max(1.0) as usize;
        let h = delta / steps as f64;
        for _ in 0..steps {
            stepper.step(h)?;
            if config.energy_monitor {
                let st = stepper.state();
                let d = friction_dissipation(&st, params) + viscous_dissipation(&st, params);
                diss_integral += 0.5 * h * (diss_prev + d);
                diss_prev = d;
            }
        }
        stepper.t = t_end;
        if config.energy_monitor {
            let e = total_energy(&stepper.state(), params);
            let slack = e - e_initial + diss_integral;
            max_slack_rate = max_slack_rate.max(slack / t_end);
        }
        samples.push(sample(&stepper.state(), params));
        states.push(stepper.state());
    }

    let mass0 = samples[0].mass;
    let mass_drift_rel = samples
        .iter()
        .map(|s| (s.mass - mass0).abs())
        .fold(0.0f64, f64::max)
        / mass0.abs().max(1e-300);

    Ok(RelaxTrajectory {
        samples,
        states,
        max_energy_slack_rate: if config.energy_monitor {
            Some(max_slack_rate)
        } else {
            None
        },
        mass_drift_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params(eps: f64, nu: f64) -> FluidParams {
        FluidParams::new(2.0, 0.0, eps, nu).unwrap()
    }

    fn grid(n: usize) -> Arc<TorusGrid> {
        TorusGrid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_constant_state() {
        let g = grid(64);
        let state = RelaxState::new(
            0.0,
            Field::constant(g.clone(), 1.7),
            Field::constant(g.clone(), 0.0),
            Field::constant(g, 0.0),
        );
        let (dr, dm, dj) = rhs_nonstiff(&state, &params(0.1, 0.0));
        assert!(dr.max_abs() <= 1e-13);
        assert!(dm.max_abs() <= 1e-12);
        assert!(dj.max_abs() <= 1e-13);
    }

    #[test]
    fn viscous_term_vanishes_for_constant_velocity() {
        // u = const with rho varying: m = c rho
        let g = grid(64);
        let rho = Field::from_fn(g.clone(), |x| 2.0 + 0.3 * x.cos());
        let m = rho.map(|r| 0.4 * r);
        let j = Field::constant(g, 0.0);
        let inviscid = RelaxState::new(0.0, rho.clone(), m.clone(), j.clone());
        let (_, dm0, _) = rhs_nonstiff(&inviscid, &params(0.1, 0.0));
        let (_, dm1, _) = rhs_nonstiff(&inviscid, &params(0.1, 0.5));
        let _ = (rho, m, j);
        let diff = dm0.zip_map(&dm1, |a, b| a - b).max_abs();
        assert!(diff <= 1e-9 * dm0.max_abs().max(1.0), "viscous residual {diff:.3e}");
    }

    #[test]
    fn bohm_force_matches_rhs_momentum() {
        // m = 0, J = d mu/dx: the momentum tendency must be the Darcy flux
        // over eps, which the Bohm identity equates with the direct
        // capillarity force
        let p = params(0.1, 0.0);
        let g = grid(128);
        let rho = Field::from_fn(g, |x| 2.0 + x.cos());
        let state = prepare_initial(&rho, &p, Preparation::IllPrepared);
        let (dr, dm, _) = rhs_nonstiff(&state, &p);
        assert!(dr.max_abs() <= 1e-12);
        let darcy = darcy_flux(&rho, &p).map(|v| v / p.epsilon());
        let err = dm.zip_map(&darcy, |a, b| a - b).max_abs();
        assert!(err <= 1e-9 * darcy.max_abs(), "momentum tendency off: {err:.3e}");
    }

    #[test]
    fn bohm_residual_small_across_exponents() {
        for &(gamma, s) in &[(2.0, -1.0), (2.0, 0.0), (3.0, 1.0)] {
            let p = FluidParams::new(gamma, s, 0.1, 0.0).unwrap();
            let rho = Field::from_fn(grid(256), |x| 2.0 + x.cos());
            let res = bohm_residual(&rho, &p).max_abs();
            assert!(res <= 1e-8, "s = {s}: Bohm residual {res:.3e}");
        }
    }

    #[test]
    fn friction_substep_is_exact_exponential() {
        let p = params(0.2, 0.0);
        let g = grid(64);
        let state = RelaxState::new(
            0.0,
            Field::constant(g.clone(), 2.0),
            Field::constant(g.clone(), 0.7),
            Field::constant(g, 0.0),
        );
        let dt = 1e-3;
        let next = step(&state, dt, &p, 1e-8).unwrap();
        // closed form replicated with the same operation order as the
        // two half-step multiplies
        let f = (-dt / (2.0 * p.epsilon() * p.epsilon())).exp();
        let expected = f * (f * 0.7);
        for &v in next.momentum.values() {
            assert_eq!(v, expected, "friction flow must be exact");
        }
        assert_eq!(next.rho.values()[0], 2.0);
        assert_eq!(next.drift_momentum.values()[0], 0.0);
    }

    #[test]
    fn zero_dt_is_identity() {
        let p = params(0.1, 0.0);
        let rho = Field::from_fn(grid(64), |x| 2.0 + 0.4 * x.cos());
        let state = prepare_initial(&rho, &p, Preparation::WellPrepared);
        let next = step(&state, 0.0, &p, 1e-8).unwrap();
        assert_eq!(state.rho.values(), next.rho.values());
        assert_eq!(state.momentum.values(), next.momentum.values());
    }

    #[test]
    fn self_convergence_third_order_fluxes() {
        // friction made negligible (large eps) so the RK3 order shows
        let p = params(10.0, 0.0);
        let rho = Field::from_fn(grid(64), |x| 2.0 + 0.5 * x.cos());
        let initial = prepare_initial(&rho, &p, Preparation::WellPrepared);
        let t_end = 0.5;
        let advance = |steps: usize| -> RelaxState {
            let mut s = Stepper::new(&initial, p, 1e-8);
            for _ in 0..steps {
                s.step(t_end / steps as f64).unwrap();
            }
            s.state()
        };
        let reference = advance(1024);
        let err = |st: &RelaxState| -> f64 {
            st.rho
                .zip_map(&reference.rho, |a, b| a - b)
                .max_abs()
                .max(st.momentum.zip_map(&reference.momentum, |a, b| a - b).max_abs())
        };
        let e1 = err(&advance(64));
        let e2 = err(&advance(128));
        let ratio = e1 / e2;
        assert!(
            (6.0..=10.5).contains(&ratio),
            "expected third-order ratio ~8, got {ratio} ({e1:.3e} / {e2:.3e})"
        );
    }

    #[test]
    fn cfl_formula_examples() {
        let p = params(0.1, 0.0);
        let g = grid(256);
        let quiescent = RelaxState::new(
            0.0,
            Field::constant(g.clone(), 2.0),
            Field::constant(g.clone(), 0.0),
            Field::constant(g.clone(), 0.0),
        );
        let cfg = SolverConfig::new(p, 0.3, 60);
        let dt = cfl_dt(&quiescent, &p, &cfg).unwrap();
        let dx = g.dx();
        let disp = cfg.cfl_dispersive * p.epsilon() * dx.powi(3) / (2.0 * p.k_cap_raw(2.0));
        assert_relative_eq!(dt, disp, max_relative = 1e-14);

        // doubling N divides the dispersive bound by 8
        let g2 = grid(512);
        let q2 = RelaxState::new(
            0.0,
            Field::constant(g2.clone(), 2.0),
            Field::constant(g2.clone(), 0.0),
            Field::constant(g2, 0.0),
        );
        let dt2 = cfl_dt(&q2, &p, &cfg).unwrap();
        assert_relative_eq!(dt2, dt / 8.0, max_relative = 1e-12);

        // halving eps halves the dispersive bound
        let p_half = p.with_epsilon(0.05).unwrap();
        let dt_half = cfl_dt(&quiescent, &p_half, &cfg).unwrap();
        assert_relative_eq!(dt_half, dt / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_run_decays_momentum_only() {
        let p = params(0.2, 0.0);
        let g = grid(64);
        let initial = RelaxState::new(
            0.0,
            Field::constant(g.clone(), 2.0),
            Field::constant(g.clone(), 0.3),
            Field::constant(g, 0.0),
        );
        let mut cfg = SolverConfig::new(p, 0.1, 10);
        cfg.dt_override = Some(1e-3);
        let traj = run(&initial, &cfg).unwrap();
        for (i, st) in traj.states.iter().enumerate() {
            assert!(st.rho.zip_map(&initial.rho, |a, b| a - b).max_abs() <= 1e-13);
            assert!(st.drift_momentum.max_abs() <= 1e-13);
            let t = traj.samples[i].t;
            let expected = 0.3 * (-t / (p.epsilon() * p.epsilon())).exp();
            assert_relative_eq!(st.momentum.values()[0], expected, max_relative = 1e-10);
        }
        assert!(traj.mass_drift_rel <= 1e-14);
    }

    #[test]
    fn well_prepared_run_dissipates_energy() {
        let p = params(0.2, 0.0);
        let rho = Field::from_fn(grid(128), |x| 2.0 + 0.5 * x.cos());
        let initial = prepare_initial(&rho, &p, Preparation::WellPrepared);
        let mut cfg = SolverConfig::new(p, 0.05, 10);
        cfg.energy_monitor = true;
        let traj = run(&initial, &cfg).unwrap();
        assert!(traj.mass_drift_rel <= 1e-12, "mass drift {:.3e}", traj.mass_drift_rel);
        assert!(
            traj.max_energy_slack_rate.unwrap() <= 1e-8,
            "energy slack rate {:.3e}",
            traj.max_energy_slack_rate.unwrap()
        );
        for w in traj.samples.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-10);
        }
    }

    #[test]
    fn viscosity_is_continuous_at_zero() {
        let rho = Field::from_fn(grid(64), |x| 2.0 + 0.4 * x.cos());
        let run_with = |nu: f64| {
            let p = params(0.2, nu);
            let initial = prepare_initial(&rho, &p, Preparation::WellPrepared);
            let cfg = SolverConfig::new(p, 0.02, 4);
            run(&initial, &cfg).unwrap()
        };
        let a = run_with(0.0);
        let b = run_with(1e-12);
        let last_a = &a.states.last().unwrap().rho;
        let last_b = &b.states.last().unwrap().rho;
        assert!(last_a.zip_map(last_b, |x, y| x - y).max_abs() <= 1e-8);
    }

    #[test]
    fn prepare_initial_examples() {
        let p = params(0.1, 0.0);
        let flat = Field::constant(grid(64), 2.0);
        let st = prepare_initial(&flat, &p, Preparation::WellPrepared);
        assert!(st.momentum.max_abs() <= 1e-12);
        assert!(st.drift_momentum.max_abs() <= 1e-12);

        let rho = Field::from_fn(grid(64), |x| 2.0 + 0.5 * x.cos());
        let st = prepare_initial(&rho, &p, Preparation::WellPrepared);
        assert_eq!(constraint_drift(&st, &p), 0.0); // identical construction
    }
}
