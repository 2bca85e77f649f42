//! Relative-entropy functionals and the term-by-term budget of the
//! stability estimates, evaluated on discrete (relaxation, equilibrium)
//! state pairs.
//!
//! Everything n-dimensional in the estimates collapses to scalars in 1-D:
//! `grad u_bar : (u-u_bar) (x) (u-u_bar)` becomes `u_bar_x (u-u_bar)^2`,
//! `grad div` becomes `d^2/dx^2`, and `D(u)` is just `u_x`. Each reduction
//! is written out next to its integrand.

use crate::constitutive::FluidParams;
use crate::equilibrium::EquilibriumState;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::relax::RelaxState;

/// Everything derived from one equilibrium density that the entropy
/// functionals consume. Built once per evaluation time; the underlying
/// fields are always recomputed from `rho_bar`, never cached across times.
#[derive(Clone, Debug)]
pub struct EquilibriumFields {
    pub t: f64,
    pub rho_bar: Field,
    pub m_bar: Field,
    pub j_bar: Field,
    /// `u_bar = m_bar/rho_bar`, pointwise.
    pub u_bar: Field,
    /// `v_bar = J_bar/rho_bar`, pointwise.
    pub v_bar: Field,
    pub du_bar: Field,
    pub d2u_bar: Field,
    pub dv_bar: Field,
    pub d2v_bar: Field,
    pub drho_bar: Field,
    pub e_bar: Field,
}

impl EquilibriumFields {
    /// `validate_derivative` switches on the Richardson triple inside the
    /// error-term evaluation; callers on a hot path validate once per
    /// interval and reuse the cheaper two-point path in between.
    pub fn build(
        eq: &EquilibriumState,
        params: &FluidParams,
        validate_derivative: bool,
    ) -> Result<Self> {
        let m_bar = eq.m_bar(params);
        let j_bar = eq.j_bar(params);
        let u_bar = m_bar.zip_map(&eq.rho_bar, |m, r| m / r);
        let v_bar = j_bar.zip_map(&eq.rho_bar, |j, r| j / r);
        let du_bar = u_bar.deriv_dealiased(1);
        let d2u_bar = u_bar.deriv_dealiased(2);
        let dv_bar = v_bar.deriv_dealiased(1);
        let d2v_bar = v_bar.deriv_dealiased(2);
        let drho_bar = eq.rho_bar.deriv_dealiased(1);
        let e_bar = eq.error_term_impl(params, validate_derivative)?;
        Ok(Self {
            t: eq.t,
            rho_bar: eq.rho_bar.clone(),
            m_bar,
            j_bar,
            u_bar,
            v_bar,
            du_bar,
            d2u_bar,
            dv_bar,
            d2v_bar,
            drho_bar,
            e_bar,
        })
    }
}

fn check_pair(state: &RelaxState, t_eq: f64, rho_bar: &Field) -> Result<()> {
    if !state.rho.grid().same_grid(rho_bar.grid()) {
        return Err(Error::Usage(
            "relaxation and equilibrium states live on different grids".into(),
        ));
    }
    let dt = (state.t - t_eq).abs();
    if dt > 1e-9 * state.t.abs().max(1.0) {
        return Err(Error::Usage(format!(
            "states are not synchronized: t = {} vs t_bar = {}",
            state.t, t_eq
        )));
    }
    Ok(())
}

/// The distance functional
/// `Psi = integral( h(rho|rho_bar) + rho/2 |u-u_bar|^2 + rho/2 |v-v_bar|^2 )`.
pub fn psi(state: &RelaxState, eq: &EquilibriumState, params: &FluidParams) -> Result<f64> {
    let eqf = EquilibriumFields::build(eq, params, false)?;
    psi_with(state, &eqf, params)
}

/// Same, with the equilibrium fields already assembled.
pub fn psi_with(state: &RelaxState, eqf: &EquilibriumFields, params: &FluidParams) -> Result<f64> {
    check_pair(state, eqf.t, &eqf.rho_bar)?;
    let n = state.rho.len();
    let mut acc = 0.0;
    for i in 0..n {
        let r = state.rho.values()[i];
        let rb = eqf.rho_bar.values()[i];
        let du = state.momentum.values()[i] / r - eqf.u_bar.values()[i];
        let dv = state.drift_momentum.values()[i] / r - eqf.v_bar.values()[i];
        acc += params.h_rel_raw(r, rb) + 0.5 * r * (du * du + dv * dv);
    }
    Ok(acc * state.rho.grid().dx())
}

/// Weighted velocity distance `|| sqrt(rho) (u - u_bar) ||_2`; controlled by
/// `sqrt(2 Psi)`.
pub fn weighted_velocity_diff(
    state: &RelaxState,
    eqf: &EquilibriumFields,
    params: &FluidParams,
) -> Result<f64> {
    check_pair(state, eqf.t, &eqf.rho_bar)?;
    let _ = params;
    let mut acc = 0.0;
    for i in 0..state.rho.len() {
        let r = state.rho.values()[i];
        let du = state.momentum.values()[i] / r - eqf.u_bar.values()[i];
        acc += r * du * du;
    }
    Ok((acc * state.rho.grid().dx()).sqrt())
}

/// Pointwise relative-entropy density, evaluated both as the quadratic form
/// `rho/2 |u-u_bar|^2 + rho/2 |v-v_bar|^2 + h(rho|rho_bar)` and as the full
/// Bregman expansion of `eta(rho, m, J) = (m^2 + J^2)/2rho + h(rho)` with
/// weights `eta_rho = h'(rho_bar) - u_bar^2/2 - v_bar^2/2`, `eta_m = u_bar`,
/// `eta_J = v_bar`. Returns the quadratic form; the two must agree to
/// 1e-10 relative to the size of the terms the Bregman expansion cancels.
pub fn relative_entropy_density(
    state: &RelaxState,
    eq: &EquilibriumState,
    params: &FluidParams,
) -> Result<Field> {
    let eqf = EquilibriumFields::build(eq, params, false)?;
    check_pair(state, eqf.t, &eqf.rho_bar)?;
    let n = state.rho.len();
    let mut quad = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let r = state.rho.values()[i];
        let m = state.momentum.values()[i];
        let j = state.drift_momentum.values()[i];
        let rb = eqf.rho_bar.values()[i];
        let mb = eqf.m_bar.values()[i];
        let jb = eqf.j_bar.values()[i];
        let ub = eqf.u_bar.values()[i];
        let vb = eqf.v_bar.values()[i];

        let du = m / r - ub;
        let dv = j / r - vb;
        quad[i] = 0.5 * r * (du * du + dv * dv) + params.h_rel_raw(r, rb);

        let eta = 0.5 * (m * m + j * j) / r + params.h_raw(r);
        let eta_bar = 0.5 * (mb * mb + jb * jb) / rb + params.h_raw(rb);
        let w_rho = params.h_prime_raw(rb) - 0.5 * ub * ub - 0.5 * vb * vb;
        let lin = w_rho * (r - rb) + ub * (m - mb) + vb * (j - jb);
        let bregman = eta - eta_bar - lin;

        let scale = eta.abs() + eta_bar.abs() + lin.abs();
        let diff = (quad[i] - bregman).abs();
        if diff > worst * scale.max(1e-300) {
            worst = diff / scale.max(1e-300);
        }
    }
    if worst > 1e-10 {
        return Err(Error::Consistency(format!(
            "relative-entropy density: quadratic and Bregman forms differ by {worst:.3e} relative"
        )));
    }
    Ok(Field::new(state.rho.grid().clone(), quad))
}

/// One row of the relative-entropy budget: `Psi` plus every integral on the
/// right-hand side of the stability estimate, all 1-D specializations.
#[derive(Clone, Copy, Debug, Default)]
pub struct EntropyBudget {
    pub t: f64,
    pub psi: f64,
    /// `-(1/eps^2) integral rho (u-u_bar)^2`.
    pub friction: f64,
    /// `-(1/eps) integral rho u_bar_x (u-u_bar)^2`.
    pub conv_u: f64,
    /// `-(1/eps) integral rho u_bar_x (v-v_bar)^2`.
    pub conv_v: f64,
    /// `-(1/eps) integral p(rho|rho_bar) u_bar_x`.
    pub pressure: f64,
    /// `-integral e_bar (rho/rho_bar) (u-u_bar)`.
    pub err: f64,
    /// `-(1/eps) integral rho (mu''(rho) rho_x - mu''(rho_bar) rho_bar_x)
    ///   ((v-v_bar) u_bar_x - (u-u_bar) v_bar_x)`.
    pub mu2: f64,
    /// `-(1/eps) integral rho (mu'(rho) - mu'(rho_bar))
    ///   ((v-v_bar) u_bar_xx - (u-u_bar) v_bar_xx)`.
    pub mu1: f64,
    /// `-(2 nu/eps) integral mu_L(rho) ((u-u_bar)_x)^2`.
    pub visc_q1: f64,
    /// `-(nu/eps) integral lambda_L(rho) ((u-u_bar)_x)^2`.
    pub visc_q2: f64,
    /// `-(2 nu/eps) integral mu_L(rho) u_bar_x (u-u_bar)_x`.
    pub visc_x1: f64,
    /// `-(nu/eps) integral lambda_L(rho) u_bar_x (u-u_bar)_x`.
    pub visc_x2: f64,
}

impl EntropyBudget {
    pub const CSV_HEADER: &'static str =
        "t,psi,friction,conv_u,conv_v,pressure,err,mu2,mu1,visc_q1,visc_q2,visc_x1,visc_x2,slack";

    /// Sum of every right-hand-side term (the integrand of the time
    /// integral in the stability estimate).
    pub fn rhs_total(&self) -> f64 {
        self.friction
            + self.conv_u
            + self.conv_v
            + self.pressure
            + self.err
            + self.mu2
            + self.mu1
            + self.visc_q1
            + self.visc_q2
            + self.visc_x1
            + self.visc_x2
    }

    pub fn terms(&self) -> [f64; 11] {
        [
            self.friction,
            self.conv_u,
            self.conv_v,
            self.pressure,
            self.err,
            self.mu2,
            self.mu1,
            self.visc_q1,
            self.visc_q2,
            self.visc_x1,
            self.visc_x2,
        ]
    }
}

/// Evaluate every budget term at one instant.
pub fn budget(
    state: &RelaxState,
    eq: &EquilibriumState,
    params: &FluidParams,
) -> Result<EntropyBudget> {
    let eqf = EquilibriumFields::build(eq, params, true)?;
    budget_with(state, &eqf, params)
}

/// Budget with preassembled equilibrium fields (the sweep hot path).
pub fn budget_with(
    state: &RelaxState,
    eqf: &EquilibriumFields,
    params: &FluidParams,
) -> Result<EntropyBudget> {
    check_pair(state, eqf.t, &eqf.rho_bar)?;
    let n = state.rho.len();
    let dx = state.rho.grid().dx();
    let eps = params.epsilon();
    let nu = params.nu();

    let drho = state.rho.deriv_dealiased(1);
    // velocity derivative only needed for the viscous entries
    let du_state = if nu > 0.0 {
        Some(state.velocity().deriv_dealiased(1))
    } else {
        None
    };

    let mut b = EntropyBudget {
        t: state.t,
        ..Default::default()
    };
    let mut psi_acc = 0.0;
    for i in 0..n {
        let r = state.rho.values()[i];
        let rb = eqf.rho_bar.values()[i];
        let u = state.momentum.values()[i] / r;
        let v = state.drift_momentum.values()[i] / r;
        let ub = eqf.u_bar.values()[i];
        let vb = eqf.v_bar.values()[i];
        let du = u - ub;
        let dv = v - vb;
        let dub = eqf.du_bar.values()[i];
        let dvb = eqf.dv_bar.values()[i];

        psi_acc += params.h_rel_raw(r, rb) + 0.5 * r * (du * du + dv * dv);

        b.friction -= r * du * du / (eps * eps);
        b.conv_u -= r * dub * du * du / eps;
        b.conv_v -= r * dub * dv * dv / eps;
        b.pressure -= params.p_rel_raw(r, rb) * dub / eps;
        b.err -= eqf.e_bar.values()[i] * (r / rb) * du;

        let mu2_diff = params.mu_double_prime_raw(r) * drho.values()[i]
            - params.mu_double_prime_raw(rb) * eqf.drho_bar.values()[i];
        b.mu2 -= r * mu2_diff * (dv * dub - du * dvb) / eps;

        let mu1_diff = params.mu_prime_raw(r) - params.mu_prime_raw(rb);
        b.mu1 -= r * mu1_diff * (dv * eqf.d2u_bar.values()[i] - du * eqf.d2v_bar.values()[i]) / eps;

        if let Some(dus) = &du_state {
            let ddu = dus.values()[i] - dub;
            let (mu_l, la_l) = (
                params.viscous_coef_mu_l(r),
                params.viscous_coef_lambda_l(r),
            );
            b.visc_q1 -= 2.0 * nu * mu_l * ddu * ddu / eps;
            b.visc_q2 -= nu * la_l * ddu * ddu / eps;
            b.visc_x1 -= 2.0 * nu * mu_l * dub * ddu / eps;
            b.visc_x2 -= nu * la_l * dub * ddu / eps;
        }
    }
    b.psi = psi_acc * dx;
    b.friction *= dx;
    b.conv_u *= dx;
    b.conv_v *= dx;
    b.pressure *= dx;
    b.err *= dx;
    b.mu2 *= dx;
    b.mu1 *= dx;
    b.visc_q1 *= dx;
    b.visc_q2 *= dx;
    b.visc_x1 *= dx;
    b.visc_x2 *= dx;
    Ok(b)
}

/// Max-norm residual of the pointwise identity
/// `mu''(rho) rho_x - mu''(rho_bar) rho_bar_x = (s+1)/2 (v - v_bar)`
/// with both drift velocities rebuilt from their densities.
pub fn mu_identity_residual(rho: &Field, rho_bar: &Field, params: &FluidParams) -> f64 {
    let v = rho
        .map(|r| params.mu_raw(r))
        .deriv_dealiased(1)
        .zip_map(rho, |j, r| j / r);
    let vb = rho_bar
        .map(|r| params.mu_raw(r))
        .deriv_dealiased(1)
        .zip_map(rho_bar, |j, r| j / r);
    let drho = rho.deriv_dealiased(1);
    let drho_bar = rho_bar.deriv_dealiased(1);
    let half_s1 = 0.5 * (params.s() + 1.0);
    let mut worst: f64 = 0.0;
    for i in 0..rho.len() {
        let lhs = params.mu_double_prime_raw(rho.values()[i]) * drho.values()[i]
            - params.mu_double_prime_raw(rho_bar.values()[i]) * drho_bar.values()[i];
        let rhs = half_s1 * (v.values()[i] - vb.values()[i]);
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Slack report of the integral stability estimate.
#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub times: Vec<f64>,
    /// `Psi(0) + integral_0^t RHS - Psi(t)` per output time.
    pub slack: Vec<f64>,
    pub slack_min: f64,
    pub tol_slack: f64,
    pub pass: bool,
}

/// Time-integrate the budget and report the inequality slack.
///
/// When the runner accumulated the right-hand side at solver resolution,
/// `cumulative_rhs` carries those integrals (one per output time) and is
/// used directly; otherwise the instantaneous rows are trapezoid-integrated
/// on the output grid, which couples the slack floor to the output cadence.
pub fn inequality_check(
    times: &[f64],
    psi_series: &[f64],
    budgets: &[EntropyBudget],
    cumulative_rhs: Option<&[f64]>,
    params: &FluidParams,
    tol_factor: f64,
) -> InequalityReport {
    assert_eq!(times.len(), psi_series.len());
    let psi0 = psi_series[0];
    let mut integral = vec![0.0; times.len()];
    match cumulative_rhs {
        Some(cum) => {
            assert_eq!(cum.len(), times.len());
            integral.copy_from_slice(cum);
        }
        None => {
            assert_eq!(budgets.len(), times.len());
            let mut acc = 0.0;
            for i in 1..times.len() {
                let h = times[i] - times[i - 1];
                acc += 0.5 * h * (budgets[i - 1].rhs_total() + budgets[i].rhs_total());
                integral[i] = acc;
            }
        }
    }
    let slack: Vec<f64> = (0..times.len())
        .map(|i| psi0 + integral[i] - psi_series[i])
        .collect();
    let slack_min = slack.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps4 = params.epsilon().powi(4);
    let tol_slack = tol_factor * psi0.max(eps4);
    InequalityReport {
        times: times.to_vec(),
        slack,
        slack_min,
        tol_slack,
        pass: slack_min >= -tol_slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::EquilibriumState;
    use crate::grid::TorusGrid;
    use crate::relax::{prepare_initial, Preparation, RelaxState};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn params() -> FluidParams {
        FluidParams::new(2.0, 0.0, 0.1, 0.0).unwrap()
    }

    fn grid(n: usize) -> Arc<TorusGrid> {
        TorusGrid::new(n, 2.0 * PI).unwrap()
    }

    /// Tiny deterministic generator for "random" smooth perturbations.
    struct XorShift(u64);
    impl XorShift {
        fn next_f64(&mut self) -> f64 {
            let mut x = self.0;
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            self.0 = x;
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    #[test]
    fn psi_zero_for_prepared_pair() {
        let p = params();
        let rho = Field::from_fn(grid(64), |x| 2.0 + 0.5 * x.cos());
        let state = prepare_initial(&rho, &p, Preparation::WellPrepared);
        let eq = EquilibriumState::new(0.0, rho);
        let val = psi(&state, &eq, &p).unwrap();
        assert!(val.abs() <= 1e-20, "Psi(0) = {val:.3e}");
    }

    #[test]
    fn psi_closed_forms() {
        let p = params();
        let g = grid(64);
        // u - u_bar = c constant over a flat equilibrium: Psi = c^2/2 * mass
        let rho = Field::constant(g.clone(), 2.0);
        let c = 0.37;
        let state = RelaxState::new(
            0.0,
            rho.clone(),
            rho.map(|r| c * r),
            Field::constant(g.clone(), 0.0),
        );
        let eq = EquilibriumState::new(0.0, rho.clone());
        let mass = rho.integrate();
        assert_relative_eq!(
            psi(&state, &eq, &p).unwrap(),
            0.5 * c * c * mass,
            max_relative = 1e-13
        );

        // constants rho = 2, rho_bar = 1, no momenta: Psi = integral h_rel = 2 pi
        let state = RelaxState::new(
            0.0,
            Field::constant(g.clone(), 2.0),
            Field::constant(g.clone(), 0.0),
            Field::constant(g.clone(), 0.0),
        );
        let eq = EquilibriumState::new(0.0, Field::constant(g, 1.0));
        assert_relative_eq!(psi(&state, &eq, &p).unwrap(), 2.0 * PI, max_relative = 1e-13);
    }

    #[test]
    fn psi_rejects_mismatched_pairs() {
        let p = params();
        let rho = Field::constant(grid(64), 2.0);
        let state = RelaxState::new(
            0.0,
            rho.clone(),
            Field::constant(grid(64), 0.0),
            Field::constant(grid(64), 0.0),
        );
        // different grid
        let eq = EquilibriumState::new(0.0, Field::constant(grid(128), 2.0));
        assert!(psi(&state, &eq, &p).is_err());
        // different time
        let eq = EquilibriumState::new(0.5, rho);
        assert!(psi(&state, &eq, &p).is_err());
    }

    #[test]
    fn density_forms_agree() {
        let p = params();
        let g = grid(64);

        // equal states: zero both ways
        let rho = Field::from_fn(g.clone(), |x| 2.0 + 0.4 * x.cos());
        let state = prepare_initial(&rho, &p, Preparation::WellPrepared);
        let eq = EquilibriumState::new(0.0, rho.clone());
        let d = relative_entropy_density(&state, &eq, &p).unwrap();
        assert!(d.max_abs() <= 1e-18);

        // perturb only the momentum: density is rho/2 (u-u_bar)^2 both ways
        let bump = Field::from_fn(g.clone(), |x| 0.2 * (2.0 * x).sin());
        let state2 = RelaxState::new(
            0.0,
            state.rho.clone(),
            state.momentum.zip_map(&bump, |m, b| m + b),
            state.drift_momentum.clone(),
        );
        let d2 = relative_entropy_density(&state2, &eq, &p).unwrap();
        let expected = state2
            .rho
            .zip_map(&bump, |r, b| 0.5 * (b / r) * (b / r) * r);
        assert!(d2.zip_map(&expected, |a, b| a - b).max_abs() <= 1e-13);

        // 100 randomized smooth perturbations: the two forms stay within
        // 1e-10 (the consistency check inside the call enforces it)
        let mut gen = XorShift(0x9e3779b97f4a7c15);
        for _ in 0..100 {
            let a1 = gen.next_f64();
            let a2 = gen.next_f64();
            let a3 = gen.next_f64();
            let rho_s = rho.zip_map(
                &Field::from_fn(g.clone(), |x| (x + a3).cos()),
                |r, c| r + 0.3 * a1 * c,
            );
            let m_s = Field::from_fn(g.clone(), |x| a2 * (2.0 * x).sin());
            let j_s = crate::equilibrium::drift_momentum(&rho_s, &p)
                .zip_map(&Field::from_fn(g.clone(), |x| x.sin()), |j, s| j + 0.2 * a1 * s);
            let st = RelaxState::new(0.0, rho_s, m_s, j_s);
            relative_entropy_density(&st, &eq, &p).unwrap();
        }
    }

    #[test]
    fn budget_flat_equilibrium_kills_gradient_terms() {
        let p = params();
        let g = grid(64);
        let rho = Field::from_fn(g.clone(), |x| 2.0 + 0.3 * x.cos());
        let state = RelaxState::new(
            0.0,
            rho.clone(),
            Field::from_fn(g.clone(), |x| 0.1 * x.sin()),
            crate::equilibrium::drift_momentum(&rho, &p),
        );
        let eq = EquilibriumState::new(0.0, Field::constant(g, 2.0));
        let b = budget(&state, &eq, &p).unwrap();
        // u_bar = v_bar = 0 identically: every term carrying a derivative
        // of the equilibrium velocities vanishes
        assert!(b.conv_u.abs() <= 1e-13);
        assert!(b.conv_v.abs() <= 1e-13);
        assert!(b.pressure.abs() <= 1e-13);
        assert!(b.mu2.abs() <= 1e-12);
        assert!(b.mu1.abs() <= 1e-12);
        assert!(b.err.abs() <= 1e-13);
        // friction is genuinely negative
        assert!(b.friction < 0.0);
        // nu = 0: viscous entries exactly zero
        assert_eq!(b.visc_q1, 0.0);
        assert_eq!(b.visc_q2, 0.0);
        assert_eq!(b.visc_x1, 0.0);
        assert_eq!(b.visc_x2, 0.0);
    }

    #[test]
    fn budget_matches_refined_quadrature() {
        // independent oracle: rebuild every input on a 4x finer grid by
        // trigonometric interpolation and re-evaluate the quadratures there
        let p = FluidParams::new(2.0, 0.0, 0.2, 0.1).unwrap();
        let g = grid(64);
        let rho_bar = Field::from_fn(g.clone(), |x| 2.0 + 0.4 * x.cos());
        let rho = Field::from_fn(g.clone(), |x| 2.0 + 0.3 * x.cos() + 0.05 * (2.0 * x).sin());
        let m = Field::from_fn(g.clone(), |x| 0.08 * x.sin());
        let j = crate::equilibrium::drift_momentum(&rho, &p)
            .zip_map(&Field::from_fn(g, |x| (3.0 * x).cos()), |a, b| a + 0.03 * b);
        let state = RelaxState::new(0.0, rho.clone(), m.clone(), j.clone());
        let eq = EquilibriumState::new(0.0, rho_bar.clone());
        let coarse = budget(&state, &eq, &p).unwrap();

        let fine_state = RelaxState::new(
            0.0,
            rho.refine(4).unwrap(),
            m.refine(4).unwrap(),
            j.refine(4).unwrap(),
        );
        let fine_eq = EquilibriumState::new(0.0, rho_bar.refine(4).unwrap());
        let fine = budget(&fine_state, &fine_eq, &p).unwrap();

        let ct = coarse.terms();
        let ft = fine.terms();
        let scale = ct.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (i, (c, f)) in ct.iter().zip(&ft).enumerate() {
            assert!(
                (c - f).abs() <= 1e-6 * scale.max(1e-12),
                "term {i}: coarse {c:.6e} vs refined {f:.6e}"
            );
        }
        assert!((coarse.psi - fine.psi).abs() <= 1e-6 * coarse.psi.abs().max(1e-12));
    }

    #[test]
    fn mu_identity_examples() {
        let g = grid(256);
        let rho = Field::from_fn(g.clone(), |x| 2.0 + x.cos());
        let flat = Field::constant(g.clone(), 2.0);

        // s = -1: both sides identically zero
        let pm1 = FluidParams::new(2.0, -1.0, 0.1, 0.0).unwrap();
        assert_eq!(mu_identity_residual(&rho, &flat, &pm1), 0.0);

        // rho == rho_bar: zero by symmetry
        let p = params();
        assert!(mu_identity_residual(&rho, &rho, &p) <= 1e-16);

        // s = 0, rho = 2 + cos x against a flat reference
        assert!(mu_identity_residual(&rho, &flat, &p) <= 1e-10);
    }

    #[test]
    fn psi_zero_iff_densities_vanish() {
        let p = params();
        let rho = Field::from_fn(grid(64), |x| 2.0 + 0.5 * x.cos());
        let state = prepare_initial(&rho, &p, Preparation::WellPrepared);
        let eq = EquilibriumState::new(0.0, rho);
        let val = psi(&state, &eq, &p).unwrap();
        let density = relative_entropy_density(&state, &eq, &p).unwrap();
        let volume = 2.0 * PI;
        if val <= 1e-18 * volume {
            assert!(density.max_abs() <= 1e-18);
        }
    }

    #[test]
    fn inequality_check_identical_trajectories() {
        let p = params();
        // psi identically zero, all budget terms zero: slack must be zero
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let psis = vec![0.0; 10];
        let budgets: Vec<EntropyBudget> = times
            .iter()
            .map(|&t| EntropyBudget {
                t,
                ..Default::default()
            })
            .collect();
        let report = inequality_check(&times, &psis, &budgets, None, &p, 1e-6);
        assert!(report.pass);
        assert_abs_diff_eq!(report.slack_min, 0.0, epsilon = 1e-300);
        assert_relative_eq!(report.tol_slack, 1e-6 * 0.1f64.powi(4), max_relative = 1e-12);
    }
}
