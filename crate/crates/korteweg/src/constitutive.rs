//! Pointwise constitutive laws for the power-law fluid family and their
//! relative (Bregman) versions.
//!
//! The whole family is parametrized by the adiabatic exponent `gamma` and the
//! capillarity exponent `s`:
//!
//! ```text
//! p(rho)  = rho^gamma                     pressure
//! h(rho)  = rho^gamma / (gamma - 1)       internal energy density
//! k(rho)  = ((s+3)^2 / 4) rho^s           capillarity coefficient
//! mu(rho) = rho^((s+3)/2)                 drift potential, mu' = sqrt(rho k)
//! lambda  = 2 (rho mu' - mu) = (s+1) mu
//! ```
//!
//! Everything here is a pure function of its value arguments; concurrent use
//! needs no synchronization.

use crate::error::{Error, Result};

/// Selection of the Lame viscosity coefficients for the viscous model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LameMode {
    /// `mu_L = mu`, `lambda_L = lambda`; admissible for the whole exponent
    /// range `s >= -1`.
    MatchCapillarity,
    /// User-supplied power laws `mu_L = c_mu rho^e_mu`,
    /// `lambda_L = c_la rho^e_la`. Checked for admissibility at
    /// construction.
    Custom {
        mu_coef: f64,
        mu_exp: f64,
        lambda_coef: f64,
        lambda_exp: f64,
    },
}

/// Physical and constitutive parameters of one model configuration.
///
/// `nu = 0` selects the Euler-Korteweg system, `nu > 0` the
/// Navier-Stokes-Korteweg system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    gamma: f64,
    s: f64,
    epsilon: f64,
    nu: f64,
    lame_mode: LameMode,
}

/// `x^a`, routed through `sqrt`/`powi` when `2a` is a small integer.
///
/// The solver evaluates the power laws on every grid point of every stage,
/// and all the exponents of the reference configurations are half-integers.
#[inline]
pub fn pow_half_integer(x: f64, a: f64) -> f64 {
    let doubled = 2.0 * a;
    if doubled == doubled.trunc() && doubled.abs() <= 12.0 {
        let n = doubled as i32;
        if n % 2 == 0 {
            return x.powi(n / 2);
        }
        return x.sqrt().powi(n);
    }
    x.powf(a)
}

/// One power law `coef * rho^exp` with a guarded singular point at zero.
#[derive(Debug, Clone, Copy)]
struct PowerLaw {
    coef: f64,
    exp: f64,
}

impl PowerLaw {
    #[inline]
    fn eval(&self, rho: f64) -> f64 {
        if self.coef == 0.0 {
            return 0.0;
        }
        self.coef * pow_half_integer(rho, self.exp)
    }

    /// Singular at `rho = 0` iff the law actually carries a negative power.
    fn singular_at_zero(&self) -> bool {
        self.coef != 0.0 && self.exp < 0.0
    }
}

/// The capillarity-related laws evaluated at one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapillarityFamily {
    pub k: f64,
    pub mu: f64,
    pub mu_prime: f64,
    pub mu_double_prime: f64,
    pub lambda: f64,
}

impl FluidParams {
    /// Validated constructor. Requires `gamma > 1`, `s >= -1`,
    /// `s + 2 <= gamma`, `epsilon > 0`, `nu >= 0`.
    pub fn new(gamma: f64, s: f64, epsilon: f64, nu: f64) -> Result<Self> {
        Self::with_lame(gamma, s, epsilon, nu, LameMode::MatchCapillarity)
    }

    pub fn with_lame(gamma: f64, s: f64, epsilon: f64, nu: f64, lame_mode: LameMode) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::Config(format!("gamma must be > 1, got {gamma}")));
        }
        if !(s >= -1.0) {
            return Err(Error::Config(format!("s must be >= -1, got {s}")));
        }
        if !(s + 2.0 <= gamma) {
            return Err(Error::Config(format!(
                "exponents must satisfy s + 2 <= gamma, got s = {s}, gamma = {gamma}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(nu >= 0.0) {
            return Err(Error::Config(format!("nu must be >= 0, got {nu}")));
        }
        let params = Self {
            gamma,
            s,
            epsilon,
            nu,
            lame_mode,
        };
        params.check_lame_admissible()?;
        Ok(params)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn lame_mode(&self) -> LameMode {
        self.lame_mode
    }

    /// Same constitutive family at a different relaxation parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::with_lame(self.gamma, self.s, epsilon, self.nu, self.lame_mode)
    }

    /// Same constitutive family at a different viscosity.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::with_lame(self.gamma, self.s, self.epsilon, nu, self.lame_mode)
    }

    fn mu_l_law(&self) -> PowerLaw {
        match self.lame_mode {
            LameMode::MatchCapillarity => PowerLaw {
                coef: 1.0,
                exp: 0.5 * (self.s + 3.0),
            },
            LameMode::Custom { mu_coef, mu_exp, .. } => PowerLaw {
                coef: mu_coef,
                exp: mu_exp,
            },
        }
    }

    fn lambda_l_law(&self) -> PowerLaw {
        match self.lame_mode {
            LameMode::MatchCapillarity => PowerLaw {
                coef: self.s + 1.0,
                exp: 0.5 * (self.s + 3.0),
            },
            LameMode::Custom {
                lambda_coef,
                lambda_exp,
                ..
            } => PowerLaw {
                coef: lambda_coef,
                exp: lambda_exp,
            },
        }
    }

    /// Lame admissibility `mu_L >= 0` and `2 mu_L + lambda_L >= 0` (n = 1),
    /// checked pointwise on a log-spaced probe grid plus rho = 0.
    fn check_lame_admissible(&self) -> Result<()> {
        let mu_l = self.mu_l_law();
        let la_l = self.lambda_l_law();
        let mut probes = vec![0.0];
        let (lo, hi) = (1e-3f64, 1e3f64);
        let n = 64;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            probes.push(lo * (hi / lo).powf(t));
        }
        for &rho in &probes {
            if rho == 0.0 && (mu_l.singular_at_zero() || la_l.singular_at_zero()) {
                return Err(Error::Config(
                    "custom Lame coefficients are singular at rho = 0".into(),
                ));
            }
            let m = mu_l.eval(rho);
            let l = la_l.eval(rho);
            if !(m >= 0.0) || !(2.0 * m + l >= 0.0) {
                return Err(Error::Config(format!(
                    "Lame admissibility violated at rho = {rho:.3e}: mu_L = {m:.3e}, 2 mu_L + lambda_L = {:.3e}",
                    2.0 * m + l
                )));
            }
        }
        Ok(())
    }

    fn check_nonneg(&self, rho: f64, what: &str) -> Result<()> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::Domain(format!("{what} requires rho >= 0, got {rho}")));
        }
        Ok(())
    }

    fn check_pos(&self, rho: f64, what: &str) -> Result<()> {
        if rho <= 0.0 || !rho.is_finite() {
            return Err(Error::Domain(format!("{what} requires rho > 0, got {rho}")));
        }
        Ok(())
    }

    // --- gamma-law pressure and internal energy -------------------------

    #[inline]
    pub(crate) fn pressure_raw(&self, rho: f64) -> f64 {
        pow_half_integer(rho, self.gamma)
    }

    #[inline]
    pub(crate) fn dpressure_raw(&self, rho: f64) -> f64 {
        self.gamma * pow_half_integer(rho, self.gamma - 1.0)
    }

    #[inline]
    pub(crate) fn h_raw(&self, rho: f64) -> f64 {
        pow_half_integer(rho, self.gamma) / (self.gamma - 1.0)
    }

    #[inline]
    pub(crate) fn h_prime_raw(&self, rho: f64) -> f64 {
        self.gamma / (self.gamma - 1.0) * pow_half_integer(rho, self.gamma - 1.0)
    }

    #[inline]
    pub(crate) fn h_double_prime_raw(&self, rho: f64) -> f64 {
        self.gamma * pow_half_integer(rho, self.gamma - 2.0)
    }

    /// `p(rho) = rho^gamma`.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        self.check_nonneg(rho, "pressure")?;
        Ok(self.pressure_raw(rho))
    }

    /// `p'(rho)`.
    pub fn dpressure(&self, rho: f64) -> Result<f64> {
        self.check_nonneg(rho, "dpressure")?;
        Ok(self.dpressure_raw(rho))
    }

    /// `h(rho) = rho^gamma / (gamma - 1)`.
    pub fn h_internal(&self, rho: f64) -> Result<f64> {
        self.check_nonneg(rho, "h_internal")?;
        Ok(self.h_raw(rho))
    }

    pub fn h_prime(&self, rho: f64) -> Result<f64> {
        self.check_nonneg(rho, "h_prime")?;
        Ok(self.h_prime_raw(rho))
    }

    /// `h''(rho) = p'(rho) / rho`.
    pub fn h_double_prime(&self, rho: f64) -> Result<f64> {
        self.check_pos(rho, "h_double_prime")?;
        Ok(self.h_double_prime_raw(rho))
    }

    // --- relative (Bregman) versions ------------------------------------

    #[inline]
    pub(crate) fn h_rel_raw(&self, rho: f64, rho_bar: f64) -> f64 {
        self.h_raw(rho) - self.h_raw(rho_bar) - self.h_prime_raw(rho_bar) * (rho - rho_bar)
    }

    /// `h(rho | rho_bar)`, the Bregman divergence of `h`. Nonnegative for
    /// `gamma > 1` by convexity.
    pub fn h_rel(&self, rho: f64, rho_bar: f64) -> Result<f64> {
        self.check_nonneg(rho, "h_rel")?;
        self.check_pos(rho_bar, "h_rel (reference)")?;
        Ok(self.h_rel_raw(rho, rho_bar))
    }

    /// `p(rho | rho_bar) = p - p_bar - p'(rho_bar)(rho - rho_bar)`.
    /// Equals `(gamma - 1) h(rho | rho_bar)` for the gamma-law.
    pub fn p_rel(&self, rho: f64, rho_bar: f64) -> Result<f64> {
        self.check_nonneg(rho, "p_rel")?;
        self.check_pos(rho_bar, "p_rel (reference)")?;
        Ok(self.p_rel_raw(rho, rho_bar))
    }

    #[inline]
    pub(crate) fn p_rel_raw(&self, rho: f64, rho_bar: f64) -> f64 {
        self.pressure_raw(rho)
            - self.pressure_raw(rho_bar)
            - self.dpressure_raw(rho_bar) * (rho - rho_bar)
    }

    // --- capillarity family ----------------------------------------------

    #[inline]
    pub(crate) fn k_cap_raw(&self, rho: f64) -> f64 {
        let c = 0.25 * (self.s + 3.0) * (self.s + 3.0);
        c * pow_half_integer(rho, self.s)
    }

    #[inline]
    pub(crate) fn k_cap_prime_raw(&self, rho: f64) -> f64 {
        let c = 0.25 * (self.s + 3.0) * (self.s + 3.0) * self.s;
        if c == 0.0 {
            return 0.0;
        }
        c * pow_half_integer(rho, self.s - 1.0)
    }

    #[inline]
    pub(crate) fn mu_raw(&self, rho: f64) -> f64 {
        pow_half_integer(rho, 0.5 * (self.s + 3.0))
    }

    #[inline]
    pub(crate) fn mu_prime_raw(&self, rho: f64) -> f64 {
        0.5 * (self.s + 3.0) * pow_half_integer(rho, 0.5 * (self.s + 1.0))
    }

    #[inline]
    pub(crate) fn mu_double_prime_raw(&self, rho: f64) -> f64 {
        let c = 0.25 * (self.s + 3.0) * (self.s + 1.0);
        if c == 0.0 {
            return 0.0;
        }
        c * pow_half_integer(rho, 0.5 * (self.s - 1.0))
    }

    #[inline]
    pub(crate) fn lambda_raw(&self, rho: f64) -> f64 {
        (self.s + 1.0) * self.mu_raw(rho)
    }

    #[inline]
    pub(crate) fn lambda_prime_raw(&self, rho: f64) -> f64 {
        (self.s + 1.0) * self.mu_prime_raw(rho)
    }

    /// Combined stress coefficient `mu + lambda/2 = rho mu'(rho)`, the 1-D
    /// prefactor of both capillary stresses.
    #[inline]
    pub(crate) fn stress_coef_raw(&self, rho: f64) -> f64 {
        rho * self.mu_prime_raw(rho)
    }

    /// `(k, mu, mu', mu'', lambda)` at one density.
    ///
    /// `rho = 0` with a genuinely negative exponent in `k` or `mu''` is a
    /// singular input: the solvers keep densities above a positive floor, so
    /// hitting this path means something upstream went wrong.
    pub fn capillarity_family(&self, rho: f64) -> Result<CapillarityFamily> {
        self.check_nonneg(rho, "capillarity_family")?;
        if rho == 0.0 {
            let k_sing = self.s < 0.0;
            let mu2_sing = 0.25 * (self.s + 3.0) * (self.s + 1.0) != 0.0 && self.s < 1.0;
            if k_sing || mu2_sing {
                return Err(Error::SingularInput(format!(
                    "capillarity family at rho = 0 with s = {}",
                    self.s
                )));
            }
        }
        Ok(CapillarityFamily {
            k: self.k_cap_raw(rho),
            mu: self.mu_raw(rho),
            mu_prime: self.mu_prime_raw(rho),
            mu_double_prime: self.mu_double_prime_raw(rho),
            lambda: self.lambda_raw(rho),
        })
    }

    /// `(mu_L, lambda_L)` at one density, per the configured mode.
    pub fn lame_coefficients(&self, rho: f64) -> Result<(f64, f64)> {
        self.check_nonneg(rho, "lame_coefficients")?;
        let mu_l = self.mu_l_law();
        let la_l = self.lambda_l_law();
        if rho == 0.0 && (mu_l.singular_at_zero() || la_l.singular_at_zero()) {
            return Err(Error::SingularInput("Lame coefficients at rho = 0".into()));
        }
        Ok((mu_l.eval(rho), la_l.eval(rho)))
    }

    /// The 1-D viscous coefficient `2 mu_L + lambda_L`.
    #[inline]
    pub(crate) fn viscous_coef_raw(&self, rho: f64) -> f64 {
        let m = self.mu_l_law().eval(rho);
        let l = self.lambda_l_law().eval(rho);
        2.0 * m + l
    }

    #[inline]
    pub(crate) fn viscous_coef_mu_l(&self, rho: f64) -> f64 {
        self.mu_l_law().eval(rho)
    }

    #[inline]
    pub(crate) fn viscous_coef_lambda_l(&self, rho: f64) -> f64 {
        self.lambda_l_law().eval(rho)
    }

    /// The ratio `rho |mu'(rho) - mu'(rho_bar)|^2 / h(rho | rho_bar)`.
    ///
    /// Sweeping this ratio over a sample grid estimates the constant of the
    /// bound `rho |mu'(rho) - mu'(rho_bar)|^2 <= C(rho_bar) h(rho | rho_bar)`.
    /// The equal-argument limit exists but is the sampler's business, not
    /// this function's.
    pub fn lemma8_ratio(&self, rho: f64, rho_bar: f64) -> Result<f64> {
        self.check_nonneg(rho, "lemma8_ratio")?;
        self.check_pos(rho_bar, "lemma8_ratio (reference)")?;
        if rho == rho_bar {
            return Err(Error::Usage(
                "lemma8_ratio is undefined at rho == rho_bar; exclude the diagonal when sampling"
                    .into(),
            ));
        }
        let d = self.mu_prime_raw(rho) - self.mu_prime_raw(rho_bar);
        let h = self.h_rel_raw(rho, rho_bar);
        Ok(rho * d * d / h)
    }
}

/// Empirical constant for the weighted `mu'` bound: the supremum of
/// [`FluidParams::lemma8_ratio`] over a deterministic log-spaced grid of
/// `(rho, rho_bar)` pairs with `rho_bar` in a compact set `[delta, r]`.
///
/// `offset = 0` samples an endpoint-inclusive grid (the supremum of the
/// ratio sits on the boundary of the rectangle, so a training scan must
/// reach it); `offset > 0` samples a strictly interior grid shifted by that
/// fraction of a cell, giving a disjoint test sample without any RNG.
pub fn lemma8_empirical_constant(
    params: &FluidParams,
    rho_range: (f64, f64),
    rho_bar_range: (f64, f64),
    n_rho: usize,
    n_bar: usize,
    offset: f64,
) -> Result<f64> {
    let (rlo, rhi) = rho_range;
    let (blo, bhi) = rho_bar_range;
    if !(rlo > 0.0 && rhi > rlo && blo > 0.0 && bhi > blo) {
        return Err(Error::Config("lemma8 sampling ranges must be positive and ordered".into()));
    }
    let coord = |i: usize, n: usize| -> f64 {
        if offset == 0.0 {
            i as f64 / (n - 1) as f64
        } else {
            (i as f64 + offset) / n as f64
        }
    };
    let mut sup: f64 = 0.0;
    for i in 0..n_rho {
        let rho = rlo * (rhi / rlo).powf(coord(i, n_rho));
        for jj in 0..n_bar {
            let rho_bar = blo * (bhi / blo).powf(coord(jj, n_bar));
            if rho == rho_bar {
                continue;
            }
            let ratio = params.lemma8_ratio(rho, rho_bar)?;
            if ratio > sup {
                sup = ratio;
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn params(gamma: f64, s: f64) -> FluidParams {
        FluidParams::new(gamma, s, 0.1, 0.0).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(FluidParams::new(1.0, -1.0, 0.1, 0.0).is_err()); // gamma = 1
        assert!(FluidParams::new(2.0, -1.5, 0.1, 0.0).is_err()); // s < -1
        assert!(FluidParams::new(2.0, 0.5, 0.1, 0.0).is_err()); // s + 2 > gamma
        assert!(FluidParams::new(2.0, 0.0, 0.0, 0.0).is_err()); // epsilon = 0
        assert!(FluidParams::new(2.0, 0.0, 0.1, -1.0).is_err()); // nu < 0
        assert!(FluidParams::new(2.0, 0.0, 0.1, 0.1).is_ok());
    }

    #[test]
    fn pressure_examples() {
        let p2 = params(2.0, 0.0);
        assert_eq!(p2.pressure(1.0).unwrap(), 1.0);
        assert_eq!(p2.pressure(3.0).unwrap(), 9.0);
        // oracle: mpmath power(2, 1.4) at 30 digits
        let p14 = params(1.4, -1.0);
        assert_relative_eq!(
            p14.pressure(2.0).unwrap(),
            2.63901582154578851874800394246,
            max_relative = 1e-15
        );
        assert!(p2.pressure(-1.0).is_err());
    }

    #[test]
    fn internal_energy_examples() {
        let p = params(2.0, 0.0);
        assert_eq!(p.h_internal(2.0).unwrap(), 4.0);
        assert_eq!(p.h_rel(1.7, 1.7).unwrap(), 0.0);
        // gamma = 2: h_rel = (rho - rho_bar)^2
        assert_abs_diff_eq!(p.h_rel(2.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(p.h_internal(-0.1).is_err());
    }

    #[test]
    fn relative_pressure_examples() {
        let p2 = params(2.0, 0.0);
        assert_eq!(p2.p_rel(1.3, 1.3).unwrap(), 0.0);
        assert_abs_diff_eq!(p2.p_rel(2.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        // gamma = 3: both sides computed independently
        let p3 = params(3.0, 1.0);
        let p_rel = p3.p_rel(1.5, 1.0).unwrap();
        assert_abs_diff_eq!(p_rel, 0.875, epsilon = 1e-15); // 3.375 - 1 - 3*0.5
        assert_abs_diff_eq!(p_rel, 2.0 * p3.h_rel(1.5, 1.0).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn capillarity_examples() {
        // s = 0: constant capillarity
        let p = params(2.0, 0.0);
        let f = p.capillarity_family(1.7).unwrap();
        assert_abs_diff_eq!(f.k, 2.25, epsilon = 1e-15);
        assert_relative_eq!(f.mu, 1.7f64.powf(1.5), max_relative = 1e-15);
        // lambda = 2 (rho mu' - mu), hand-evaluated
        let hand = 2.0 * (1.7 * f.mu_prime - f.mu);
        assert_relative_eq!(f.lambda, hand, max_relative = 1e-13);

        // s = -1 annihilates lambda
        let pm1 = params(2.0, -1.0);
        let g = pm1.capillarity_family(0.5).unwrap();
        assert_eq!(g.lambda, 0.0);
        assert_eq!(g.mu_double_prime, 0.0);
        assert_relative_eq!(g.mu, 0.5, max_relative = 1e-15);
        assert_relative_eq!(g.k, 2.0, max_relative = 1e-15); // 1/rho at rho = 1/2

        // mu'^2 = rho k at rho = 2, s = 1
        let p1 = params(3.0, 1.0);
        let f1 = p1.capillarity_family(2.0).unwrap();
        assert_relative_eq!(f1.mu_prime, 4.0, max_relative = 1e-15);
        assert_relative_eq!(f1.mu_prime * f1.mu_prime, 2.0 * f1.k, max_relative = 1e-14);

        // singular input
        assert!(pm1.capillarity_family(0.0).is_err());
        assert!(params(2.0, 0.0).capillarity_family(0.0).is_err()); // mu'' singular at s=0
    }

    #[test]
    fn lame_examples() {
        let p = params(2.0, 0.0);
        let (m, l) = p.lame_coefficients(1.0).unwrap();
        assert_eq!((m, l), (1.0, 1.0));

        let pm1 = params(2.0, -1.0);
        let (m, l) = pm1.lame_coefficients(0.7).unwrap();
        assert_relative_eq!(m, 0.7, max_relative = 1e-15);
        assert_eq!(l, 0.0);

        // custom mu_L = rho, lambda_L = -rho: 2 mu_L + lambda_L = rho >= 0
        let custom = LameMode::Custom {
            mu_coef: 1.0,
            mu_exp: 1.0,
            lambda_coef: -1.0,
            lambda_exp: 1.0,
        };
        assert!(FluidParams::with_lame(2.0, 0.0, 0.1, 0.1, custom).is_ok());

        // custom lambda_L = -3 rho violates 2 mu_L + lambda_L >= 0
        let bad = LameMode::Custom {
            mu_coef: 1.0,
            mu_exp: 1.0,
            lambda_coef: -3.0,
            lambda_exp: 1.0,
        };
        assert!(FluidParams::with_lame(2.0, 0.0, 0.1, 0.1, bad).is_err());
    }

    #[test]
    fn lemma8_ratio_examples() {
        // mu' constant when s = -1: ratio vanishes identically
        let pm1 = params(2.0, -1.0);
        assert_eq!(pm1.lemma8_ratio(3.0, 1.0).unwrap(), 0.0);
        assert!(pm1.lemma8_ratio(1.0, 1.0).is_err());

        // s = 0, rho_bar = 1: brute-force supremum over [0.1, 10] is finite
        let p = params(2.0, 0.0);
        let mut sup: f64 = 0.0;
        for i in 0..10_000 {
            let t = i as f64 / 9_999.0;
            let rho = 0.1 * 100.0f64.powf(t);
            if rho == 1.0 {
                continue;
            }
            let r = p.lemma8_ratio(rho, 1.0).unwrap();
            assert!(r >= 0.0);
            sup = sup.max(r);
        }
        assert!(sup.is_finite());
        assert!(sup > 0.0);
    }

    #[test]
    fn identity_grid_checks() {
        // h'' = p'/rho, mu'^2 = rho k, lambda = (s+1) mu, p_rel = (gamma-1) h_rel
        // at 100 log-spaced densities for each reference exponent pair.
        for &(gamma, s) in &[(2.0, 0.0), (2.0, -1.0), (3.0, 1.0), (1.4, -1.0)] {
            let p = params(gamma, s);
            for i in 0..100 {
                let t = i as f64 / 99.0;
                let rho = 1e-3 * 1e6f64.powf(t);
                let hpp = p.h_double_prime(rho).unwrap();
                assert_relative_eq!(hpp, p.dpressure(rho).unwrap() / rho, max_relative = 1e-12);
                let f = p.capillarity_family(rho).unwrap();
                assert_relative_eq!(f.mu_prime * f.mu_prime, rho * f.k, max_relative = 1e-12);
                assert_relative_eq!(f.lambda, (s + 1.0) * f.mu, max_relative = 1e-12);
                // closed-form mu'' check; identically zero at s = -1
                if s > -1.0 {
                    let scaled = f.mu_double_prime * pow_half_integer(rho, 0.5 * (3.0 - s))
                        * 2.0
                        / ((s + 3.0) * (s + 1.0));
                    assert_relative_eq!(scaled, 0.5 * rho, max_relative = 1e-12);
                } else {
                    assert_eq!(f.mu_double_prime, 0.0);
                }
                let rho_bar = 1.0 + t;
                let h_rel = p.h_rel(rho, rho_bar).unwrap();
                let p_rel = p.p_rel(rho, rho_bar).unwrap();
                assert!(h_rel >= 0.0);
                assert!(p_rel >= -1e-15 * h_rel.max(1.0));
                assert_relative_eq!(p_rel, (gamma - 1.0) * h_rel, max_relative = 1e-12, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn lemma8_constant_holds_on_fresh_sample() {
        let p = params(2.0, 0.0);
        let c_train =
            lemma8_empirical_constant(&p, (0.1, 10.0), (0.5, 4.0), 100, 100, 0.0).unwrap();
        // disjoint resample: offset by half a grid cell
        for i in 0..100 {
            let t = (i as f64 + 0.5) / 100.0;
            let rho = 0.1 * 100.0f64.powf(t);
            for jj in 0..100 {
                let u = (jj as f64 + 0.5) / 100.0;
                let rho_bar = 0.5 * 8.0f64.powf(u);
                let lhs = rho * (p.mu_prime_raw(rho) - p.mu_prime_raw(rho_bar)).powi(2);
                let rhs = c_train * p.h_rel_raw(rho, rho_bar);
                assert!(
                    lhs <= rhs * (1.0 + 1e-9),
                    "bound failed at rho={rho}, rho_bar={rho_bar}: {lhs} > {rhs}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn bregman_nonnegativity(
            gamma in 1.05f64..4.0,
            rho in 0.0f64..20.0,
            rho_bar in 0.01f64..20.0,
        ) {
            // s pinned to the admissible edge for any gamma
            let p = FluidParams::new(gamma, -1.0, 0.1, 0.0).unwrap();
            // the Bregman difference cancels terms of this size, so rounding
            // is judged against it
            let scale = p.h_raw(rho) + p.h_raw(rho_bar)
                + (p.h_prime_raw(rho_bar) * (rho - rho_bar)).abs();
            let h_rel = p.h_rel(rho, rho_bar).unwrap();
            prop_assert!(h_rel >= -1e-13 * scale.max(1.0));
            let p_rel = p.p_rel(rho, rho_bar).unwrap();
            prop_assert!((p_rel - (gamma - 1.0) * h_rel).abs()
                <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn drift_potential_consistency(
            s in -1.0f64..1.5,
            rho in 1e-3f64..1e3,
        ) {
            let gamma = (s + 2.0).max(1.5) + 0.5;
            let p = FluidParams::new(gamma, s, 0.1, 0.0).unwrap();
            let f = p.capillarity_family(rho).unwrap();
            prop_assert!((f.mu_prime * f.mu_prime - rho * f.k).abs() <= 1e-12 * (rho * f.k).max(1e-300));
            prop_assert!((f.lambda - (s + 1.0) * f.mu).abs() <= 1e-12 * f.mu.max(1e-300));
        }
    }
}
