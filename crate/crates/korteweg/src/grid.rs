//! Discrete calculus on the 1-D periodic torus.
//!
//! Fields are real grid functions; derivatives are trigonometric
//! (FFT-based), quadrature is the rectangle rule (spectrally accurate for
//! smooth periodic integrands), and nonlinear products are cut off with the
//! 2/3 rule. Transforms run through `realfft` half-spectrum plans cached on
//! the grid; scratch space lives in a thread-local pool so fields stay
//! immutable and ops are safe to call from any worker.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Uniform periodic grid: nodes `x_j = j L / n`, `j = 0 .. n-1`.
pub struct TorusGrid {
    n: usize,
    length: f64,
    dx: f64,
    /// `k_j = 2 pi j / L` for the half-spectrum bins `j = 0 ..= n/2`.
    wavenumbers: Vec<f64>,
    /// Last half-spectrum bin kept by the 2/3 rule: `floor(n/3)`.
    dealias_cut: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl TorusGrid {
    /// `n` must be even and at least 16; `length > 0`.
    pub fn new(n: usize, length: f64) -> Result<Arc<Self>> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "grid size must be even and >= 16, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Config(format!("grid length must be > 0, got {length}")));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(n);
        let c2r = planner.plan_fft_inverse(n);
        let base = 2.0 * std::f64::consts::PI / length;
        let wavenumbers = (0..=n / 2).map(|j| base * j as f64).collect();
        Ok(Arc::new(Self {
            n,
            length,
            dx: length / n as f64,
            wavenumbers,
            dealias_cut: n / 3,
            r2c,
            c2r,
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    /// Node coordinates.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| j as f64 * self.dx)
    }

    pub fn same_grid(&self, other: &TorusGrid) -> bool {
        self.n == other.n && self.length == other.length
    }

    /// Half-spectrum wavenumbers `2 pi j / L`, `j = 0 ..= n/2`.
    pub(crate) fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub(crate) fn dealias_cut(&self) -> usize {
        self.dealias_cut
    }

    pub(crate) fn spectrum_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Forward transform into `spec` (input is copied; realfft scrambles it).
    pub(crate) fn forward(&self, src: &[f64], spec: &mut [Complex<f64>]) {
        with_scratch(self.n, |ws| {
            ws.real.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut ws.real, spec, &mut ws.fft)
                .expect("r2c transform failed");
        });
    }

    /// Inverse transform with 1/n normalization.
    pub(crate) fn inverse(&self, spec: &mut [Complex<f64>], dst: &mut [f64]) {
        self.c2r
            .process_with_scratch(spec, dst, &mut [])
            .expect("c2r transform failed");
        let scale = 1.0 / self.n as f64;
        for v in dst.iter_mut() {
            *v *= scale;
        }
    }

    /// Spectral derivative of the given order into `dst`, with optional 2/3
    /// dealias mask applied in the same pass. Order 0 is the plain mask.
    pub fn deriv_slice_into(&self, src: &[f64], order: u32, dealias: bool, dst: &mut [f64]) {
        assert!(order <= 4, "derivative order must be 0..=4");
        assert_eq!(src.len(), self.n);
        assert_eq!(dst.len(), self.n);
        with_spec(self.n, |spec| {
            self.forward(src, spec);
            let cut = if dealias { self.dealias_cut } else { self.n / 2 };
            for (j, bin) in spec.iter_mut().enumerate() {
                if j > cut {
                    *bin = Complex::new(0.0, 0.0);
                    continue;
                }
                let k = self.wavenumbers[j];
                match order {
                    0 => {}
                    1 => *bin *= Complex::new(0.0, k),
                    2 => *bin *= -k * k,
                    3 => *bin *= Complex::new(0.0, -k * k * k),
                    4 => *bin *= k * k * k * k,
                    _ => unreachable!(),
                }
            }
            // odd derivatives of the unmatched Nyquist mode are set to zero
            if order % 2 == 1 && !dealias {
                spec[self.n / 2] = Complex::new(0.0, 0.0);
            }
            self.inverse(spec, dst);
        });
    }

    /// Half-spectrum of a real slice (bins `0 ..= n/2`), for tests and
    /// diagnostics.
    pub fn spectrum(&self, src: &[f64]) -> Vec<Complex<f64>> {
        let mut spec = vec![Complex::new(0.0, 0.0); self.spectrum_len()];
        self.forward(src, &mut spec);
        let scale = 1.0 / self.n as f64;
        for b in spec.iter_mut() {
            *b *= scale;
        }
        spec
    }

    pub fn integrate_slice(&self, src: &[f64]) -> f64 {
        self.dx * src.iter().sum::<f64>()
    }
}

/// Neumaier-compensated mean; used where a tendency must be exactly
/// mean-free so that conserved integrals do not pick up a rounding drift.
pub(crate) fn compensated_mean(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / xs.len() as f64
}

struct GridScratch {
    real: Vec<f64>,
    spec: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
}

thread_local! {
    static SCRATCH: RefCell<HashMap<usize, GridScratch>> = RefCell::new(HashMap::new());
}

fn with_scratch<R>(n: usize, f: impl FnOnce(&mut GridScratch) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut map = cell.borrow_mut();
        let ws = map.entry(n).or_insert_with(|| GridScratch {
            real: vec![0.0; n],
            spec: vec![Complex::new(0.0, 0.0); n / 2 + 1],
            fft: vec![Complex::new(0.0, 0.0); 2 * n],
        });
        f(ws)
    })
}

/// Borrow the spectral buffer separately from the rest of the scratch; the
/// forward/inverse helpers only touch `real` and `fft`.
fn with_spec<R>(n: usize, f: impl FnOnce(&mut [Complex<f64>]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut map = cell.borrow_mut();
        let ws = map.entry(n).or_insert_with(|| GridScratch {
            real: vec![0.0; n],
            spec: vec![Complex::new(0.0, 0.0); n / 2 + 1],
            fft: vec![Complex::new(0.0, 0.0); 2 * n],
        });
        let mut spec = std::mem::take(&mut ws.spec);
        drop(map);
        let out = f(&mut spec);
        let mut map = cell.borrow_mut();
        if let Some(ws) = map.get_mut(&n) {
            ws.spec = spec;
        }
        out
    })
}

/// A real-valued periodic grid function.
#[derive(Clone)]
pub struct Field {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("n", &self.grid.n())
            .field("min", &self.min())
            .field("max", &self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .finish()
    }
}

impl Field {
    pub fn new(grid: Arc<TorusGrid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "field length must match grid");
        Self { grid, values }
    }

    pub fn constant(grid: Arc<TorusGrid>, value: f64) -> Self {
        let n = grid.n();
        Self::new(grid, vec![value; n])
    }

    pub fn from_fn(grid: Arc<TorusGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Spectral derivative of order 1..=4; exact for resolved trigonometric
    /// polynomials.
    pub fn deriv(&self, order: u32) -> Field {
        let mut out = vec![0.0; self.len()];
        self.grid.deriv_slice_into(&self.values, order, false, &mut out);
        debug_assert!(out.iter().all(|v| v.is_finite()));
        Field::new(self.grid.clone(), out)
    }

    /// Derivative with the 2/3 mask applied in the same transform.
    pub fn deriv_dealiased(&self, order: u32) -> Field {
        let mut out = vec![0.0; self.len()];
        self.grid.deriv_slice_into(&self.values, order, true, &mut out);
        debug_assert!(out.iter().all(|v| v.is_finite()));
        Field::new(self.grid.clone(), out)
    }

    /// Zero all modes with |wavenumber index| > n/3.
    pub fn dealias(&self) -> Field {
        let mut out = vec![0.0; self.len()];
        self.grid.deriv_slice_into(&self.values, 0, true, &mut out);
        debug_assert!(out.iter().all(|v| v.is_finite()));
        Field::new(self.grid.clone(), out)
    }

    /// `L/n * sum f_j`: the rectangle rule, which on a uniform periodic grid
    /// coincides with the trapezoid rule.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate_slice(&self.values)
    }

    /// `sqrt(integral f^2 dx)`.
    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (self.grid.dx() * s).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert!(self.grid.same_grid(&other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::new(self.grid.clone(), values)
    }

    /// Trigonometric interpolation onto a grid refined by `factor`
    /// (zero-padding in spectral space). Used by quadrature oracles.
    pub fn refine(&self, factor: usize) -> Result<Field> {
        assert!(factor >= 1);
        let n = self.len();
        let fine_grid = TorusGrid::new(n * factor, self.grid.length())?;
        if factor == 1 {
            return Ok(Field::new(fine_grid, self.values.clone()));
        }
        let spec = self.grid.spectrum(&self.values);
        let m = fine_grid.n();
        let mut fine_spec = vec![Complex::new(0.0, 0.0); m / 2 + 1];
        for (j, &b) in spec.iter().enumerate() {
            fine_spec[j] = b * m as f64;
        }
        // the coarse Nyquist bin is shared between +-n/2; splitting it keeps
        // the interpolant real and the grid values exact
        fine_spec[n / 2] *= 0.5;
        if fine_spec[n / 2].im != 0.0 {
            fine_spec[n / 2] = Complex::new(fine_spec[n / 2].re, fine_spec[n / 2].im);
        }
        // realfft requires a purely real Nyquist bin on the fine grid; it is
        // zero here because we only zero-padded
        let mut out = vec![0.0; m];
        // inverse on the fine grid
        let mut planner = RealFftPlanner::<f64>::new();
        let c2r = planner.plan_fft_inverse(m);
        c2r.process(&mut fine_spec, &mut out)
            .expect("refine c2r failed");
        let scale = 1.0 / m as f64;
        for v in out.iter_mut() {
            *v *= scale;
        }
        Ok(Field::new(fine_grid, out))
    }
}
