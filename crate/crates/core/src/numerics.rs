//! Uniform periodic grids, complex fields, Fourier-multiplier derivatives and
//! line quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary magnitude above which quadrature over the periodic box is flagged
/// as a truncated line integral.
pub const TAIL_WARN_LEVEL: f64 = 1e-10;

/// Uniform periodic grid on `[-L/2, L/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count must be a power of two >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(Self { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Angular wavenumbers in FFT order: `0, 1, ..., n/2-1, -n/2, ..., -1`
    /// times `2π/L`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * PI / self.length;
        let n = self.n as isize;
        (0..n)
            .map(|j| if j < n / 2 { j } else { j - n })
            .map(|m| m as f64 * dk)
            .collect()
    }

    /// Same point count, different length.
    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(self.n, length)
    }
}

pub fn make_grid(n: usize, length: f64) -> Result<GridSpec> {
    GridSpec::new(n, length)
}

/// Complex samples on a [`GridSpec`].
#[derive(Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexField")
            .field("grid", &self.grid)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl ComplexField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "field has {} samples but grid has {}",
                values.len(),
                grid.n()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("field contains non-finite samples".into()));
        }
        Ok(Self { grid, values })
    }

    /// Construct without the finiteness scan. Used by steppers, which check
    /// finiteness themselves at a controlled point.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![Complex64::new(0.0, 0.0); grid.n()])
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> Complex64) -> Self {
        Self::from_raw(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Index of the sample with the largest modulus.
    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        let mut best_val = -1.0;
        for (j, v) in self.values.iter().enumerate() {
            let a = v.norm_sqr();
            if a > best_val {
                best_val = a;
                best = j;
            }
        }
        best
    }

    /// Largest modulus among the first and last sample (the periodic seam).
    pub fn boundary_magnitude(&self) -> f64 {
        self.values[0].norm().max(self.values[self.grid.n() - 1].norm())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Discrete L2 norm (with quadrature weight).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.spacing()).sqrt()
    }

    /// `||self - other|| / ||other||`, with 0/0 guarded to 0.
    pub fn relative_l2_distance(&self, other: &Self) -> f64 {
        let diff = self.zip_with(other, |a, b| a - b).l2_norm();
        let reference = other.l2_norm();
        if reference == 0.0 {
            if diff == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            diff / reference
        }
    }
}

impl std::ops::Add for &ComplexField {
    type Output = ComplexField;
    fn add(self, rhs: Self) -> ComplexField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for &ComplexField {
    type Output = ComplexField;
    fn sub(self, rhs: Self) -> ComplexField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

/// Cached forward/inverse transforms and wavenumbers for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
            k: grid.wavenumbers(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/n` normalisation.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let s = 1.0 / self.grid.n() as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// Multiply the spectrum of `buf` by `m(k)` in place.
    pub fn apply_multiplier_in_place(&self, buf: &mut [Complex64], m: impl Fn(f64) -> Complex64) {
        self.forward_in_place(buf);
        for (v, &k) in buf.iter_mut().zip(&self.k) {
            *v *= m(k);
        }
        self.inverse_in_place(buf);
    }

    pub fn apply_multiplier(&self, f: &ComplexField, m: impl Fn(f64) -> Complex64) -> ComplexField {
        let mut buf = f.values().to_vec();
        self.apply_multiplier_in_place(&mut buf, m);
        ComplexField::from_raw(self.grid, buf)
    }

    pub fn second_derivative(&self, f: &ComplexField) -> ComplexField {
        self.apply_multiplier(f, |k| Complex64::new(-k * k, 0.0))
    }

    /// First derivative; the Nyquist mode is zeroed.
    pub fn first_derivative(&self, f: &ComplexField) -> ComplexField {
        let mut buf = f.values().to_vec();
        self.first_derivative_in_place(&mut buf);
        ComplexField::from_raw(self.grid, buf)
    }

    pub fn first_derivative_in_place(&self, buf: &mut [Complex64]) {
        let nyquist = self.grid.n() / 2;
        self.forward_in_place(buf);
        for (j, (v, &k)) in buf.iter_mut().zip(&self.k).enumerate() {
            *v = if j == nyquist { Complex64::new(0.0, 0.0) } else { *v * Complex64::new(0.0, k) };
        }
        self.inverse_in_place(buf);
    }

    /// Band-limited (trigonometric) interpolation of `f` at arbitrary
    /// positions, taken modulo the period. The Nyquist mode is split evenly
    /// between `±n/2` so real data interpolates to real values.
    pub fn interpolate(&self, f: &ComplexField, at: &[f64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let mut coeffs = f.values().to_vec();
        self.forward_in_place(&mut coeffs);
        let inv_n = 1.0 / n as f64;
        let x0 = self.grid.point(0);
        let nyq = n / 2;
        at.iter()
            .map(|&x| {
                let s = x - x0;
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, (&c, &k)) in coeffs.iter().zip(&self.k).enumerate() {
                    if j == nyq {
                        acc += c * Complex64::new((k * s).cos(), 0.0);
                    } else {
                        acc += c * Complex64::from_polar(1.0, k * s);
                    }
                }
                acc * inv_n
            })
            .collect()
    }
}

pub fn second_derivative(f: &ComplexField) -> ComplexField {
    Spectral::new(*f.grid()).second_derivative(f)
}

/// Result of a periodic line quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineIntegral {
    pub value: Complex64,
    pub boundary_magnitude: f64,
    /// Set when the integrand has not decayed at the seam; the periodic sum
    /// then no longer approximates the integral over the real line.
    pub tail_warning: bool,
}

/// `spacing * Σ f_j`, spectrally accurate for smooth periodic integrands.
pub fn integrate_line(f: &ComplexField) -> LineIntegral {
    let sum: Complex64 = f.values().iter().sum();
    let boundary_magnitude = f.boundary_magnitude();
    LineIntegral {
        value: sum * f.grid().spacing(),
        boundary_magnitude,
        tail_warning: boundary_magnitude > TAIL_WARN_LEVEL,
    }
}

/// `∫ sech(X) cos(bX) dX = π / cosh(πb/2)`.
pub fn sech_cos_integral(b: f64) -> f64 {
    PI / (0.5 * PI * b).cosh()
}

/// `∫ sech(X) tanh(X) sin(bX) dX = bπ / cosh(πb/2)` (by parts from
/// [`sech_cos_integral`]).
pub fn sech_tanh_sin_integral(b: f64) -> f64 {
    b * PI / (0.5 * PI * b).cosh()
}

pub(crate) fn sech(x: f64) -> f64 {
    // cosh overflows near 710; sech underflows gracefully to zero there.
    if x.abs() > 700.0 { 0.0 } else { 1.0 / x.cosh() }
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = a.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    w
}
