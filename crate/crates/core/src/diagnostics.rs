//! Conserved quantities, soliton parameter estimation, lock-angle tracking and
//! power-law fits.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{soliton_field, ForcingSpec, SolitonParams};
use crate::numerics::{integrate_line, wrap_angle, ComplexField, Spectral};

/// Relative L2 distance above which a field is not treated as a soliton.
pub const SOLITON_RESIDUAL_LIMIT: f64 = 0.2;

/// Standard deviation (rad) of the unwrapped lock angle below which a run
/// counts as phase locked.
pub const LOCK_STD_THRESHOLD: f64 = 0.5;

pub fn mass(f: &ComplexField) -> f64 {
    f.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * f.grid().spacing()
}

/// `∫ (∂_z f) f̄ dz`.
pub fn momentum(f: &ComplexField) -> Complex64 {
    momentum_with(&Spectral::new(*f.grid()), f)
}

pub fn momentum_with(sp: &Spectral, f: &ComplexField) -> Complex64 {
    let fz = sp.first_derivative(f);
    integrate_line(&fz.zip_with(f, |a, b| a * b.conj())).value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extraction {
    pub params: SolitonParams,
    /// Relative L2 distance between the (background-corrected) field and the
    /// reconstructed soliton.
    pub residual: f64,
    /// Spatially uniform background removed before taking moments.
    pub background: Complex64,
}

/// Mean of the samples in the outer tenth of the box on each side.
fn uniform_background(f: &ComplexField) -> Complex64 {
    let n = f.grid().n();
    let edge = (n / 10).max(1);
    let v = f.values();
    let sum: Complex64 = v[..edge].iter().chain(&v[n - edge..]).sum();
    sum / (2 * edge) as f64
}

/// Invert the one-soliton ansatz.
///
/// A uniform background (estimated from the box edges) is subtracted first;
/// uniform forcing drives one. Then `η = M/4`, `κ = -Im P/(8η)`, the centre
/// `z*` is the `|f|²`-weighted centroid taken around the peak, `V = -2ηz*`,
/// and `Ω = π/2 - 2κz* - arg f(z*)` with the phase linearly interpolated
/// between the two samples bracketing `z*`.
pub fn extract_soliton_params(f: &ComplexField) -> Result<Extraction> {
    extract_soliton_params_with(&Spectral::new(*f.grid()), f)
}

pub fn extract_soliton_params_with(sp: &Spectral, f: &ComplexField) -> Result<Extraction> {
    let g = *f.grid();
    let background = uniform_background(f);
    let field = f.map(|v| v - background);
    let m = mass(&field);
    if !(m > 0.0) {
        return Err(Error::NonSoliton { residual: f64::INFINITY });
    }
    let eta = 0.25 * m;
    let kappa = -momentum_with(sp, &field).im / (8.0 * eta);

    let peak = g.point(field.argmax_abs());
    let length = g.length();
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, v) in field.values().iter().enumerate() {
        let w = v.norm_sqr();
        let z = peak + wrap_periodic(g.point(j) - peak, length);
        num += w * z;
        den += w;
    }
    let center = wrap_periodic(num / den, length);

    let dz = g.spacing();
    let pos = (center - g.point(0)) / dz;
    let j0 = pos.floor() as isize;
    let frac = pos - j0 as f64;
    let n = g.n() as isize;
    let a = field.values()[j0.rem_euclid(n) as usize];
    let b = field.values()[(j0 + 1).rem_euclid(n) as usize];
    let pa = a.arg();
    let pb = pa + wrap_angle(b.arg() - pa);
    let phase = pa + frac * (pb - pa);
    let omega = wrap_angle(FRAC_PI_2 - 2.0 * kappa * center - phase);

    let params = SolitonParams { eta, kappa, omega, v: -2.0 * eta * center };
    let recon = soliton_field(&params, &g)?;
    let residual = field.relative_l2_distance(&recon);
    if !(residual <= SOLITON_RESIDUAL_LIMIT) {
        return Err(Error::NonSoliton { residual });
    }
    Ok(Extraction { params, residual, background })
}

fn wrap_periodic(x: f64, length: f64) -> f64 {
    let w = (x + 0.5 * length).rem_euclid(length) - 0.5 * length;
    if w >= 0.5 * length { w - length } else { w }
}

/// `α = arg𝓕 + σ - κV/η + Ω`, wrapped to `(-π, π]`.
pub fn lock_angle(p: &SolitonParams, sigma: f64, forcing: &ForcingSpec) -> f64 {
    wrap_angle(forcing.phase + sigma - p.kappa * p.v / p.eta + p.omega)
}

/// Undo `2π` jumps in a wrapped angle series.
pub fn unwrap_angles(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &a in wrapped {
        if let Some(p) = prev {
            let d = a - p;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(a + offset);
        prev = Some(a);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockVerdict {
    pub locked: bool,
    pub mean: f64,
    pub std_dev: f64,
    pub max_excursion: f64,
}

/// Sample standard deviation of the unwrapped lock angle; locked when below
/// [`LOCK_STD_THRESHOLD`]. `max_excursion` is measured from `reference`, or
/// from the mean when none is given.
pub fn lock_verdict(wrapped: &[f64], reference: Option<f64>) -> LockVerdict {
    let u = unwrap_angles(wrapped);
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = if u.len() > 1 { u.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let std_dev = var.sqrt();
    let max_excursion = match reference {
        Some(r) => wrapped.iter().map(|&a| wrap_angle(a - r).abs()).fold(0.0, f64::max),
        None => u.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max),
    };
    LockVerdict { locked: std_dev < LOCK_STD_THRESHOLD, mean: wrap_angle(mean), std_dev, max_excursion }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares line through `(ln t, ln v)` for samples inside `window`
/// (inclusive); the last decade of `times` when `window` is `None`.
pub fn fit_power_law(times: &[f64], values: &[f64], window: Option<(f64, f64)>) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    let window = match window {
        Some(w) => w,
        None => last_decade(times)?,
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= window.0 && t <= window.1 {
            if !(v > 0.0 && t > 0.0) {
                return Err(Error::Fit(format!("non-positive sample (t={t}, v={v}) in fit window")));
            }
            xs.push(t.ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 10 {
        return Err(Error::Fit(format!("need at least 10 samples in window, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("fit window has a single distinct time".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(FitResult { exponent: slope, prefactor: intercept.exp(), r_squared, window, samples: xs.len() })
}

/// `[t_max/10, t_max]`.
pub fn last_decade(times: &[f64]) -> Result<(f64, f64)> {
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(t_max > 0.0) {
        return Err(Error::Fit("no positive times to fit".into()));
    }
    Ok((0.1 * t_max, t_max))
}
