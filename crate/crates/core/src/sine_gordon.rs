//! Direct simulation of the driven, damped sine-Gordon equation
//!
//! ```text
//! u_tt - u_xx + sin u = ε³ f cos S - ε³ μ u_t,   S = kx + ωt - ε⁴t²/2
//! ```
//!
//! and comparison of its demodulated envelope with the original-frame
//! envelope equation through `ζ = √(2ω) ξ₁`, `ξ₁ = ε(kt + ωx)`,
//! `τ = ε²t`, `A = 2√ω Ψ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sine_gordon_scaling, ForcingSpec, ModelSpec, SineGordonScaling};
use crate::numerics::{make_grid, ComplexField, GridSpec, Spectral};
use crate::solvers::SplitStep;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgParams {
    pub epsilon: f64,
    pub k: f64,
    /// Drive amplitude `f`.
    pub f: f64,
    /// Damping `μ`.
    #[serde(default)]
    pub mu: f64,
}

impl SgParams {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(Error::InvalidArgument(format!("epsilon must be in (0, 0.5], got {}", self.epsilon)));
        }
        if !(self.f >= 0.0 && self.mu >= 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidArgument("need finite k, f >= 0, mu >= 0".into()));
        }
        if self.k != 0.0 {
            let points_per_wavelength = 2.0 * PI / (self.k.abs() * grid.spacing());
            if points_per_wavelength < 16.0 {
                return Err(Error::InvalidArgument(format!(
                    "grid resolves the carrier with {points_per_wavelength:.1} points per wavelength, need >= 16"
                )));
            }
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        (self.k * self.k + 1.0).sqrt()
    }

    /// Chirp rate of the drive phase, `ε⁴`.
    pub fn chirp(&self) -> f64 {
        self.epsilon.powi(4)
    }

    /// Carrier phase `S(x, t)`.
    pub fn phase(&self, x: f64, t: f64) -> f64 {
        self.k * x + self.omega() * t - 0.5 * self.chirp() * t * t
    }

    /// Instantaneous carrier frequency `∂_t S = ω - ε⁴t`.
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.omega() - self.chirp() * t
    }
}

/// Field, velocity and time of a sine-Gordon run.
#[derive(Debug, Clone)]
pub struct SgState {
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
    pub t: f64,
    pub params: SgParams,
    pub grid: GridSpec,
}

impl SgState {
    pub fn new(u: Vec<f64>, u_t: Vec<f64>, t: f64, params: SgParams, grid: GridSpec) -> Result<Self> {
        params.validate(&grid)?;
        if u.len() != grid.n() || u_t.len() != grid.n() {
            return Err(Error::InvalidArgument("state length does not match grid".into()));
        }
        if u.iter().chain(&u_t).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("state contains non-finite values".into()));
        }
        Ok(Self { u, u_t, t, params, grid })
    }

    /// `u = ε(A e^{iS} + c.c.)` with `u_t` from the carrier frequency and the
    /// transport law `∂_t A = (k/ω) ∂_x A`.
    pub fn from_envelope(envelope: &ComplexField, t: f64, params: SgParams) -> Result<Self> {
        let grid = *envelope.grid();
        let sp = Spectral::new(grid);
        let ax = sp.first_derivative(envelope);
        let w = params.instantaneous_frequency(t);
        let drift = params.k / params.omega();
        let eps = params.epsilon;
        let mut u = Vec::with_capacity(grid.n());
        let mut ut = Vec::with_capacity(grid.n());
        for (j, x) in grid.points().into_iter().enumerate() {
            let carrier = Complex64::from_polar(1.0, params.phase(x, t));
            let a = envelope.values()[j];
            u.push(2.0 * eps * (a * carrier).re);
            let da = Complex64::new(0.0, w) * a + drift * ax.values()[j];
            ut.push(2.0 * eps * (da * carrier).re);
        }
        Self::new(u, ut, t, params, grid)
    }

    /// `∫(u_t²/2 + u_x²/2 + 1 - cos u) dx`.
    pub fn energy(&self) -> f64 {
        let sp = Spectral::new(self.grid);
        let ux = sp.first_derivative(&real_field(&self.grid, &self.u));
        let dx = self.grid.spacing();
        self.u
            .iter()
            .zip(&self.u_t)
            .zip(ux.values())
            .map(|((&u, &v), d)| 0.5 * v * v + 0.5 * d.re * d.re + (1.0 - u.cos()))
            .sum::<f64>()
            * dx
    }
}

fn real_field(grid: &GridSpec, u: &[f64]) -> ComplexField {
    ComplexField::from_raw(*grid, u.iter().map(|&v| Complex64::new(v, 0.0)).collect())
}

/// Kick-drift-kick (velocity Verlet / leapfrog) integrator with spectral
/// `u_xx`; the damping term is taken implicitly in each half kick.
#[derive(Debug, Clone)]
pub struct SgStepper {
    spectral: Spectral,
    dt: f64,
    x: Vec<f64>,
    force: Vec<f64>,
    buf: Vec<Complex64>,
}

impl SgStepper {
    pub fn new(state: &SgState, dt: f64) -> Result<Self> {
        let dx = state.grid.spacing();
        if !(dt > 0.0 && dt < dx) {
            return Err(Error::Cfl { dt, dx });
        }
        let spectral = Spectral::new(state.grid);
        let n = state.grid.n();
        let mut s = Self {
            spectral,
            dt,
            x: state.grid.points(),
            force: vec![0.0; n],
            buf: vec![Complex64::new(0.0, 0.0); n],
        };
        s.compute_force(&state.u, state.t, &state.params);
        Ok(s)
    }

    /// Conservative force plus drive: `u_xx - sin u + ε³ f cos S`.
    fn compute_force(&mut self, u: &[f64], t: f64, p: &SgParams) {
        for (b, &v) in self.buf.iter_mut().zip(u) {
            *b = Complex64::new(v, 0.0);
        }
        self.spectral.apply_multiplier_in_place(&mut self.buf, |k| Complex64::new(-k * k, 0.0));
        let drive = p.epsilon.powi(3) * p.f;
        for j in 0..u.len() {
            let mut f = self.buf[j].re - u[j].sin();
            if drive != 0.0 {
                f += drive * p.phase(self.x[j], t).cos();
            }
            self.force[j] = f;
        }
    }

    pub fn step(&mut self, state: &mut SgState) -> Result<()> {
        let h = self.dt;
        let gamma = state.params.epsilon.powi(3) * state.params.mu;
        let damp = 1.0 / (1.0 + 0.5 * gamma * h);
        for j in 0..state.u.len() {
            state.u_t[j] = (state.u_t[j] + 0.5 * h * self.force[j]) * damp;
            state.u[j] += h * state.u_t[j];
        }
        state.t += h;
        let params = state.params;
        self.compute_force(&state.u, state.t, &params);
        for j in 0..state.u.len() {
            state.u_t[j] = (state.u_t[j] + 0.5 * h * self.force[j]) * damp;
        }
        if state.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time: state.t });
        }
        Ok(())
    }
}

/// One step of the sine-Gordon integrator.
pub fn sg_step(state: &SgState, dt: f64) -> Result<SgState> {
    let mut s = state.clone();
    SgStepper::new(state, dt)?.step(&mut s)?;
    Ok(s)
}

/// A recorded field `u(x, t)`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

/// Spatially demodulate one snapshot: `u e^{-iS}/ε`, then a sharp cutoff
/// keeping `|q| < |k|`, half-way to the image at `-2k`.
pub fn demodulate_snapshot(snap: &Snapshot, grid: &GridSpec, params: &SgParams) -> ComplexField {
    let sp = Spectral::new(*grid);
    demodulate_with(&sp, snap, params)
}

fn demodulate_with(sp: &Spectral, snap: &Snapshot, params: &SgParams) -> ComplexField {
    let grid = *sp.grid();
    let inv_eps = 1.0 / params.epsilon;
    let mut buf: Vec<Complex64> = grid
        .points()
        .iter()
        .zip(&snap.u)
        .map(|(&x, &u)| Complex64::from_polar(u * inv_eps, -params.phase(x, snap.t)))
        .collect();
    let cutoff = params.k.abs();
    sp.apply_multiplier_in_place(&mut buf, |q| {
        if q.abs() < cutoff { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
    });
    ComplexField::from_raw(grid, buf)
}

pub const MIN_HISTORY_PERIODS: usize = 4;

/// Envelope `A(x, t_c)` at the centre `t_c` of `history`.
///
/// Each snapshot is spatially demodulated ([`demodulate_snapshot`]), shifted
/// into the frame moving with the group velocity `-k/ω`, and the snapshots
/// inside the largest whole number of carrier periods centred on `t_c` are
/// averaged (trapezoid in time), which nulls temporal content at the image
/// frequency `2ω`.
///
/// The history must be uniformly sampled and span at least
/// [`MIN_HISTORY_PERIODS`] carrier periods.
pub fn demodulate_envelope(history: &[Snapshot], grid: &GridSpec, params: &SgParams) -> Result<ComplexField> {
    if history.is_empty() {
        return Err(Error::InsufficientHistory("empty history".into()));
    }
    let omega = params.omega();
    let period = 2.0 * PI / omega;
    let t0 = history[0].t;
    let t1 = history[history.len() - 1].t;
    let periods = ((t1 - t0) / period + 1e-9).floor();
    if periods < MIN_HISTORY_PERIODS as f64 {
        return Err(Error::InsufficientHistory(format!(
            "history spans {:.3}, need {MIN_HISTORY_PERIODS} carrier periods ({:.3})",
            t1 - t0,
            MIN_HISTORY_PERIODS as f64 * period
        )));
    }
    let tc = 0.5 * (t0 + t1);
    let sp = Spectral::new(*grid);
    let drift = -params.k / omega;
    let half = 0.5 * periods * period;
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.n()];
    let mut weight_sum = 0.0;
    let dt = if history.len() > 1 { (t1 - t0) / (history.len() - 1) as f64 } else { 0.0 };
    for snap in history {
        let off = snap.t - tc;
        if off.abs() > half + 1e-9 * period {
            continue;
        }
        // Trapezoid weights over [-T/2, T/2]; endpoints half-weighted.
        let w = if (off.abs() - half).abs() < 0.5 * dt.max(1e-12) { 0.5 } else { 1.0 };
        let env = demodulate_with(&sp, snap, params);
        // Envelope moves with velocity `drift`: A(x, t) = A_c(x - drift·off).
        let shifted = sp.apply_multiplier(&env, |q| Complex64::from_polar(1.0, q * drift * off));
        for (a, v) in acc.iter_mut().zip(shifted.values()) {
            *a += v * w;
        }
        weight_sum += w;
    }
    if weight_sum == 0.0 {
        return Err(Error::InsufficientHistory("no snapshots inside the averaging window".into()));
    }
    Ok(ComplexField::from_raw(*grid, acc.into_iter().map(|v| v / weight_sum).collect()))
}

/// Relative L2 mismatch between a demodulated envelope on the `x` grid at
/// time `t` and the original-frame solution `Ψ(τ, ·)` mapped by
/// `A(x) = 2√ω Ψ(τ, √(2ω) ε (kt + ωx))`.
pub fn compare_with_model(
    envelope: &ComplexField,
    t: f64,
    psi: &ComplexField,
    tau: f64,
    params: &SgParams,
    scaling: &SineGordonScaling,
) -> Result<f64> {
    let eps = params.epsilon;
    if (tau - eps * eps * t).abs() > 1e-9 * (1.0 + tau.abs()) {
        return Err(Error::FrameMismatch(format!("model time tau = {tau} does not match eps^2 t = {}", eps * eps * t)));
    }
    let zeta_period = scaling.zeta_scale * eps * scaling.omega * envelope.grid().length();
    if (zeta_period - psi.grid().length()).abs() > 1e-9 * zeta_period {
        return Err(Error::FrameMismatch(format!(
            "x period maps to zeta length {zeta_period}, model grid has {}",
            psi.grid().length()
        )));
    }
    let zetas: Vec<f64> = envelope
        .grid()
        .points()
        .iter()
        .map(|&x| scaling.zeta_scale * eps * (params.k * t + scaling.omega * x))
        .collect();
    let model_vals = Spectral::new(*psi.grid()).interpolate(psi, &zetas);
    let model = ComplexField::from_raw(*envelope.grid(), model_vals.iter().map(|v| v * scaling.amplitude_scale).collect());
    Ok(envelope.relative_l2_distance(&model))
}

/// Settings for an end-to-end envelope check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeCheck {
    pub params: SgParams,
    /// Initial envelope `Ψ₀(ζ) = amplitude · sech(ζ)`.
    pub psi_amplitude: f64,
    /// Final time in units of `1/ε²`.
    pub rescaled_time: f64,
    /// Nominal `ζ` period; adjusted so the carrier is periodic in `x`.
    pub zeta_length: f64,
    pub zeta_points: usize,
    /// Target `x` spacing (rounded to a power-of-two point count).
    pub dx: f64,
    pub dt: f64,
    pub dtau: f64,
}

impl EnvelopeCheck {
    pub fn standard(epsilon: f64) -> Self {
        Self {
            params: SgParams { epsilon, k: 0.5, f: 0.2 * 8.0 * 1.25f64.powf(0.75), mu: 0.0 },
            psi_amplitude: 0.5,
            rescaled_time: 0.5,
            zeta_length: 40.0,
            zeta_points: 256,
            dx: 0.25,
            dt: 0.02,
            dtau: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub epsilon: f64,
    /// Mismatch at `t = 0`: a pure demodulation/interpolation check.
    pub initial_mismatch: f64,
    pub final_mismatch: f64,
    pub t_end: f64,
    pub x_points: usize,
    pub x_length: f64,
}

/// Run the sine-Gordon equation and the original-frame envelope equation
/// from matched data and compare the envelopes at `t = rescaled_time/ε²`.
pub fn run_envelope_check(cfg: &EnvelopeCheck) -> Result<EnvelopeReport> {
    let p = cfg.params;
    let eps = p.epsilon;
    let scaling = sine_gordon_scaling(p.k, p.f)?;
    let omega = scaling.omega;
    let x_per_zeta = 1.0 / (scaling.zeta_scale * eps * omega);
    // Carrier periodic in x: k L_x = 2π m.
    let nominal = cfg.zeta_length * x_per_zeta;
    let m = (p.k * nominal / (2.0 * PI)).round().max(1.0);
    let x_length = 2.0 * PI * m / p.k;
    let zeta_length = x_length / x_per_zeta;
    let x_points = ((x_length / cfg.dx).ceil() as usize).next_power_of_two();
    let xg = make_grid(x_points, x_length)?;
    let zg = make_grid(cfg.zeta_points, zeta_length)?;

    let psi0 = ComplexField::from_fn(zg, |z| Complex64::new(cfg.psi_amplitude / z.cosh(), 0.0));
    let a0 = ComplexField::from_fn(xg, |x| {
        let zeta = scaling.zeta_scale * eps * omega * x;
        Complex64::new(scaling.amplitude_scale * cfg.psi_amplitude / zeta.cosh(), 0.0)
    });

    let t_end = cfg.rescaled_time / (eps * eps);
    let period = 2.0 * PI / omega;
    let mut state = SgState::from_envelope(&a0, 0.0, p)?;
    // A whole number of steps per carrier period.
    let per_period = (period / cfg.dt).ceil() as usize;
    let dt = period / per_period as f64;
    let mut stepper = SgStepper::new(&state, dt)?;

    // No history is centred on t = 0, so the initial check is the pure
    // spatial demodulation.
    let initial_env = demodulate_snapshot(&Snapshot { t: 0.0, u: state.u.clone() }, &xg, &p);
    let initial_mismatch = compare_with_model(&initial_env, 0.0, &psi0, 0.0, &p, &scaling)?;

    // Step to the start of the averaging window, then record it.
    let window = MIN_HISTORY_PERIODS * per_period;
    let half = window / 2;
    let centre = ((t_end / dt).round() as usize).max(half);
    let mut history = Vec::with_capacity(window + 1);
    for j in 1..=centre - half + window {
        stepper.step(&mut state)?;
        if j >= centre - half {
            history.push(Snapshot { t: state.t, u: state.u.clone() });
        }
    }
    let env = demodulate_envelope(&history, &xg, &p)?;
    let t_c = 0.5 * (history[0].t + history[history.len() - 1].t);

    // Envelope model to τ = ε² t_c.
    let tau_end = eps * eps * t_c;
    let model = ModelSpec::original(ForcingSpec::constant(scaling.forcing, 0.0), p.mu);
    let steps = (tau_end / cfg.dtau).ceil() as usize;
    let dtau = tau_end / steps as f64;
    let mut split = SplitStep::new(model, Spectral::new(zg), dtau)?;
    let mut u = psi0.into_values();
    for j in 0..steps {
        split.step(&mut u, j as f64 * dtau)?;
    }
    let psi = ComplexField::new(zg, u)?;
    let final_mismatch = compare_with_model(&env, t_c, &psi, tau_end, &p, &scaling)?;
    Ok(EnvelopeReport { epsilon: eps, initial_mismatch, final_mismatch, t_end: t_c, x_points, x_length })
}
