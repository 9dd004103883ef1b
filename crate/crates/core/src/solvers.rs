//! Time integration: Strang split-step Fourier for the PDE family, classical
//! RK4 for the primary-resonance ODE, and a trajectory runner that records
//! diagnostics at a fixed cadence.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{extract_soliton_params_with, lock_angle, mass, momentum_with};
use crate::error::{Error, Result};
use crate::models::{
    amplitude_scale, map_field_original_to_scaled, ForcingSpec, FrameTerm, ModelKind, ModelSpec,
    SolitonParams, FORCING_FRAME_FACTOR,
};
use crate::numerics::{ComplexField, GridSpec, Spectral};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    pub record_every: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl StepperConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be >= 1".into()));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_start < self.t_end) {
            return Err(Error::InvalidArgument(format!(
                "need t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if kind.is_scaled_frame() && self.t_start <= 0.0 {
            return Err(Error::InvalidArgument("scaled-frame runs need t_start > 0".into()));
        }
        if kind == ModelKind::OdePrimaryResonance && self.t_start < 0.0 {
            return Err(Error::InvalidArgument("ODE runs need t_start >= 0".into()));
        }
        Ok(())
    }

    /// Number of steps, rounding `(t_end - t_start)/dt` to the nearest integer.
    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round().max(1.0) as usize
    }
}

/// Strang split-step integrator for one PDE model on one grid.
///
/// A step is `local(dt/2) ∘ dispersion(dt) ∘ local(dt/2)`. Dispersion is
/// exact in Fourier space. The local half-step is itself the symmetric
/// composition `rotation(h/2) ∘ source(h) ∘ rotation(h/2)`: the cubic term is
/// an exact modulus-preserving phase rotation, and the remaining linear
/// inhomogeneous part (forcing, detuning, damping, frame term) is integrated
/// with coefficients frozen at the half-step midpoint. With the full frame
/// term, whose `z∂_z` part needs a derivative, the source part is advanced by
/// classical RK4 instead.
#[derive(Debug, Clone)]
pub struct SplitStep {
    model: ModelSpec,
    spectral: Spectral,
    dt: f64,
    dispersion: Vec<Complex64>,
    /// Frame-term transport coefficient: `z` tapered to zero at the box edges.
    z: Vec<f64>,
    /// `1 - z'/2` for the skew-symmetric form of `φ + zφ_z`.
    z_diag: Vec<f64>,
    scratch: Vec<Complex64>,
    scratch2: Vec<Complex64>,
    /// Per-point factor `exp(-γ(z) dt/2)` of the edge absorber, if enabled.
    absorber: Option<Vec<f64>>,
    /// Spatially uniform solution carried alongside when the absorber is on,
    /// started from the mean of the outermost samples at the first step.
    background: Option<Complex64>,
}

/// Smooth step from 0 at `t <= 0` to 1 at `t >= 1`, flat to all orders at both ends.
fn smooth_step(t: f64) -> f64 {
    let bump = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (a, b) = (bump(t), bump(1.0 - t));
    if a + b == 0.0 { 0.0 } else { a / (a + b) }
}

/// `z` on `|z| <= 0.6 L/2`, smoothly tapered to zero at `|z| = L/2`, so the
/// coefficient is periodic and smooth.
fn tapered_coordinate(grid: &GridSpec) -> Vec<f64> {
    let half = 0.5 * grid.length();
    let start = 0.6 * half;
    grid.points()
        .iter()
        .map(|&z| z * (1.0 - smooth_step((z.abs() - start) / (half - start))))
        .collect()
}

impl SplitStep {
    pub fn new(model: ModelSpec, spectral: Spectral, dt: f64) -> Result<Self> {
        model.validate()?;
        if !model.kind.is_pde() {
            return Err(Error::InvalidArgument("split-step needs a PDE model".into()));
        }
        // Scaled frame: φ̂' = -ik²φ̂. Original frame: Ψ̂' = +ik²Ψ̂.
        let sign = if model.kind.is_scaled_frame() { -1.0 } else { 1.0 };
        let dispersion = spectral
            .wavenumbers()
            .iter()
            .map(|&k| if model.dispersion { Complex64::from_polar(1.0, sign * k * k * dt) } else { Complex64::new(1.0, 0.0) })
            .collect();
        let z = tapered_coordinate(spectral.grid());
        let mut dz: Vec<Complex64> = z.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spectral.first_derivative_in_place(&mut dz);
        let z_diag = dz.iter().map(|d| 1.0 - 0.5 * d.re).collect();
        let n = spectral.grid().n();
        let zero = Complex64::new(0.0, 0.0);
        Ok(Self { model, spectral, dt, dispersion, z, z_diag, scratch: vec![zero; n], scratch2: vec![zero; n], absorber: None, background: None })
    }

    /// Damp the field as `φ' = -γ(z)φ` in the outer 30% of each half box,
    /// `γ` rising smoothly from 0 to `strength`. Radiation that would wrap
    /// around the periodic box is absorbed instead; `strength = 0` disables.
    pub fn with_absorber(mut self, strength: f64) -> Result<Self> {
        if !(strength.is_finite() && strength >= 0.0) {
            return Err(Error::InvalidArgument(format!("absorber strength must be >= 0, got {strength}")));
        }
        self.background = None;
        if strength == 0.0 {
            self.absorber = None;
            return Ok(self);
        }
        let half = 0.5 * self.spectral.grid().length();
        let start = 0.7 * half;
        let h = 0.5 * self.dt;
        self.absorber = Some(
            self.spectral
                .grid()
                .points()
                .iter()
                .map(|&z| (-strength * smooth_step((z.abs() - start) / (half - start)) * h).exp())
                .collect(),
        );
        Ok(self)
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `u` from `t` to `t + dt`.
    pub fn step(&mut self, u: &mut [Complex64], t: f64) -> Result<()> {
        if self.absorber.is_some() && self.background.is_none() {
            let edge = (u.len() / 20).max(1);
            let sum: Complex64 = u[..edge].iter().chain(&u[u.len() - edge..]).sum();
            self.background = Some(sum / (2 * edge) as f64);
        }
        let h = 0.5 * self.dt;
        self.local(u, t, h);
        self.spectral.forward_in_place(u);
        for (v, m) in u.iter_mut().zip(&self.dispersion) {
            *v *= m;
        }
        self.spectral.inverse_in_place(u);
        self.local(u, t + h, h);
        if u.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { time: t + self.dt });
        }
        Ok(())
    }

    fn rotate(&self, u: &mut [Complex64], h: f64) {
        let g = self.model.nonlinearity;
        if g == 0.0 {
            return;
        }
        // Scaled: φ' = i g|φ|²φ. Original: Ψ' = -i g|Ψ|²Ψ.
        let s = if self.model.kind.is_scaled_frame() { g } else { -g };
        for v in u.iter_mut() {
            *v *= Complex64::from_polar(1.0, s * v.norm_sqr() * h);
        }
    }

    fn local(&mut self, u: &mut [Complex64], t: f64, h: f64) {
        self.evolve_background(t, h);
        self.rotate(u, 0.5 * h);
        self.source(u, t, h);
        self.rotate(u, 0.5 * h);
        if let Some(a) = &self.absorber {
            let bg = self.background.unwrap_or_default();
            for (v, f) in u.iter_mut().zip(a) {
                *v = bg + (*v - bg) * f;
            }
        }
    }

    fn source(&mut self, u: &mut [Complex64], t: f64, h: f64) {
        if self.model.kind.is_scaled_frame() && self.model.active_frame_term() == FrameTerm::Full {
            self.source_rk4(u, t, h);
            return;
        }
        let (c, b) = self.uniform_coefficients(t + 0.5 * h);
        exponential_update(u, c, b, h);
    }

    /// `(c, b)` of the source part `u' = -cu + b` for a spatially uniform
    /// field at time `t`. For the full frame term `φ + zφ_z = φ` here.
    fn uniform_coefficients(&self, t: f64) -> (Complex64, Complex64) {
        let m = self.model;
        if m.kind.is_scaled_frame() {
            let frame = if m.active_frame_term() == FrameTerm::Off { 0.0 } else { 0.25 / t };
            let c = m.scaled_damping(t) + frame;
            (Complex64::new(c, 0.0), I * scaled_forcing(&m.active_forcing(), t))
        } else {
            // Ψ' = -(ν/2 - iτ)Ψ - iF; exact in τ with τ at the midpoint.
            (Complex64::new(0.5 * m.nu, -t), -I * m.forcing.value(t))
        }
    }

    /// Advance the uniform solution the absorber relaxes towards.
    fn evolve_background(&mut self, t: f64, h: f64) {
        if let Some(bg) = self.background {
            let mut v = [bg];
            self.rotate(&mut v, 0.5 * h);
            if self.model.kind.is_scaled_frame() && self.model.active_frame_term() == FrameTerm::Full {
                // Same RK4 as the field, so a uniform field and the background agree.
                let rhs = |y: Complex64, s: f64| {
                    let (c, b) = self.uniform_coefficients(s);
                    b - c * y
                };
                let y = v[0];
                let k1 = rhs(y, t);
                let k2 = rhs(y + k1 * (0.5 * h), t + 0.5 * h);
                let k3 = rhs(y + k2 * (0.5 * h), t + 0.5 * h);
                let k4 = rhs(y + k3 * h, t + h);
                v[0] = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            } else {
                let (c, b) = self.uniform_coefficients(t + 0.5 * h);
                exponential_update(&mut v, c, b, h);
            }
            self.rotate(&mut v, 0.5 * h);
            self.background = Some(v[0]);
        }
    }

    /// RK4 for `φ' = i f(σ) - (1/4σ)(φ + zφ_z) - γ(σ)φ`.
    fn source_rk4(&mut self, u: &mut [Complex64], t: f64, h: f64) {
        let n = u.len();
        let y0 = u.to_vec();
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut stage = y0.clone();
        let weights = [1.0, 2.0, 2.0, 1.0];
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let ts = t + offsets[s] * h;
            if s > 0 {
                let a = offsets[s] * h;
                for j in 0..n {
                    stage[j] = y0[j] + self.scratch[j] * a;
                }
            }
            self.source_rhs(&stage, ts);
            for j in 0..n {
                acc[j] += self.scratch[j] * weights[s];
            }
        }
        for j in 0..n {
            u[j] = y0[j] + acc[j] * (h / 6.0);
        }
    }

    /// Writes the source right-hand side at `y` into `self.scratch`.
    ///
    /// `φ + zφ_z` is evaluated as `(1 - z'/2)φ + ((zφ)_z + zφ_z)/2`; the
    /// bracket is skew-adjoint on the grid, so the transport adds no growth.
    fn source_rhs(&mut self, y: &[Complex64], t: f64) {
        let m = self.model;
        self.scratch.copy_from_slice(y);
        self.spectral.first_derivative_in_place(&mut self.scratch);
        for j in 0..y.len() {
            self.scratch2[j] = y[j] * self.z[j];
        }
        self.spectral.first_derivative_in_place(&mut self.scratch2);
        let d = 0.25 / t;
        let gamma = m.scaled_damping(t);
        let f = I * scaled_forcing(&m.active_forcing(), t);
        for j in 0..y.len() {
            let transport = 0.5 * (self.scratch2[j] + self.z[j] * self.scratch[j]);
            self.scratch[j] = f - d * (self.z_diag[j] * y[j] + transport) - gamma * y[j];
        }
    }
}

/// `𝓕(σ) σ^{-3/4} e^{iσ}`.
pub fn scaled_forcing(f: &ForcingSpec, sigma: f64) -> Complex64 {
    if f.is_zero() {
        return Complex64::new(0.0, 0.0);
    }
    f.value(sigma) * sigma.powf(-0.75) * Complex64::from_polar(1.0, sigma)
}

/// Exact solution of `u' = -c u + b` over `h`.
fn exponential_update(u: &mut [Complex64], c: Complex64, b: Complex64, h: f64) {
    let decay = (-c * h).exp();
    let gain = if c.norm() * h < 1e-8 { b * h * (1.0 - 0.5 * c * h) } else { b * (1.0 - decay) / c };
    for v in u.iter_mut() {
        *v = *v * decay + gain;
    }
}

/// One Strang step of `phi` from `t` to `t + dt`.
pub fn strang_step(phi: &ComplexField, t: f64, dt: f64, m: &ModelSpec) -> Result<ComplexField> {
    let mut s = SplitStep::new(*m, Spectral::new(*phi.grid()), dt)?;
    let mut u = phi.values().to_vec();
    s.step(&mut u, t)?;
    ComplexField::new(*phi.grid(), u)
}

fn ode_rhs(psi: Complex64, tau: f64, m: &ModelSpec) -> Complex64 {
    // From iψ' + (g|ψ|² - τ)ψ = F.
    I * (m.nonlinearity * psi.norm_sqr() - tau) * psi - I * m.forcing.value(tau)
}

/// Classical RK4 step for `iψ' + (|ψ|² - τ)ψ = F`.
pub fn rk4_step(psi: Complex64, tau: f64, dtau: f64, m: &ModelSpec) -> Result<Complex64> {
    if m.kind != ModelKind::OdePrimaryResonance {
        return Err(Error::InvalidArgument("rk4_step needs the ODE model".into()));
    }
    let h = dtau;
    let k1 = ode_rhs(psi, tau, m);
    let k2 = ode_rhs(psi + k1 * (0.5 * h), tau + 0.5 * h, m);
    let k3 = ode_rhs(psi + k2 * (0.5 * h), tau + 0.5 * h, m);
    let k4 = ode_rhs(psi + k3 * h, tau + h, m);
    let next = psi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if !(next.re.is_finite() && next.im.is_finite()) {
        return Err(Error::NonFinite { time: tau + h });
    }
    Ok(next)
}

#[derive(Debug, Clone)]
pub enum InitialState {
    Field(ComplexField),
    Scalar(Complex64),
}

#[derive(Debug, Clone)]
pub enum FinalState {
    Field(ComplexField),
    Scalar(Complex64),
}

/// One row of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    /// Integration time: `σ` for scaled-frame models, `τ` otherwise.
    pub time: f64,
    pub tau: f64,
    pub mass: f64,
    pub momentum: Complex64,
    pub peak_amp: f64,
    /// Soliton parameters in the scaled frame, when the field is soliton-like.
    pub params: Option<SolitonParams>,
    pub alpha: Option<f64>,
    /// Forcing amplitude in the frame of the run.
    pub forcing_amp: f64,
    /// Peak of `|Ψ|` in the original frame.
    pub psi_peak: f64,
    /// `|F|` in the original frame.
    pub psi_forcing: f64,
    /// ODE runs only: the state itself.
    pub state: Option<Complex64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
    pub steps_taken: usize,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn column(&self, f: impl Fn(&TrajectorySample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub record: TrajectoryRecord,
    pub final_state: FinalState,
}

/// A stepper abort, with everything recorded before it.
#[derive(Debug, Clone)]
pub struct RunAbort {
    pub error: Error,
    pub time: f64,
    pub partial: TrajectoryRecord,
}

impl std::fmt::Display for RunAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at t = {}: {}", self.time, self.error)
    }
}

impl std::error::Error for RunAbort {}

impl From<Error> for RunAbort {
    fn from(error: Error) -> Self {
        RunAbort { error, time: f64::NAN, partial: TrajectoryRecord::default() }
    }
}

/// Integrate from `t_start` to `t_end`, recording every `record_every` steps
/// (and at both ends).
pub fn run_trajectory(init: InitialState, cfg: &StepperConfig, m: &ModelSpec) -> std::result::Result<Trajectory, RunAbort> {
    run_trajectory_with_absorber(init, cfg, m, None)
}

/// [`run_trajectory`] with an optional edge absorber (see
/// [`SplitStep::with_absorber`]). Ignored for the ODE.
pub fn run_trajectory_with_absorber(
    init: InitialState,
    cfg: &StepperConfig,
    m: &ModelSpec,
    absorber: Option<f64>,
) -> std::result::Result<Trajectory, RunAbort> {
    m.validate()?;
    cfg.validate(m.kind)?;
    match (init, m.kind.is_pde()) {
        (InitialState::Scalar(psi0), false) => run_ode(psi0, cfg, m),
        (InitialState::Field(f), true) => run_pde(f, cfg, m, absorber),
        _ => Err(Error::InvalidArgument("initial state does not match the model kind".into()).into()),
    }
}

fn run_ode(psi0: Complex64, cfg: &StepperConfig, m: &ModelSpec) -> std::result::Result<Trajectory, RunAbort> {
    let steps = cfg.steps();
    let mut rec = TrajectoryRecord::default();
    let sample = |psi: Complex64, tau: f64| TrajectorySample {
        time: tau,
        tau,
        mass: psi.norm_sqr(),
        momentum: Complex64::new(0.0, 0.0),
        peak_amp: psi.norm(),
        params: None,
        alpha: None,
        forcing_amp: m.forcing.amplitude(tau),
        psi_peak: psi.norm(),
        psi_forcing: m.forcing.amplitude(tau),
        state: Some(psi),
    };
    let mut psi = psi0;
    rec.samples.push(sample(psi, cfg.t_start));
    for j in 0..steps {
        let tau = cfg.t_start + j as f64 * cfg.dt;
        psi = match rk4_step(psi, tau, cfg.dt, m) {
            Ok(p) => p,
            Err(error) => {
                rec.steps_taken = j;
                return Err(RunAbort { error, time: tau + cfg.dt, partial: rec });
            }
        };
        if (j + 1) % cfg.record_every == 0 || j + 1 == steps {
            rec.samples.push(sample(psi, cfg.t_start + (j + 1) as f64 * cfg.dt));
        }
    }
    rec.steps_taken = steps;
    Ok(Trajectory { record: rec, final_state: FinalState::Scalar(psi) })
}

fn pde_sample(sp: &Spectral, u: &[Complex64], t: f64, m: &ModelSpec) -> TrajectorySample {
    let field = ComplexField::from_raw(*sp.grid(), u.to_vec());
    let mass_v = mass(&field);
    let mom = momentum_with(sp, &field);
    let peak = field.max_abs();
    let forcing_amp = m.active_forcing().amplitude(t);
    if m.kind.is_scaled_frame() {
        let tau = (2.0 * t).sqrt();
        let extraction = if mass_v > 0.0 { extract_soliton_params_with(sp, &field).ok() } else { None };
        let params = extraction.map(|e| e.params);
        TrajectorySample {
            time: t,
            tau,
            mass: mass_v,
            momentum: mom,
            peak_amp: peak,
            params,
            alpha: params.map(|p| lock_angle(&p, t, &m.active_forcing())),
            forcing_amp,
            psi_peak: amplitude_scale(t) * peak,
            psi_forcing: FORCING_FRAME_FACTOR * forcing_amp,
            state: None,
        }
    } else {
        // Express the soliton content in the scaled frame when τ > 0.
        let (params, alpha) = if t > 0.0 && mass_v > 0.0 {
            match map_field_original_to_scaled(&field, t) {
                Ok(s) => {
                    let ssp = Spectral::new(s.z_grid);
                    let p = extract_soliton_params_with(&ssp, &s.phi).ok().map(|e| e.params);
                    let sf = m.forcing.to_scaled();
                    (p, p.map(|p| lock_angle(&p, s.sigma, &sf)))
                }
                Err(_) => (None, None),
            }
        } else {
            (None, None)
        };
        TrajectorySample {
            time: t,
            tau: t,
            mass: mass_v,
            momentum: mom,
            peak_amp: peak,
            params,
            alpha,
            forcing_amp,
            psi_peak: peak,
            psi_forcing: forcing_amp,
            state: None,
        }
    }
}

fn run_pde(
    init: ComplexField,
    cfg: &StepperConfig,
    m: &ModelSpec,
    absorber: Option<f64>,
) -> std::result::Result<Trajectory, RunAbort> {
    let grid = *init.grid();
    let mut stepper = SplitStep::new(*m, Spectral::new(grid), cfg.dt)?;
    if let Some(strength) = absorber {
        stepper = stepper.with_absorber(strength)?;
    }
    let steps = cfg.steps();
    let mut rec = TrajectoryRecord::default();
    let mut u = init.into_values();
    rec.samples.push(pde_sample(stepper.spectral(), &u, cfg.t_start, m));
    for j in 0..steps {
        let t = cfg.t_start + j as f64 * cfg.dt;
        if let Err(error) = stepper.step(&mut u, t) {
            rec.steps_taken = j;
            return Err(RunAbort { error, time: t + cfg.dt, partial: rec });
        }
        if (j + 1) % cfg.record_every == 0 || j + 1 == steps {
            rec.samples.push(pde_sample(stepper.spectral(), &u, cfg.t_start + (j + 1) as f64 * cfg.dt, m));
        }
    }
    rec.steps_taken = steps;
    Ok(Trajectory { record: rec, final_state: FinalState::Field(ComplexField::from_raw(grid, u)) })
}

/// Quasi-static forced state near `guess` at frozen `σ`.
///
/// Solves the stationary equation in the frame rotating with the drive,
/// `φ = e^{iσ}w`,
///
/// ```text
/// -w + w_zz + g|w|²w + 𝓕σ^{-3/4} + (i/4σ)·frame(w) + iγ(σ)w = 0,
/// ```
///
/// by Newton's method with the same discrete operators as [`SplitStep`]
/// (tapered, skew-symmetric frame term). Starting a run from this state
/// instead of the bare soliton avoids the free uniform background that an
/// abrupt switch-on leaves behind. Dense, so keep `n` to a few thousand.
pub fn dressed_state(model: &ModelSpec, sigma: f64, guess: &ComplexField) -> Result<ComplexField> {
    model.validate()?;
    if !model.kind.is_scaled_frame() || !(sigma > 0.0) {
        return Err(Error::InvalidArgument("dressed_state needs a scaled-frame model and sigma > 0".into()));
    }
    let grid = *guess.grid();
    let n = grid.n();
    let sp = Spectral::new(grid);
    let g = model.nonlinearity;
    let d = if model.active_frame_term() == FrameTerm::Off { 0.0 } else { 0.25 / sigma };
    let gamma = model.scaled_damping(sigma);
    let drive = scaled_forcing(&model.active_forcing(), sigma) * Complex64::from_polar(1.0, -sigma);
    let full = model.active_frame_term() == FrameTerm::Full;
    let zt = tapered_coordinate(&grid);
    let mut zdiag_c: Vec<Complex64> = zt.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    sp.first_derivative_in_place(&mut zdiag_c);
    let zd: Vec<f64> = zdiag_c.iter().map(|v| 1.0 - 0.5 * v.re).collect();
    let dispersion = if model.dispersion { 1.0 } else { 0.0 };

    let frame = |w: &[Complex64]| -> Vec<Complex64> {
        if !full {
            return w.to_vec();
        }
        let mut dw = w.to_vec();
        sp.first_derivative_in_place(&mut dw);
        let mut dzw: Vec<Complex64> = w.iter().zip(&zt).map(|(v, z)| v * z).collect();
        sp.first_derivative_in_place(&mut dzw);
        (0..n).map(|j| zd[j] * w[j] + 0.5 * (dzw[j] + zt[j] * dw[j])).collect()
    };
    let residual = |w: &[Complex64]| -> Vec<Complex64> {
        let mut wzz = w.to_vec();
        sp.apply_multiplier_in_place(&mut wzz, |k| Complex64::new(-k * k * dispersion, 0.0));
        let fr = frame(w);
        (0..n)
            .map(|j| -w[j] + wzz[j] + g * w[j].norm_sqr() * w[j] + drive + I * d * fr[j] + I * gamma * w[j])
            .collect()
    };

    // Circulant columns of the spectral first and second derivatives.
    let mut e0 = vec![Complex64::new(0.0, 0.0); n];
    e0[0] = Complex64::new(1.0, 0.0);
    let mut c1 = e0.clone();
    sp.first_derivative_in_place(&mut c1);
    let mut c2 = e0;
    sp.apply_multiplier_in_place(&mut c2, |k| Complex64::new(-k * k * dispersion, 0.0));
    let col = |c: &[Complex64], i: usize, j: usize| c[(i + n - j) % n].re;

    let shift = Complex64::from_polar(1.0, -sigma);
    let mut w: Vec<Complex64> = guess.values().iter().map(|v| v * shift).collect();
    let scale = 1.0 + w.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let m2 = 2 * n;
    for _ in 0..30 {
        let r = residual(&w);
        let rnorm = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !rnorm.is_finite() {
            return Err(Error::NoConvergence("non-finite residual in Newton iteration".into()));
        }
        if rnorm < 1e-11 * scale {
            let out = w.iter().map(|v| v * Complex64::from_polar(1.0, sigma)).collect();
            return ComplexField::new(grid, out);
        }
        let mut jac = vec![0.0; m2 * m2];
        for i in 0..n {
            let wi = w[i];
            let m = wi.norm_sqr();
            let sq = wi * wi;
            for j in 0..n {
                let l = col(&c2, i, j);
                let t = if full {
                    0.5 * col(&c1, i, j) * (zt[i] + zt[j]) + if i == j { zd[i] } else { 0.0 }
                } else if i == j {
                    1.0
                } else {
                    0.0
                };
                let diag = if i == j { 1.0 } else { 0.0 };
                // Rows: real parts (i), imaginary parts (n + i); columns: δa (j), δb (n + j).
                jac[i * m2 + j] = -diag + l + if i == j { g * (2.0 * m + sq.re) } else { 0.0 };
                jac[i * m2 + n + j] = -d * t - gamma * diag + if i == j { g * sq.im } else { 0.0 };
                jac[(n + i) * m2 + j] = d * t + gamma * diag + if i == j { g * sq.im } else { 0.0 };
                jac[(n + i) * m2 + n + j] = -diag + l + if i == j { g * (2.0 * m - sq.re) } else { 0.0 };
            }
        }
        let mut rhs: Vec<f64> = r.iter().map(|v| -v.re).chain(r.iter().map(|v| -v.im)).collect();
        solve_dense(&mut jac, &mut rhs, m2)?;
        // Backtracking on the max-norm residual.
        let mut step = 1.0;
        loop {
            let trial: Vec<Complex64> = (0..n).map(|j| w[j] + Complex64::new(rhs[j], rhs[n + j]) * step).collect();
            let tn = residual(&trial).iter().map(|v| v.norm()).fold(0.0, f64::max);
            if tn < rnorm || step < 1e-4 {
                w = trial;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::NoConvergence("Newton iteration for the dressed state did not converge in 30 steps".into()))
}

/// Gaussian elimination with partial pivoting; `a` is row-major `n × n`,
/// the solution overwrites `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        if a[p * n + k] == 0.0 {
            return Err(Error::NoConvergence("singular Jacobian".into()));
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let (top, rest) = a.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n..(k + 1) * n];
        let inv = 1.0 / pivot_row[k];
        for (ri, row) in rest.chunks_mut(n).enumerate() {
            let f = row[k] * inv;
            if f != 0.0 {
                for c in k..n {
                    row[c] -= f * pivot_row[c];
                }
                b[k + 1 + ri] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * b[c]).sum();
        b[k] = (b[k] - s) / a[k * n + k];
    }
    Ok(())
}
