//! The analytic layer around the one-soliton ansatz: the mass-law and
//! momentum-law functionals `H0`, `H1`, the locked-parameter system, the
//! leading-order parameter laws and the dissipative balance.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::lock_angle;
use crate::error::{Error, Result};
use crate::models::{h_field, soliton_field, soliton_z_derivative, ForcingSpec, ModelSpec, SolitonParams};
use crate::numerics::{integrate_line, make_grid, wrap_angle, GridSpec};

/// Minimum attainable effective amplitude of the locked system (the fold at
/// `μ = 0`).
pub const LOCKED_A_MIN: f64 = 0.5;

/// A grid on which the soliton's tails are below `1e-12` at the seam and its
/// carrier and profile are resolved.
pub fn quadrature_grid(p: &SolitonParams) -> GridSpec {
    let half = (32.0 + p.v.abs()) / (2.0 * p.eta);
    let length = (2.0 * half).max(40.0);
    let dz = 1.0 / (8.0 * (p.eta + p.kappa.abs()));
    let n = ((length / dz).ceil() as usize).next_power_of_two().max(256);
    make_grid(n, length).expect("quadrature grid parameters are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub value: f64,
    pub tail_warning: bool,
}

/// `∫ h φ̄₀ dz`, the building block of both functionals.
fn h_overlap(p: &SolitonParams, sigma: f64, m: &ModelSpec, g: &GridSpec) -> Result<(Complex64, bool)> {
    let h = h_field(p, sigma, m, g)?;
    let phi = soliton_field(p, g)?;
    let q = integrate_line(&h.zip_with(&phi, |a, b| a * b.conj()));
    Ok((q.value, q.tail_warning || phi.boundary_magnitude() > crate::numerics::TAIL_WARN_LEVEL))
}

/// `H0 = i∫(h φ̄₀ - h̄ φ₀) dz = -2 Im ∫ h φ̄₀ dz`, so that `dM/dσ = H0`.
pub fn h0_quadrature(p: &SolitonParams, sigma: f64, m: &ModelSpec) -> Result<Functional> {
    h0_quadrature_on(p, sigma, m, &quadrature_grid(p))
}

pub fn h0_quadrature_on(p: &SolitonParams, sigma: f64, m: &ModelSpec, g: &GridSpec) -> Result<Functional> {
    let (w, tail_warning) = h_overlap(p, sigma, m, g)?;
    Ok(Functional { value: -2.0 * w.im, tail_warning })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1Decomposition {
    /// `∫(h ∂_zφ̄₀ + h̄ ∂_zφ₀) dz` by direct quadrature.
    pub value: f64,
    /// `2κ·H0`, the part from the `-2iκφ₀` piece of `∂_zφ₀`.
    pub kappa_part: f64,
    /// `-2η ∫ tanh(2ηz+V)(h φ̄₀ + h̄ φ₀) dz`.
    pub tanh_part: f64,
    pub tail_warning: bool,
}

impl H1Decomposition {
    pub fn identity_defect(&self) -> f64 {
        (self.value - (self.kappa_part + self.tanh_part)).abs()
    }
}

/// The momentum-law functional, with `8 d(κη)/dσ = H1`.
pub fn h1_quadrature(p: &SolitonParams, sigma: f64, m: &ModelSpec) -> Result<H1Decomposition> {
    h1_quadrature_on(p, sigma, m, &quadrature_grid(p))
}

pub fn h1_quadrature_on(p: &SolitonParams, sigma: f64, m: &ModelSpec, g: &GridSpec) -> Result<H1Decomposition> {
    let h = h_field(p, sigma, m, g)?;
    let phi = soliton_field(p, g)?;
    let phi_z = soliton_z_derivative(p, g);
    let direct = integrate_line(&h.zip_with(&phi_z, |a, b| a * b.conj()));
    let value = 2.0 * direct.value.re;

    let h0 = -2.0 * integrate_line(&h.zip_with(&phi, |a, b| a * b.conj())).value.im;
    let z = g.points();
    let weighted: Complex64 = h
        .values()
        .iter()
        .zip(phi.values())
        .zip(&z)
        .map(|((&hv, &pv), &zz)| hv * pv.conj() * (2.0 * p.eta * zz + p.v).tanh())
        .sum::<Complex64>()
        * g.spacing();
    Ok(H1Decomposition {
        value,
        kappa_part: 2.0 * p.kappa * h0,
        tanh_part: -4.0 * p.eta * weighted.re,
        tail_warning: direct.tail_warning || phi.boundary_magnitude() > crate::numerics::TAIL_WARN_LEVEL,
    })
}

/// Closed form of the forcing contribution to `H0`:
/// `2π|𝓕| cos α / (σ^{3/4} cosh(πκ/2η))`.
pub fn h0_forcing_closed_form(p: &SolitonParams, sigma: f64, forcing: &ForcingSpec) -> f64 {
    let alpha = lock_angle(p, sigma, forcing);
    2.0 * PI * forcing.amplitude(sigma) * alpha.cos()
        / (sigma.powf(0.75) * (0.5 * PI * p.kappa / p.eta).cosh())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchSign {
    Plus,
    Minus,
}

impl BranchSign {
    pub fn sign(self) -> f64 {
        match self {
            BranchSign::Plus => 1.0,
            BranchSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockedSolution {
    pub eta0: f64,
    pub kappa0: f64,
    /// Lock-angle branch, `0` or `π`.
    pub alpha: f64,
    pub mu: f64,
    pub a: f64,
}

impl LockedSolution {
    /// `4(κ₀² + η₀²) - 1`.
    pub fn constraint_residual(&self) -> f64 {
        4.0 * (self.kappa0 * self.kappa0 + self.eta0 * self.eta0) - 1.0
    }

    /// `η₀ - A/cosh(πκ₀/(2η₀))`.
    pub fn amplitude_residual(&self) -> f64 {
        self.eta0 - self.a / (0.5 * PI * self.kappa0 / self.eta0).cosh()
    }
}

/// `A(μ) = cosh(πμ/2) / (2√(1+μ²))` along the constraint curve.
pub fn locked_amplitude(mu: f64) -> f64 {
    (0.5 * PI * mu).cosh() / (2.0 * (1.0 + mu * mu).sqrt())
}

/// Solve `4(κ₀²+η₀²) = 1`, `η₀ = A/cosh(πκ₀/(2η₀))` for `μ = κ₀/η₀`.
///
/// `A(μ)` is even and increasing in `|μ|`, so each `A > 1/2` has one solution
/// per sign of `κ₀`; `A = 1/2` is the fold where both meet at `κ₀ = 0`.
pub fn solve_locked(a: f64, branch: BranchSign, alpha: f64) -> Result<LockedSolution> {
    if !(alpha == 0.0 || (alpha - PI).abs() < 1e-15) {
        return Err(Error::InvalidArgument(format!("alpha branch must be 0 or π, got {alpha}")));
    }
    if !(a.is_finite() && a >= LOCKED_A_MIN) {
        return Err(Error::NoLockedSolution { a, min: LOCKED_A_MIN });
    }
    let mu_abs = if a == LOCKED_A_MIN {
        0.0
    } else {
        let mut hi = 1.0;
        while locked_amplitude(hi) < a {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if locked_amplitude(mid) < a { lo = mid } else { hi = mid }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let mu = branch.sign() * mu_abs;
    let eta0 = 1.0 / (2.0 * (1.0 + mu * mu).sqrt());
    Ok(LockedSolution { eta0, kappa0: mu * eta0, alpha, mu, a })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterLaws {
    /// `Ω' = 4(κ₀² - η₀²)`.
    pub omega_rate: f64,
    /// `V' = 8κ₀η₀`.
    pub v_rate: f64,
    /// `α' = 1 + Ω' - κ₀V'/η₀ = 1 - 4(κ₀² + η₀²)`; zero on the constraint.
    pub alpha_rate: f64,
}

pub fn predict_parameter_laws(sol: &LockedSolution) -> ParameterLaws {
    let (e, k) = (sol.eta0, sol.kappa0);
    let omega_rate = 4.0 * (k * k - e * e);
    let v_rate = 8.0 * k * e;
    ParameterLaws { omega_rate, v_rate, alpha_rate: 1.0 + omega_rate - k * v_rate / e }
}

/// Soliton parameters at `σ` with `V = 0` and `Ω` chosen so that the lock
/// angle equals `alpha`.
pub fn params_with_lock_angle(eta: f64, kappa: f64, alpha: f64, sigma: f64, forcing: &ForcingSpec) -> SolitonParams {
    SolitonParams { eta, kappa, omega: wrap_angle(alpha - forcing.phase - sigma), v: 0.0 }
}

/// The lock angle at which the mass law balances, `H0 = 0`, for the locked
/// parameters at `σ` under model `m`, found by bisection on the quadrature
/// `H0` over `α ∈ [-π, 0]` (the branch with `sin α < 0`, which is the stable
/// one for `α' = 1 - 4η²`). Errors when the forcing is too weak to balance.
pub fn balanced_lock_angle(sol: &LockedSolution, sigma: f64, m: &ModelSpec) -> Result<f64> {
    let forcing = m.active_forcing();
    let h0_at = |alpha: f64| -> Result<f64> {
        let p = params_with_lock_angle(sol.eta0, sol.kappa0, alpha, sigma, &forcing);
        Ok(h0_quadrature(&p, sigma, m)?.value)
    };
    // H0 increases with cos α, i.e. from α = -π to α = 0.
    let (mut lo, mut hi) = (-PI, 0.0);
    let (f_lo, f_hi) = (h0_at(lo)?, h0_at(hi)?);
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "forcing too weak to balance the mass law at sigma = {sigma} (H0 in [{f_lo:.3e}, {f_hi:.3e}])"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if h0_at(mid)? < 0.0 { lo = mid } else { hi = mid }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form counterpart of [`balanced_lock_angle`]:
/// `cos α* = (c_f η/σ + 4νη/√σ·[dissipative]) · σ^{3/4} cosh(πκ/2η) / (2π|𝓕|)`.
pub fn balanced_lock_angle_closed_form(sol: &LockedSolution, sigma: f64, m: &ModelSpec) -> Option<f64> {
    let forcing = m.active_forcing().amplitude(sigma);
    let loss = m.active_frame_term().mass_loss_factor() * sol.eta0 / sigma
        + 8.0 * m.scaled_damping(sigma) * sol.eta0;
    let c = loss * sigma.powf(0.75) * (0.5 * PI * sol.kappa0 / sol.eta0).cosh() / (2.0 * PI * forcing);
    (c.abs() <= 1.0).then(|| -c.acos())
}

/// Mass-law rate `4η'` from damping and forcing only:
/// `-4νη/√σ + 2π|𝓕| cos α / (σ^{3/4} cosh(πκ/2η))`, with `α` the lock angle
/// of `p`. The root in `η` at fixed `σ` is the quasi-static amplitude.
/// Here `ν` multiplies `iνφ/(2√σ)` in the scaled equation.
pub fn dissipation_balance(nu: f64, forcing: &ForcingSpec, sigma: f64, p: &SolitonParams) -> Result<f64> {
    if !(nu >= 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("need nu >= 0 and sigma > 0, got {nu}, {sigma}")));
    }
    let alpha = lock_angle(p, sigma, forcing);
    Ok(balance_value(nu, forcing.amplitude(sigma), sigma, p.eta, p.kappa, alpha))
}

fn balance_value(nu: f64, amp: f64, sigma: f64, eta: f64, kappa: f64, alpha: f64) -> f64 {
    -4.0 * nu * eta / sigma.sqrt() + 2.0 * PI * amp * alpha.cos() / (sigma.powf(0.75) * (0.5 * PI * kappa / eta).cosh())
}

/// Root in `η` of [`dissipation_balance`] at fixed `(κ, α, σ)`.
pub fn dissipation_root(nu: f64, forcing: &ForcingSpec, sigma: f64, kappa: f64, alpha: f64) -> Result<f64> {
    if !(nu > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument("dissipation_root needs nu > 0 and sigma > 0".into()));
    }
    let amp = forcing.amplitude(sigma);
    let f = |eta: f64| balance_value(nu, amp, sigma, eta, kappa, alpha);
    // Scan a log grid from large to small η for the first sign change.
    let mut hi = 1e3;
    if f(hi) > 0.0 {
        return Err(Error::InvalidArgument("no balance root below eta = 1e3".into()));
    }
    let mut lo = hi;
    loop {
        lo *= 0.5;
        if lo < 1e-12 {
            return Err(Error::InvalidArgument("no positive balance root".into()));
        }
        if f(lo) > 0.0 {
            break;
        }
        hi = lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 { lo = mid } else { hi = mid }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FrameTerm;

    #[test]
    fn h0_vanishes_for_exact_soliton() {
        let p = SolitonParams::new(0.5, 0.2, 0.3, 0.0).unwrap();
        let m = ModelSpec::scaled(ForcingSpec::zero()).with_frame_term(FrameTerm::Off);
        assert!(h0_quadrature(&p, 10.0, &m).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn h0_frame_term_is_minus_eta_over_sigma() {
        let p = SolitonParams::new(0.4, 0.3, 0.0, 0.0).unwrap();
        let sigma = 20.0;
        let full = h0_quadrature(&p, sigma, &ModelSpec::scaled(ForcingSpec::zero())).unwrap();
        assert!((full.value + p.eta / sigma).abs() < 1e-8, "{}", full.value);
        let printed = ModelSpec::scaled(ForcingSpec::zero()).with_frame_term(FrameTerm::Printed);
        let pr = h0_quadrature(&p, sigma, &printed).unwrap();
        assert!((pr.value + 2.0 * p.eta / sigma).abs() < 1e-8);
    }

    #[test]
    fn h0_forcing_term_matches_closed_form() {
        let forcing = ForcingSpec::constant(0.3, 0.2);
        let m = ModelSpec::scaled(forcing).with_frame_term(FrameTerm::Off);
        let sigma = 100.0;
        let p = params_with_lock_angle(0.4, 0.3, 0.0, sigma, &forcing);
        let q = h0_quadrature(&p, sigma, &m).unwrap().value;
        let magnitude = 2.0 * PI * 0.3 / (sigma.powf(0.75) * (0.5 * PI * 0.3 / 0.4).cosh());
        assert!((q - magnitude).abs() < 1e-6 * magnitude, "{q} vs {magnitude}");
        let p = params_with_lock_angle(0.4, 0.3, 1.1, sigma, &forcing);
        let q = h0_quadrature(&p, sigma, &m).unwrap().value;
        assert!((q - h0_forcing_closed_form(&p, sigma, &forcing)).abs() < 1e-6 * magnitude);
    }

    #[test]
    fn h1_cases() {
        let forcing = ForcingSpec::constant(0.3, 0.0);
        let sigma = 50.0;
        for &alpha in &[0.0, PI] {
            let p = params_with_lock_angle(0.5, 0.0, alpha, sigma, &forcing);
            let d = h1_quadrature(&p, sigma, &ModelSpec::scaled(forcing)).unwrap();
            assert!(d.tanh_part.abs() < 1e-10);
        }
        // Frame term only: tanh part vanishes.
        let p = SolitonParams::new(0.4, 0.3, 0.2, 0.1).unwrap();
        let printed = ModelSpec::scaled(ForcingSpec::zero()).with_frame_term(FrameTerm::Printed);
        let d = h1_quadrature(&p, sigma, &printed).unwrap();
        assert!(d.tanh_part.abs() < 1e-12);
        let h0 = h0_quadrature(&p, sigma, &printed).unwrap().value;
        assert!((d.value - 2.0 * p.kappa * h0).abs() < 1e-12);
    }

    #[test]
    fn h1_forcing_part_against_closed_form() {
        // Uniform forcing injects no momentum: the tanh part cancels 2κ·H0 and
        // equals -4η|𝓕|cos α ∫sech·tanh·sin(bX)dX / σ^{3/4}.
        let forcing = ForcingSpec::constant(0.3, 0.0);
        let m = ModelSpec::scaled(forcing).with_frame_term(FrameTerm::Off);
        let sigma = 100.0;
        let (eta, kappa) = (0.4, 0.3);
        for &alpha in &[0.0, 0.7, 2.0] {
            let p = params_with_lock_angle(eta, kappa, alpha, sigma, &forcing);
            let d = h1_quadrature(&p, sigma, &m).unwrap();
            let b = kappa / eta;
            let expected = -4.0 * eta * 0.3 * alpha.cos() * crate::numerics::sech_tanh_sin_integral(b) / sigma.powf(0.75);
            let scale = 2.0 * PI * 0.3 / sigma.powf(0.75);
            assert!((d.tanh_part - expected).abs() < 1e-6 * scale, "{} vs {}", d.tanh_part, expected);
            assert!(d.value.abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn locked_system_examples() {
        let s = solve_locked(0.5, BranchSign::Plus, 0.0).unwrap();
        assert_eq!((s.eta0, s.kappa0), (0.5, 0.0));

        let target = (0.5 * PI).cosh() / (2.0 * 2f64.sqrt());
        assert!((target - 0.8872).abs() < 1e-4);
        let s = solve_locked(target, BranchSign::Plus, 0.0).unwrap();
        assert!((s.mu - 1.0).abs() < 1e-10);
        assert!((s.eta0 - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-10);
        assert!(s.constraint_residual().abs() < 1e-12);
        assert!(s.amplitude_residual().abs() < 1e-12);
        let s = solve_locked(target, BranchSign::Minus, PI).unwrap();
        assert!((s.mu + 1.0).abs() < 1e-10);

        assert!(matches!(solve_locked(0.49, BranchSign::Plus, 0.0), Err(Error::NoLockedSolution { .. })));
        assert!(solve_locked(0.7, BranchSign::Plus, 1.0).is_err());
    }

    #[test]
    fn branch_stability_away_from_fold() {
        for &a in &[0.6, 0.9, 2.0] {
            let s0 = solve_locked(a, BranchSign::Plus, 0.0).unwrap();
            let s1 = solve_locked(a + 1e-9, BranchSign::Plus, 0.0).unwrap();
            assert!((s1.eta0 - s0.eta0).abs() < 1e-7);
            assert!((s1.kappa0 - s0.kappa0).abs() < 1e-7);
        }
    }

    #[test]
    fn parameter_laws() {
        let s = solve_locked(0.5, BranchSign::Plus, 0.0).unwrap();
        let l = predict_parameter_laws(&s);
        assert_eq!(l.v_rate, 0.0);
        assert!(l.alpha_rate.abs() < 1e-15);

        let s = solve_locked(locked_amplitude(1.0), BranchSign::Plus, 0.0).unwrap();
        let l = predict_parameter_laws(&s);
        assert!((l.v_rate - 1.0).abs() < 1e-10);
        assert!(l.alpha_rate.abs() < 1e-12);
    }

    #[test]
    fn balanced_angle_quadrature_matches_closed_form() {
        let s = solve_locked(0.5, BranchSign::Plus, 0.0).unwrap();
        let sigma = 10.0;
        let m = ModelSpec::scaled(ForcingSpec::power(0.5, -0.25, 0.0));
        let q = balanced_lock_angle(&s, sigma, &m).unwrap();
        let c = balanced_lock_angle_closed_form(&s, sigma, &m).unwrap();
        assert!((q - c).abs() < 1e-8, "{q} vs {c}");
        assert!((c.cos() - 1.0 / (4.0 * PI * 0.5)).abs() < 1e-12);

        let d = ModelSpec::scaled_dissipative(ForcingSpec::power(0.1, 0.25, 0.0), 0.1);
        let sigma = 400.0;
        let q = balanced_lock_angle(&s, sigma, &d).unwrap();
        let c = balanced_lock_angle_closed_form(&s, sigma, &d).unwrap();
        assert!((q - c).abs() < 1e-8, "{q} vs {c}");
    }

    #[test]
    fn dissipation_balance_cases() {
        let forcing = ForcingSpec::constant(0.2, 0.0);
        let p = params_with_lock_angle(0.3, 0.0, 0.4, 100.0, &forcing);
        let b = dissipation_balance(0.0, &forcing, 100.0, &p).unwrap();
        assert!((b - h0_forcing_closed_form(&p, 100.0, &forcing)).abs() < 1e-15);

        let r1 = dissipation_root(0.1, &forcing, 1e4, 0.0, 0.0).unwrap();
        let r16 = dissipation_root(0.1, &forcing, 16e4, 0.0, 0.0).unwrap();
        assert!((r16 / r1 - 0.5).abs() < 1e-3);

        let grow = ForcingSpec::power(0.05 * 0.1, 0.25, 0.0);
        let a = dissipation_root(0.1, &grow, 1e2, 0.0, 0.0).unwrap();
        let b = dissipation_root(0.1, &grow, 1e4, 0.0, 0.0).unwrap();
        assert!((a - b).abs() < 1e-6 * a);
    }
}
