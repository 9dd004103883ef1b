//! Scenario execution: build the initial state, integrate, analyse.

use autores_core::asymptotics::{
    balanced_lock_angle_closed_form, h0_quadrature, h1_quadrature, params_with_lock_angle, predict_parameter_laws,
    solve_locked, LockedSolution,
};
use autores_core::diagnostics::{fit_power_law, lock_verdict};
use autores_core::models::{
    map_field_original_to_scaled, map_field_scaled_to_original, map_tau_to_sigma, soliton_field, ModelKind, ModelSpec,
    SolitonParams,
};
use autores_core::numerics::{wrap_angle, ComplexField, GridSpec, Spectral};
use autores_core::sine_gordon::{run_envelope_check, EnvelopeCheck, EnvelopeReport};
use autores_core::solvers::{
    dressed_state, run_trajectory_with_absorber, FinalState, InitialState, SplitStep, TrajectoryRecord,
    TrajectorySample,
};
use autores_core::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AnalysisConfig, Axis, ConfigError, Evolution, InitConfig, Plan, Quantity, Scenario, SineGordonConfig};

/// Everything a run writes.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub csv_name: &'static str,
    pub csv: String,
    pub summary: Value,
    /// A numerical abort; the summary records when.
    pub aborted: bool,
}

pub const TRAJECTORY_HEADER: &str = "time,tau,mass,re_momentum,im_momentum,peak_amp,eta,kappa,Omega,V,alpha,forcing_amp";

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_csv(rec: &TrajectoryRecord) -> String {
    let mut out = String::with_capacity(64 + rec.samples.len() * 12 * 24);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &rec.samples {
        let p = s.params;
        let cols = [
            s.time,
            s.tau,
            s.mass,
            s.momentum.re,
            s.momentum.im,
            s.peak_amp,
            p.map_or(f64::NAN, |p| p.eta),
            p.map_or(f64::NAN, |p| p.kappa),
            p.map_or(f64::NAN, |p| p.omega),
            p.map_or(f64::NAN, |p| p.v),
            s.alpha.unwrap_or(f64::NAN),
            s.forcing_amp,
        ];
        let row: Vec<String> = cols.iter().map(|&x| num(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// The locked solution a run started from.
#[derive(Debug, Clone, Copy, Serialize)]
struct LockedStart {
    solution: LockedSolution,
    /// Lock angle the run was started at.
    alpha0: f64,
    alpha_balanced: bool,
    initial_params: SolitonParams,
    omega_rate: f64,
    v_rate: f64,
    alpha_rate: f64,
}

struct Prepared {
    init: InitialState,
    locked: Option<LockedStart>,
    soliton: Option<SolitonParams>,
    dressed: bool,
}

/// The equivalent scaled-frame model, used for lock angles and balances.
fn scaled_view(m: &ModelSpec) -> ModelSpec {
    if m.kind == ModelKind::Original {
        m.original_to_scaled().unwrap_or(*m)
    } else {
        *m
    }
}

fn sample_sigma(m: &ModelSpec, s: &TrajectorySample) -> f64 {
    if m.kind.is_scaled_frame() { s.time } else { 0.5 * s.tau * s.tau }
}

enum Failure {
    Config(ConfigError),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn config_err<T>(msg: String) -> Result<T, Failure> {
    Err(Failure::Config(ConfigError(msg)))
}

/// Place a scaled-frame soliton on the run's grid: directly for scaled
/// models, mapped to `ζ` for the original frame (the configured grid is then
/// the `ζ` grid).
fn place_soliton(p: &SolitonParams, ev: &Evolution, grid: GridSpec, dressed: bool) -> Result<ComplexField, Failure> {
    let t0 = ev.stepper.t_start;
    if ev.model.kind.is_scaled_frame() {
        let phi = soliton_field(p, &grid).map_err(|e| Failure::Config(ConfigError(format!("init: {e}"))))?;
        if dressed {
            return dressed_state(&ev.model, t0, &phi).map_err(|e| Failure::Numerical(format!("dressed start: {e}")));
        }
        return Ok(phi);
    }
    if t0 <= 0.0 {
        return config_err("soliton starts in the original frame need stepper.t_start > 0".into());
    }
    let sigma = map_tau_to_sigma(t0).map_err(|e| Failure::Config(ConfigError(format!("init: {e}"))))?;
    let zgrid = grid
        .with_length(grid.length() * autores_core::models::coordinate_scale(sigma))
        .map_err(|e| Failure::Config(ConfigError(format!("init: {e}"))))?;
    let phi = soliton_field(p, &zgrid).map_err(|e| Failure::Config(ConfigError(format!("init: {e}"))))?;
    let psi = map_field_scaled_to_original(&phi, sigma).map_err(|e| Failure::Numerical(e.to_string()))?;
    ComplexField::new(grid, psi.psi.into_values()).map_err(|e| Failure::Numerical(e.to_string()))
}

fn read_field_file(ev: &Evolution, path: &std::path::Path, grid: GridSpec) -> Result<ComplexField, Failure> {
    let full = if path.is_absolute() { path.to_path_buf() } else { ev.base_dir.join(path) };
    let text = std::fs::read_to_string(&full)
        .map_err(|e| Failure::Config(ConfigError(format!("init.path {}: {e}", full.display()))))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [re, im] => re.parse::<f64>().ok().zip(im.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((re, im)) => values.push(Complex64::new(re, im)),
            None if values.is_empty() && i == 0 => continue, // header
            None => return config_err(format!("init.path {} line {}: expected `re,im`", full.display(), i + 1)),
        }
    }
    ComplexField::new(grid, values).map_err(|e| Failure::Config(ConfigError(format!("init.path {}: {e}", full.display()))))
}

fn prepare(ev: &Evolution) -> Result<Prepared, Failure> {
    let t0 = ev.stepper.t_start;
    let mut prepared = Prepared { init: InitialState::Scalar(Complex64::new(0.0, 0.0)), locked: None, soliton: None, dressed: false };
    let Some(grid) = ev.grid else {
        prepared.init = match ev.init {
            InitConfig::Scalar { re, im } => InitialState::Scalar(Complex64::new(re, im)),
            _ => InitialState::Scalar(Complex64::new(0.0, 0.0)),
        };
        return Ok(prepared);
    };
    let scaled = scaled_view(&ev.model);
    let sigma0 = if ev.model.kind.is_scaled_frame() { t0 } else { 0.5 * t0 * t0 };
    let field = match &ev.init {
        InitConfig::Zero => ComplexField::zeros(grid),
        InitConfig::Scalar { .. } => unreachable!("rejected when planning"),
        InitConfig::File { path } => read_field_file(ev, path, grid)?,
        InitConfig::Soliton { eta, kappa, omega, v } => {
            let p = SolitonParams::new(*eta, *kappa, *omega, *v)
                .map_err(|e| Failure::Config(ConfigError(format!("init: {e}"))))?;
            prepared.soliton = Some(p);
            place_soliton(&p, ev, grid, false)?
        }
        InitConfig::LockedSoliton { a, branch, alpha, dressed } => {
            let sol = solve_locked(*a, *branch, 0.0).map_err(|e| Failure::Config(ConfigError(format!("init: {e}"))))?;
            let (alpha0, balanced) = match alpha {
                Some(a) => (*a, false),
                None => match balanced_lock_angle_closed_form(&sol, sigma0, &scaled) {
                    Some(a) => (a, true),
                    None => {
                        return config_err(format!(
                            "init: the forcing cannot balance the mass law at sigma = {sigma0}; give init.alpha"
                        ))
                    }
                },
            };
            let p = params_with_lock_angle(sol.eta0, sol.kappa0, alpha0, sigma0, &scaled.active_forcing());
            let laws = predict_parameter_laws(&sol);
            prepared.locked = Some(LockedStart {
                solution: sol,
                alpha0,
                alpha_balanced: balanced,
                initial_params: p,
                omega_rate: laws.omega_rate,
                v_rate: laws.v_rate,
                alpha_rate: laws.alpha_rate,
            });
            prepared.soliton = Some(p);
            prepared.dressed = *dressed;
            place_soliton(&p, ev, grid, *dressed)?
        }
    };
    prepared.init = InitialState::Field(field);
    Ok(prepared)
}

/// Run one planned scenario. `Err` is a configuration problem found late
/// (exit 2); numerical trouble comes back as an aborted [`Outcome`].
pub fn execute(scenario: &Scenario, plan: &Plan) -> Result<Outcome, ConfigError> {
    match plan {
        Plan::SineGordon(sg) => Ok(execute_sine_gordon(scenario, sg)),
        Plan::Evolution(ev) => execute_evolution(scenario, ev),
    }
}

fn execute_evolution(scenario: &Scenario, ev: &Evolution) -> Result<Outcome, ConfigError> {
    let prepared = match prepare(ev) {
        Ok(p) => p,
        Err(Failure::Config(e)) => return Err(e),
        Err(Failure::Numerical(msg)) => {
            let rec = TrajectoryRecord::default();
            let summary = summary(scenario, ev, None, &rec, Some((ev.stepper.t_start, msg)), vec![]);
            return Ok(Outcome { csv_name: "trajectory.csv", csv: trajectory_csv(&rec), summary, aborted: true });
        }
    };
    let initial = prepared.init.clone();
    let (record, final_state, failure) =
        match run_trajectory_with_absorber(prepared.init.clone(), &ev.stepper, &ev.model, ev.absorber) {
            Ok(t) => (t.record, Some(t.final_state), None),
            Err(abort) => (abort.partial, None, Some((abort.time, abort.error.to_string()))),
        };
    let analyses = ev
        .analysis
        .iter()
        .map(|a| analyse(a, ev, &prepared, &initial, &record, final_state.as_ref()))
        .collect();
    let aborted = failure.is_some();
    let summary = summary(scenario, ev, Some(&prepared), &record, failure, analyses);
    Ok(Outcome { csv_name: "trajectory.csv", csv: trajectory_csv(&record), summary, aborted })
}

fn summary(
    scenario: &Scenario,
    ev: &Evolution,
    prepared: Option<&Prepared>,
    rec: &TrajectoryRecord,
    failure: Option<(f64, String)>,
    analyses: Vec<Value>,
) -> Value {
    let initial_state = match (&ev.init, prepared.map(|p| p.dressed)) {
        (InitConfig::LockedSoliton { .. }, Some(true)) => "dressed_locked_soliton",
        (InitConfig::LockedSoliton { .. }, _) => "locked_soliton",
        (InitConfig::Soliton { .. }, _) => "soliton",
        (InitConfig::Zero, _) => "zero",
        (InitConfig::Scalar { .. }, _) => "scalar",
        (InitConfig::File { .. }, _) => "file",
    };
    json!({
        "scenario": scenario.name,
        "config": scenario,
        "status": if failure.is_some() { "aborted" } else { "completed" },
        "failure": failure.map(|(t, m)| json!({ "time": t, "message": m })),
        "solver": {
            "method": if ev.model.kind.is_pde() { "strang_split_step_fourier" } else { "rk4" },
            "dt": ev.stepper.dt,
            "steps_planned": ev.stepper.steps(),
            "steps_taken": rec.steps_taken,
            "records": rec.samples.len(),
            "grid_points": ev.grid.map(|g| g.n()),
            "box_length": ev.grid.map(|g| g.length()),
            "absorber": ev.absorber,
            "initial_state": initial_state,
        },
        "locked_reference": prepared.and_then(|p| p.locked),
        "analyses": analyses,
    })
}

fn quantity(q: Quantity, s: &TrajectorySample) -> Option<f64> {
    match q {
        Quantity::Mass => Some(s.mass),
        Quantity::PeakAmp => Some(s.peak_amp),
        Quantity::Eta => s.params.map(|p| p.eta),
        Quantity::Kappa => s.params.map(|p| p.kappa),
        Quantity::ForcingAmp => Some(s.forcing_amp),
        Quantity::PsiPeak => Some(s.psi_peak),
        Quantity::PsiForcing => Some(s.psi_forcing),
    }
}

fn analyse(
    a: &AnalysisConfig,
    ev: &Evolution,
    prepared: &Prepared,
    initial: &InitialState,
    rec: &TrajectoryRecord,
    final_state: Option<&FinalState>,
) -> Value {
    let mut out = match a {
        AnalysisConfig::PowerLawFit { quantity: q, against, window } => {
            let (mut ts, mut vs) = (vec![], vec![]);
            for s in &rec.samples {
                if let Some(v) = quantity(*q, s) {
                    ts.push(match against {
                        Axis::Time => s.time,
                        Axis::Tau => s.tau,
                    });
                    vs.push(v);
                }
            }
            match fit_power_law(&ts, &vs, window.map(|w| (w[0], w[1]))) {
                Ok(f) => json!({
                    "quantity": q, "against": against, "exponent": f.exponent, "prefactor": f.prefactor,
                    "r_squared": f.r_squared, "window": [f.window.0, f.window.1], "samples": f.samples,
                }),
                Err(e) => json!({ "quantity": q, "against": against, "error": e.to_string() }),
            }
        }
        AnalysisConfig::LockCheck { reference, eta_reference, alpha_tolerance, eta_tolerance } => {
            lock_check(ev, prepared, rec, *reference, *eta_reference, *alpha_tolerance, *eta_tolerance)
        }
        AnalysisConfig::SpecialSolution { a } => {
            let (mut err, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
            for s in &rec.samples {
                let psi = s.state.unwrap_or_default();
                err = err.max((psi - Complex64::from_polar(s.tau.sqrt(), *a)).norm());
                if s.tau > 0.0 {
                    let r = psi.norm() / s.tau.sqrt();
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            json!({ "a": a, "max_error": err, "min_ratio": lo, "max_ratio": hi, "samples": rec.samples.len() })
        }
        AnalysisConfig::MassDrift => {
            let m0 = rec.samples.first().map_or(0.0, |s| s.mass);
            let drift = rec.samples.iter().map(|s| (s.mass - m0).abs()).fold(0.0, f64::max);
            let relative = if m0 > 0.0 { drift / m0 } else { drift };
            json!({ "initial_mass": m0, "max_relative_drift": relative })
        }
        AnalysisConfig::SolitonError => match (final_state, prepared.soliton, ev.grid) {
            (Some(FinalState::Field(f)), Some(p), Some(g)) => {
                let (w, v) = p.free_rates();
                let dt = ev.stepper.steps() as f64 * ev.stepper.dt;
                let exact = SolitonParams { omega: p.omega + w * dt, v: p.v + v * dt, ..p };
                match soliton_field(&exact, &g) {
                    Ok(e) => json!({ "relative_l2": f.relative_l2_distance(&e), "elapsed": dt }),
                    Err(e) => json!({ "error": e.to_string() }),
                }
            }
            _ => json!({ "error": "run did not complete" }),
        },
        AnalysisConfig::DualFrameCheck { steps, half_width } => match (initial, final_state) {
            (InitialState::Field(phi0), Some(FinalState::Field(phi1))) => {
                dual_frame(ev, phi0, phi1, *steps, *half_width).unwrap_or_else(|e| json!({ "error": e }))
            }
            _ => json!({ "error": "run did not complete" }),
        },
        AnalysisConfig::Functionals { sigmas } => match prepared.locked {
            Some(l) => functionals(ev, &l.solution, sigmas).unwrap_or_else(|e| json!({ "error": e })),
            None => json!({ "error": "no locked start" }),
        },
    };
    let kind = serde_json::to_value(a).ok().and_then(|v| v.get("kind").cloned()).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut out {
        m.insert("kind".into(), kind);
    }
    out
}

fn lock_check(
    ev: &Evolution,
    prepared: &Prepared,
    rec: &TrajectoryRecord,
    reference: Option<f64>,
    eta_reference: Option<f64>,
    alpha_tol: f64,
    eta_tol: f64,
) -> Value {
    let scaled = scaled_view(&ev.model);
    let locked = prepared.locked;
    let eta_ref = eta_reference.or(locked.map(|l| l.solution.eta0)).unwrap_or(f64::NAN);
    let (mut offsets, mut non_soliton, mut first_lost, mut unbalanced) = (vec![], 0usize, None, 0usize);
    let mut eta_dev = 0.0f64;
    for s in &rec.samples {
        let (Some(p), Some(alpha)) = (s.params, s.alpha) else {
            non_soliton += 1;
            first_lost.get_or_insert(s.time);
            continue;
        };
        eta_dev = eta_dev.max((p.eta - eta_ref).abs() / eta_ref);
        let r = match (reference, locked) {
            (Some(r), _) => Some(r),
            (None, Some(l)) if l.alpha_balanced => balanced_lock_angle_closed_form(&l.solution, sample_sigma(&ev.model, s), &scaled),
            (None, Some(l)) => Some(l.alpha0),
            (None, None) => None,
        };
        match r {
            Some(r) => offsets.push(wrap_angle(alpha - r)),
            None => unbalanced += 1,
        }
    }
    if offsets.is_empty() {
        return json!({ "error": "no soliton-like samples with a reference angle", "non_soliton_samples": non_soliton });
    }
    let v = lock_verdict(&offsets, Some(0.0));
    let within = non_soliton == 0 && unbalanced == 0 && v.max_excursion <= alpha_tol && eta_dev <= eta_tol;
    json!({
        "locked": v.locked,
        "within_tolerance": within,
        "mean_offset": v.mean,
        "std_dev": v.std_dev,
        "max_alpha_deviation": v.max_excursion,
        "alpha_tolerance": alpha_tol,
        "eta_reference": eta_ref,
        "max_eta_deviation": eta_dev,
        "eta_tolerance": eta_tol,
        "samples": rec.samples.len(),
        "non_soliton_samples": non_soliton,
        "first_non_soliton_time": first_lost,
        "unbalanced_samples": unbalanced,
        "initial_reference": locked.map(|l| l.alpha0).or(reference),
    })
}

fn dual_frame(ev: &Evolution, phi0: &ComplexField, phi1: &ComplexField, steps: usize, half_width: f64) -> Result<Value, String> {
    let (s0, s1) = (ev.stepper.t_start, ev.stepper.t_start + ev.stepper.steps() as f64 * ev.stepper.dt);
    let original = ModelSpec::original(ev.model.forcing.to_original(), 0.0);
    let psi0 = map_field_scaled_to_original(phi0, s0).map_err(|e| e.to_string())?;
    let tau1 = (2.0 * s1).sqrt();
    let dtau = (tau1 - psi0.tau) / steps as f64;
    let mut st = SplitStep::new(original, Spectral::new(psi0.zeta_grid), dtau).map_err(|e| e.to_string())?;
    let mut psi = psi0.psi.into_values();
    for j in 0..steps {
        st.step(&mut psi, psi0.tau + j as f64 * dtau).map_err(|e| e.to_string())?;
    }
    let psi1 = ComplexField::new(psi0.zeta_grid, psi).map_err(|e| e.to_string())?;
    let mapped = map_field_original_to_scaled(&psi1, tau1).map_err(|e| e.to_string())?;
    let g = *phi1.grid();
    let idx: Vec<usize> = (0..g.n()).filter(|&j| g.point(j).abs() <= half_width).collect();
    let at: Vec<f64> = idx.iter().map(|&j| g.point(j)).collect();
    let from_original = Spectral::new(mapped.z_grid).interpolate(&mapped.phi, &at);
    let (mut num, mut den) = (0.0, 0.0);
    for (&j, v) in idx.iter().zip(&from_original) {
        num += (v - phi1.values()[j]).norm_sqr();
        den += phi1.values()[j].norm_sqr();
    }
    Ok(json!({
        "relative_l2": if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
        "tau_window": [psi0.tau, tau1],
        "original_steps": steps,
        "half_width": half_width,
    }))
}

fn functionals(ev: &Evolution, sol: &LockedSolution, sigmas: &[f64]) -> Result<Value, String> {
    let forcing = ev.model.active_forcing();
    let (mut h0, mut defect) = (vec![], 0.0f64);
    for &s in sigmas {
        let p = params_with_lock_angle(sol.eta0, sol.kappa0, sol.alpha, s, &forcing);
        h0.push(h0_quadrature(&p, s, &ev.model).map_err(|e| e.to_string())?.value);
        defect = defect.max(h1_quadrature(&p, s, &ev.model).map_err(|e| e.to_string())?.identity_defect());
    }
    let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = h0.iter().map(|h| h.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(json!({
        "sigmas": sigmas,
        "alpha_branch": sol.alpha,
        "h0": h0,
        "h0_exponent": sxy / sxx,
        "h1_identity_defect": defect,
    }))
}

fn execute_sine_gordon(scenario: &Scenario, sg: &SineGordonConfig) -> Outcome {
    let results: Vec<(f64, Result<EnvelopeReport, String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = sg
            .epsilons
            .iter()
            .map(|&eps| (eps, scope.spawn(move || run_envelope_check(&EnvelopeCheck::standard(eps)).map_err(|e| e.to_string()))))
            .collect();
        handles
            .into_iter()
            .map(|(eps, h)| (eps, h.join().unwrap_or_else(|_| Err("worker panicked".into()))))
            .collect()
    });
    let mut csv = String::from("epsilon,initial_mismatch,final_mismatch,t_end,x_points,x_length\n");
    let mut reports = vec![];
    let mut failure = None;
    for (eps, r) in &results {
        match r {
            Ok(r) => {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    num(r.epsilon),
                    num(r.initial_mismatch),
                    num(r.final_mismatch),
                    num(r.t_end),
                    r.x_points,
                    num(r.x_length)
                ));
                reports.push(*r);
            }
            Err(e) => {
                failure.get_or_insert(json!({ "epsilon": eps, "message": e }));
            }
        }
    }
    let mut by_eps = reports.clone();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let monotone = by_eps.windows(2).all(|w| w[1].final_mismatch < w[0].final_mismatch);
    let within = reports
        .iter()
        .filter(|r| r.epsilon <= sg.limit_epsilon + 1e-12)
        .all(|r| r.final_mismatch <= sg.mismatch_limit);
    let aborted = failure.is_some();
    let summary = json!({
        "scenario": scenario.name,
        "config": scenario,
        "status": if aborted { "aborted" } else { "completed" },
        "failure": failure,
        "solver": { "method": "sine_gordon_velocity_verlet", "runs": reports.len() },
        "envelope": reports,
        "monotone_in_epsilon": monotone,
        "within_limit": within,
    });
    Outcome { csv_name: "envelope.csv", csv, summary, aborted }
}
