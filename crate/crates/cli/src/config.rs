//! Scenario files.
//!
//! A scenario is a TOML document with the sections `model`, `grid`,
//! `stepper`, `init` and any number of `[[analysis]]` tables, or a single
//! `sine_gordon` section for the envelope validator. Unknown keys are errors.

use std::path::{Path, PathBuf};

use autores_core::asymptotics::BranchSign;
use autores_core::models::{ForcingSpec, FrameTerm, ModelKind, ModelSpec};
use autores_core::numerics::{make_grid, GridSpec};
use autores_core::solvers::StepperConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// A problem with a scenario file; maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: Option<ModelConfig>,
    pub grid: Option<GridConfig>,
    pub stepper: Option<StepperConfig>,
    pub init: Option<InitConfig>,
    #[serde(default)]
    pub analysis: Vec<AnalysisConfig>,
    pub sine_gordon: Option<SineGordonConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub nu: f64,
    /// Defaults to 2 in the scaled frame, 1 otherwise.
    pub nonlinearity: Option<f64>,
    /// Defaults to `off` for `unperturbed_nls`, `full` otherwise.
    pub frame_term: Option<FrameTerm>,
    #[serde(default = "yes")]
    pub dispersion: bool,
}

fn yes() -> bool {
    true
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        let base = ModelSpec::new(self.kind);
        ModelSpec {
            forcing: self.forcing,
            nu: self.nu,
            nonlinearity: self.nonlinearity.unwrap_or(base.nonlinearity),
            frame_term: self.frame_term.unwrap_or(base.frame_term),
            dispersion: self.dispersion,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub length: f64,
    /// Edge absorber strength; 0 disables.
    #[serde(default)]
    pub absorber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Locked soliton from the asymptotic solution at `A`, with lock angle
    /// `alpha` (the balanced angle when omitted). `dressed` replaces the bare
    /// ansatz by the nearby quasi-static forced state.
    LockedSoliton {
        #[serde(default = "half")]
        a: f64,
        #[serde(default = "plus")]
        branch: BranchSign,
        alpha: Option<f64>,
        #[serde(default)]
        dressed: bool,
    },
    /// Explicit soliton parameters in the scaled frame.
    Soliton {
        eta: f64,
        #[serde(default)]
        kappa: f64,
        #[serde(default, rename = "Omega")]
        omega: f64,
        #[serde(default, rename = "V")]
        v: f64,
    },
    Zero,
    /// ODE initial value.
    Scalar {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// Two-column `re,im` CSV, one row per grid point, optional header.
    /// Relative paths are taken from the scenario file's directory.
    File { path: PathBuf },
}

fn half() -> f64 {
    0.5
}

fn plus() -> BranchSign {
    BranchSign::Plus
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Mass,
    PeakAmp,
    Eta,
    Kappa,
    ForcingAmp,
    /// Peak `|Ψ|` in the original frame.
    PsiPeak,
    /// `|F|` in the original frame.
    PsiForcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[default]
    Time,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisConfig {
    /// `quantity ∝ axis^p` fit; over the last decade when `window` is absent.
    PowerLawFit {
        quantity: Quantity,
        #[serde(default)]
        against: Axis,
        window: Option<[f64; 2]>,
    },
    /// Lock-angle statistics, relative to the balanced angle of a locked
    /// start (or `reference`), plus the worst `η` deviation from `eta_reference`
    /// (the locked `η₀` when absent).
    LockCheck {
        reference: Option<f64>,
        eta_reference: Option<f64>,
        #[serde(default = "half")]
        alpha_tolerance: f64,
        #[serde(default = "tenth")]
        eta_tolerance: f64,
    },
    /// ODE only: distance to `√τ e^{ia}`.
    SpecialSolution { a: f64 },
    /// Largest relative mass change over the run.
    MassDrift,
    /// Unperturbed NLS from a soliton start: relative L2 distance to the
    /// translated exact soliton at the end.
    SolitonError,
    /// Scaled models only: integrate the original-frame counterpart from the
    /// mapped initial field with `steps` steps and compare at the end.
    DualFrameCheck {
        steps: usize,
        #[serde(default = "thirty")]
        half_width: f64,
    },
    /// `H0`/`H1` quadratures at the locked parameters for each `σ`.
    Functionals { sigmas: Vec<f64> },
}

fn tenth() -> f64 {
    0.1
}

fn thirty() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineGordonConfig {
    pub epsilons: Vec<f64>,
    /// Mismatch limit at `t = 0.5/ε²`, applied for every `ε <= limit_epsilon`.
    #[serde(default = "mismatch_limit")]
    pub mismatch_limit: f64,
    #[serde(default = "tenth")]
    pub limit_epsilon: f64,
}

fn mismatch_limit() -> f64 {
    0.15
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    Evolution(Evolution),
    SineGordon(SineGordonConfig),
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub model: ModelSpec,
    pub grid: Option<GridSpec>,
    pub absorber: Option<f64>,
    pub stepper: StepperConfig,
    pub init: InitConfig,
    pub analysis: Vec<AnalysisConfig>,
    /// Directory for relative paths in the scenario.
    pub base_dir: PathBuf,
}

/// Parse TOML text; errors carry the line and column.
pub fn parse(text: &str, origin: &str) -> Result<Scenario, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))
}

/// Parse, then apply `key=value` overrides (dotted keys; numeric parts index
/// arrays, so `analysis.0.window=[10.0, 100.0]`). Values are TOML literals;
/// anything that does not parse as one is taken as a string.
pub fn parse_with_overrides(text: &str, origin: &str, overrides: &[String]) -> Result<Scenario, ConfigError> {
    let scenario = parse(text, origin)?;
    if overrides.is_empty() {
        return Ok(scenario);
    }
    let mut table: Table = text.parse().map_err(|e| ConfigError(format!("{origin}: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Scenario::deserialize(Value::Table(table)).map_err(|e| ConfigError(format!("{origin} after overrides: {e}")))
}

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let Some((key, raw)) = spec.split_once('=') else {
        return err(format!("override `{spec}` is not of the form key=value"));
    };
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return err(format!("override key `{key}` is malformed"));
    }
    let value = parse_value(raw.trim());
    let mut cur: &mut Value = table
        .entry(parts[0])
        .or_insert_with(|| if parts.len() > 1 { Value::Table(Table::new()) } else { Value::Boolean(false) });
    for (i, part) in parts.iter().enumerate().skip(1) {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Table(t) => t
                .entry(*part)
                .or_insert_with(|| if last { Value::Boolean(false) } else { Value::Table(Table::new()) }),
            Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| ConfigError(format!("override `{key}`: `{part}` must index an array")))?;
                let len = a.len();
                a.get_mut(idx)
                    .ok_or_else(|| ConfigError(format!("override `{key}`: index {idx} out of range ({len} entries)")))?
            }
            _ => return err(format!("override `{key}`: `{}` is not a table", parts[..i].join("."))),
        };
    }
    *cur = value;
    Ok(())
}

impl Scenario {
    /// Fill model defaults in place so the echoed configuration is complete.
    pub fn resolve_defaults(&mut self) {
        if let Some(m) = &mut self.model {
            let spec = m.spec();
            m.nonlinearity = Some(spec.nonlinearity);
            m.frame_term = Some(spec.frame_term);
        }
    }

    /// Check everything that can be checked without running.
    pub fn plan(&self, base_dir: &Path) -> Result<Plan, ConfigError> {
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
            || self.name.starts_with('.')
        {
            return err(format!("name `{}` must be a non-empty file name of [A-Za-z0-9_.-]", self.name));
        }
        if let Some(sg) = &self.sine_gordon {
            if self.model.is_some() || self.grid.is_some() || self.stepper.is_some() || self.init.is_some() {
                return err("a sine_gordon scenario takes no model, grid, stepper or init section");
            }
            if !self.analysis.is_empty() {
                return err("a sine_gordon scenario takes no analysis section");
            }
            if sg.epsilons.is_empty() || sg.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 0.5)) {
                return err("sine_gordon.epsilons must be a non-empty list in (0, 0.5]");
            }
            return Ok(Plan::SineGordon(sg.clone()));
        }
        let Some(mc) = &self.model else { return err("missing [model] section") };
        let Some(stepper) = self.stepper else { return err("missing [stepper] section") };
        let Some(init) = &self.init else { return err("missing [init] section") };
        let model = mc.spec();
        model.validate().map_err(|e| ConfigError(format!("model: {e}")))?;
        stepper.validate(model.kind).map_err(|e| ConfigError(format!("stepper: {e}")))?;
        let (grid, absorber) = match (&self.grid, model.kind.is_pde()) {
            (Some(g), true) => {
                let grid = make_grid(g.n, g.length).map_err(|e| ConfigError(format!("grid: {e}")))?;
                if !(g.absorber.is_finite() && g.absorber >= 0.0) {
                    return err(format!("grid.absorber must be >= 0, got {}", g.absorber));
                }
                (Some(grid), (g.absorber > 0.0).then_some(g.absorber))
            }
            (None, true) => return err("PDE models need a [grid] section"),
            (Some(_), false) => return err("the ODE model takes no [grid] section"),
            (None, false) => (None, None),
        };
        match (init, model.kind) {
            (InitConfig::Scalar { .. }, ModelKind::OdePrimaryResonance) => {}
            (InitConfig::Zero, _) => {}
            (_, ModelKind::OdePrimaryResonance) => return err("the ODE model needs init.kind = \"scalar\" or \"zero\""),
            (InitConfig::Scalar { .. }, _) => return err("init.kind = \"scalar\" is for the ODE model only"),
            (InitConfig::LockedSoliton { a, dressed, .. }, kind) => {
                if !(a.is_finite() && *a >= autores_core::asymptotics::LOCKED_A_MIN) {
                    return err(format!("init.a = {a}: locked solutions need A >= 0.5"));
                }
                if *dressed && !kind.is_scaled_frame() {
                    return err("init.dressed is only available for scaled-frame models");
                }
            }
            (InitConfig::Soliton { eta, .. }, _) => {
                if !(*eta > 0.0 && eta.is_finite()) {
                    return err(format!("init.eta must be > 0, got {eta}"));
                }
            }
            (InitConfig::File { .. }, _) => {}
        }
        for (i, a) in self.analysis.iter().enumerate() {
            check_analysis(i, a, &model, init)?;
        }
        Ok(Plan::Evolution(Evolution {
            model,
            grid,
            absorber,
            stepper,
            init: init.clone(),
            analysis: self.analysis.clone(),
            base_dir: base_dir.to_path_buf(),
        }))
    }
}

fn check_analysis(i: usize, a: &AnalysisConfig, m: &ModelSpec, init: &InitConfig) -> Result<(), ConfigError> {
    let locked = matches!(init, InitConfig::LockedSoliton { .. });
    let ode = !m.kind.is_pde();
    match a {
        AnalysisConfig::PowerLawFit { quantity, window, .. } => {
            if ode && matches!(quantity, Quantity::Eta | Quantity::Kappa) {
                return err(format!("analysis {i}: {quantity:?} is not recorded for the ODE"));
            }
            if let Some([lo, hi]) = window {
                if !(*lo > 0.0 && lo < hi) {
                    return err(format!("analysis {i}: window must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
                }
            }
        }
        AnalysisConfig::LockCheck { reference, eta_reference, .. } => {
            if ode {
                return err(format!("analysis {i}: lock_check needs a PDE model"));
            }
            if !locked && (reference.is_none() || eta_reference.is_none()) {
                return err(format!(
                    "analysis {i}: lock_check needs reference and eta_reference unless init is locked_soliton"
                ));
            }
        }
        AnalysisConfig::SpecialSolution { .. } => {
            if !ode {
                return err(format!("analysis {i}: special_solution is for the ODE model"));
            }
        }
        AnalysisConfig::MassDrift => {}
        AnalysisConfig::SolitonError => {
            if m.kind != ModelKind::UnperturbedNls || !matches!(init, InitConfig::Soliton { .. }) {
                return err(format!("analysis {i}: soliton_error needs unperturbed_nls with a soliton init"));
            }
        }
        AnalysisConfig::DualFrameCheck { steps, half_width } => {
            if m.kind != ModelKind::Scaled || m.frame_term != FrameTerm::Full {
                return err(format!("analysis {i}: dual_frame_check needs the scaled model with frame_term = full"));
            }
            if *steps == 0 || !(*half_width > 0.0) {
                return err(format!("analysis {i}: dual_frame_check needs steps >= 1 and half_width > 0"));
            }
        }
        AnalysisConfig::Functionals { sigmas } => {
            if !locked || !m.kind.is_scaled_frame() {
                return err(format!("analysis {i}: functionals need a scaled model with a locked_soliton init"));
            }
            if sigmas.len() < 2 || sigmas.iter().any(|s| !(*s > 0.0)) {
                return err(format!("analysis {i}: functionals need at least two positive sigmas"));
            }
        }
    }
    Ok(())
}
