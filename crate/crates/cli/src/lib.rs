//! Scenario runner for the autoresonance toolkit.
//!
//! `autores run <config>` reads a TOML scenario (a path, or the name of a
//! bundled scenario), runs it and writes `<out>/<name>/trajectory.csv` and
//! `<out>/<name>/summary.json`.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};

use config::{ConfigError, Plan, Scenario};

/// Bundled scenarios, `(name, toml)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("ode_special", include_str!("../scenarios/ode_special.toml")),
    ("ode_persistence", include_str!("../scenarios/ode_persistence.toml")),
    ("phase_locking", include_str!("../scenarios/phase_locking.toml")),
    ("autoresonance_growth", include_str!("../scenarios/autoresonance_growth.toml")),
    ("dual_frame", include_str!("../scenarios/dual_frame.toml")),
    ("dissipation_constant_forcing", include_str!("../scenarios/dissipation_constant_forcing.toml")),
    ("dissipation_growing_forcing", include_str!("../scenarios/dissipation_growing_forcing.toml")),
    ("soliton_conservation", include_str!("../scenarios/soliton_conservation.toml")),
    ("sine_gordon_envelope", include_str!("../scenarios/sine_gordon_envelope.toml")),
];

/// Scenario text with where it came from.
#[derive(Debug, Clone)]
pub struct Source {
    pub text: String,
    pub origin: String,
    pub base_dir: PathBuf,
}

pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Read a scenario from `spec`: an existing file, else a bundled name.
pub fn load(spec: &str) -> Result<Source, ConfigError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{spec}: {e}")))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok(Source { text, origin: spec.to_string(), base_dir });
    }
    match bundled(spec) {
        Some(t) => Ok(Source { text: t.to_string(), origin: format!("bundled:{spec}"), base_dir: PathBuf::from(".") }),
        None => Err(ConfigError(format!("{spec}: no such file or bundled scenario (see `autores list`)"))),
    }
}

/// Parse, apply overrides, fill defaults and plan.
pub fn prepare(src: &Source, overrides: &[String]) -> Result<(Scenario, Plan), ConfigError> {
    let mut s = config::parse_with_overrides(&src.text, &src.origin, overrides)?;
    s.resolve_defaults();
    let plan = s.plan(&src.base_dir).map_err(|e| ConfigError(format!("{}: {e}", src.origin)))?;
    Ok((s, plan))
}

/// Write the outcome under `out/<name>/`; returns that directory.
pub fn write_outcome(out: &Path, name: &str, outcome: &run::Outcome) -> std::io::Result<PathBuf> {
    let dir = out.join(name);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(outcome.csv_name), &outcome.csv)?;
    let mut json = serde_json::to_string_pretty(&outcome.summary).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)?;
    Ok(dir)
}

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
