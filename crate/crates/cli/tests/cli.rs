use std::path::Path;
use std::process::{Command, Output};

use autores_cli::{load, prepare, run, BUNDLED};
use serde_json::Value;

fn autores(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autores")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn summary(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(name).join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn analysis<'a>(s: &'a Value, kind: &str) -> &'a Value {
    s["analyses"].as_array().unwrap().iter().find(|a| a["kind"] == kind).unwrap()
}

const TINY: &str = r#"
name = "tiny"
[model]
kind = "scaled"
forcing = { law = "power", coefficient = 0.5, exponent = -0.25 }
[grid]
n = 128
length = 40.0
[stepper]
dt = 0.01
record_every = 10
t_start = 10.0
t_end = 10.5
[init]
kind = "locked_soliton"
[[analysis]]
kind = "mass_drift"
"#;

#[test]
fn every_bundled_scenario_plans() {
    assert!(BUNDLED.len() >= 6);
    for (name, _) in BUNDLED {
        let src = load(name).unwrap();
        let (s, _) = prepare(&src, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&s.name, name);
        assert!(!s.description.is_empty(), "{name} has no description");
    }
}

#[test]
fn list_names_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = autores(&["list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in BUNDLED {
        assert!(text.contains(name), "{name} missing from list");
    }
}

#[test]
fn validate_reports_ok() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let out = autores(&["validate", "tiny.toml", "ode_special"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches(": ok").count(), 2, "{text}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn unknown_key_exits_2_with_name_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), TINY.replace("n = 128", "n = 128\npoints = 3")).unwrap();
    for cmd in ["validate", "run"] {
        let out = autores(&[cmd, "bad.toml"], dir.path());
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("points"), "{err}");
        assert!(err.contains("line 8"), "{err}");
    }
}

#[test]
fn malformed_toml_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), TINY.replace("dt = 0.01", "dt = = 0.01")).unwrap();
    let out = autores(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 10"), "{err}");
}

#[test]
fn semantic_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), TINY.replace("t_start = 10.0", "t_start = 11.0")).unwrap();
    let out = autores(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("t_start < t_end"));
    let out = autores(&["run", "no_such_scenario"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = autores(&["run", "tiny_missing.toml", "--override", "stepper.dt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ode_special_reaches_the_exact_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = autores(&["run", "ode_special", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("o"), "ode_special");
    assert_eq!(s["status"], "completed");
    let err = analysis(&s, "special_solution")["max_error"].as_f64().unwrap();
    assert!(err < 1e-6, "max error {err}");
    let csv = std::fs::read_to_string(dir.path().join("o/ode_special/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), run::TRAJECTORY_HEADER);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 12);
    let tau: f64 = first[1].parse().unwrap();
    assert_eq!(tau, 1.0);
    // 17 significant digits
    assert_eq!(first[2].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn autoresonance_growth_is_sqrt_tau() {
    let dir = tempfile::tempdir().unwrap();
    let out = autores(&["run", "autoresonance_growth", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("o"), "autoresonance_growth");
    let fits: Vec<&Value> = s["analyses"].as_array().unwrap().iter().filter(|a| a["kind"] == "power_law_fit").collect();
    let growth = fits.iter().find(|f| f["quantity"] == "psi_peak").unwrap();
    let p = growth["exponent"].as_f64().unwrap();
    assert!((0.4..=0.6).contains(&p), "exponent {p}");
    assert!(growth["r_squared"].as_f64().unwrap() > 0.99);
    let forcing = fits.iter().find(|f| f["quantity"] == "psi_forcing").unwrap();
    assert!((forcing["exponent"].as_f64().unwrap() + 0.5).abs() < 0.05);
    assert_eq!(analysis(&s, "lock_check")["locked"], true);
}

#[test]
fn repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    for o in ["a", "b"] {
        let out = autores(&["run", "tiny.toml", "soliton_conservation", "--out", o], dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["tiny", "soliton_conservation"] {
        for file in ["trajectory.csv", "summary.json"] {
            let a = std::fs::read(dir.path().join("a").join(name).join(file)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(name).join(file)).unwrap();
            assert_eq!(a, b, "{name}/{file} differs");
        }
    }
}

#[test]
fn summary_echoes_resolved_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let out = autores(
        &["run", "tiny.toml", "--out", "o", "--override", "stepper.t_end=10.2", "--override", "grid.absorber=0.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("o"), "tiny");
    let c = &s["config"];
    assert_eq!(c["stepper"]["t_end"], 10.2);
    assert_eq!(c["grid"]["absorber"], 0.5);
    assert_eq!(c["model"]["nonlinearity"], 2.0);
    assert_eq!(c["model"]["frame_term"], "full");
    assert_eq!(c["model"]["forcing"]["phase"], 0.0);
    assert_eq!(s["solver"]["steps_taken"], 20);
    assert_eq!(s["solver"]["absorber"], 0.5);
    let locked = &s["locked_reference"];
    assert_eq!(locked["solution"]["eta0"], 0.5);
    assert_eq!(locked["alpha_balanced"], true);
    let sigma_end = s["config"]["stepper"]["t_end"].as_f64().unwrap();
    let csv = std::fs::read_to_string(dir.path().join("o/tiny/trajectory.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last - sigma_end).abs() < 1e-12);
}

#[test]
fn blow_up_exits_3_and_records_the_time() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "boom"
[model]
kind = "ode_primary_resonance"
[stepper]
dt = 0.5
record_every = 1
t_start = 1.0
t_end = 100.0
[init]
kind = "scalar"
re = 10.0
"#;
    std::fs::write(dir.path().join("boom.toml"), text).unwrap();
    let out = autores(&["run", "boom.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let s = summary(&dir.path().join("o"), "boom");
    assert_eq!(s["status"], "aborted");
    let t = s["failure"]["time"].as_f64().unwrap();
    assert!(t > 1.0 && t < 100.0, "failure time {t}");
    let csv = std::fs::read_to_string(dir.path().join("o/boom/trajectory.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn field_file_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let n = 64;
    let mut body = String::from("re,im\n");
    let mut expected = 0.0;
    for j in 0..n {
        let z = -20.0 + 40.0 * j as f64 / n as f64;
        body.push_str(&format!("{:.17e},0\n", 1.0 / z.cosh()));
        expected += 40.0 / n as f64 / z.cosh().powi(2);
    }
    std::fs::create_dir(dir.path().join("cfg")).unwrap();
    std::fs::write(dir.path().join("cfg/field.csv"), body).unwrap();
    let text = TINY
        .replace("n = 128", "n = 64")
        .replace("kind = \"locked_soliton\"", "kind = \"file\"\npath = \"field.csv\"")
        .replace("kind = \"scaled\"\n", "kind = \"unperturbed_nls\"\n")
        .replace("forcing = { law = \"power\", coefficient = 0.5, exponent = -0.25 }\n", "");
    std::fs::write(dir.path().join("cfg/file.toml"), text).unwrap();
    let out = autores(&["run", "cfg/file.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("o"), "tiny");
    let m0 = analysis(&s, "mass_drift")["initial_mass"].as_f64().unwrap();
    assert!((m0 - expected).abs() < 1e-12, "mass {m0} vs {expected}");

    let short = "re,im\n1,0\n";
    std::fs::write(dir.path().join("cfg/field.csv"), short).unwrap();
    let out = autores(&["run", "cfg/file.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
