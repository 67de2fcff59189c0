use std::path::Path;
use std::process::Command;

use openmhd::config::{load_config, write_config, ScenarioConfig};
use openmhd::dump::FieldDump;
use openmhd::profiles::Profile;
use openmhd::run::run_scenario;
use openmhd::scenarios::{scenario, scenario_library, scenario_names};
use openmhd::{ConfigIssue, Error};

const MINIMAL: &str = r#"{
  "name": "minimal",
  "grid": { "nx": 8, "ny": 8 },
  "material": { "mu": 1.0, "lambda": 0.0, "kappa": 1.0, "cv": 1.0, "xi": 1.0 },
  "initial": {
    "rho": { "kind": "constant", "value": 1.0 },
    "u": { "x": { "kind": "constant", "value": 0.0 }, "y": { "kind": "constant", "value": 0.0 }, "z": { "kind": "constant", "value": 0.0 } },
    "theta": { "kind": "constant", "value": 1.0 },
    "b": { "x": { "kind": "constant", "value": 0.3 }, "y": { "kind": "constant", "value": 0.2 }, "z": { "kind": "constant", "value": 0.1 } }
  },
  "boundary": {
    "rho": { "kind": "constant", "value": 1.0 },
    "u": { "x": { "kind": "constant", "value": 0.0 }, "y": { "kind": "constant", "value": 0.0 }, "z": { "kind": "constant", "value": 0.0 } },
    "theta": { "kind": "constant", "value": 1.0 },
    "b": { "x": { "kind": "constant", "value": 0.3 }, "y": { "kind": "constant", "value": 0.2 }, "z": { "kind": "constant", "value": 0.1 } },
    "inflow_threshold": 0.5
  },
  "potential": { "kind": "constant", "value": 0.0 },
  "time": { "horizon": 0.05, "dt": 0.01, "window": 0.05 },
  "p": 4.0,
  "q": 4.0
}"#;

fn issues(e: Error) -> Vec<ConfigIssue> {
    match e {
        Error::InvalidConfig(issues) => issues,
        other => panic!("expected InvalidConfig, got {other}"),
    }
}

#[test]
fn minimal_stationary_config_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("minimal.json");
    std::fs::write(&path, MINIMAL).unwrap();
    let (cfg, warnings) = load_config(&path).unwrap();
    assert_eq!(cfg.grid.nx, 8);
    assert_eq!(cfg.fixed_point.max_iter, 30);
    assert!(warnings.is_empty());
}

#[test]
fn builtins_round_trip_field_for_field() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in scenario_library() {
        let path = dir.path().join(format!("{}.json", cfg.name));
        write_config(&cfg, &path).unwrap();
        let (back, _) = load_config(&path).unwrap();
        assert_eq!(back, cfg, "{}", cfg.name);
    }
}

#[test]
fn malformed_json_is_a_parse_error() {
    assert!(matches!(ScenarioConfig::from_json("{ \"name\": "), Err(Error::Parse(_))));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_config(&dir.path().join("missing.json")), Err(Error::Io(_))));
}

#[test]
fn inflow_density_mismatch_names_the_condition() {
    let mut cfg = scenario("inflow-channel").unwrap();
    cfg.problem.boundary.rho = Profile::constant(2.0);
    let found = issues(cfg.validate().unwrap_err());
    let compat: Vec<&ConfigIssue> = found.iter().filter(|i| matches!(i, ConfigIssue::CompatibilityViolated { .. })).collect();
    assert_eq!(compat.len(), 1);
    match compat[0] {
        ConfigIssue::CompatibilityViolated { condition, faces, .. } => {
            assert!(condition.contains("rho0 = rho_B(0)"));
            assert_eq!(*faces, 33);
        }
        _ => unreachable!(),
    }
}

#[test]
fn every_violation_is_reported_together() {
    let mut cfg = scenario("inflow-channel").unwrap();
    cfg.problem.boundary.rho = Profile::constant(2.0);
    cfg.problem.boundary.theta = Profile::constant(3.0);
    cfg.problem.material.kappa = 0.0;
    cfg.time.horizon = 0.1005;
    cfg.p = 2.0;
    let found = issues(cfg.validate().unwrap_err());
    let text: Vec<String> = found.iter().map(|i| i.to_string()).collect();
    assert!(found.iter().filter(|i| matches!(i, ConfigIssue::CompatibilityViolated { .. })).count() == 2, "{text:?}");
    assert!(found.iter().any(|i| matches!(i, ConfigIssue::ExponentConditionViolated { .. })));
    assert!(text.iter().any(|t| t.contains("kappa")));
    assert!(text.iter().any(|t| t.contains("multiple of dt")));
}

#[test]
fn exponent_condition_and_override() {
    let mut cfg = scenario("stationary").unwrap();
    cfg.p = 2.0;
    cfg.q = 4.0;
    let found = issues(cfg.validate().unwrap_err());
    match &found[..] {
        [ConfigIssue::ExponentConditionViolated { p, q, detail }] => {
            assert_eq!((*p, *q), (2.0, 4.0));
            assert!(detail.contains("2.6667"), "{detail}");
        }
        other => panic!("{other:?}"),
    }
    cfg.override_exponent_check = true;
    let warnings = cfg.validate().unwrap();
    assert!(warnings.iter().any(|w| w.contains("overridden")));
}

#[test]
fn scenario_lookup() {
    let names = scenario_names();
    assert_eq!(names, ["inflow-channel", "joule-box", "manufactured-full", "stationary", "translation-inflow", "uniform-divergence"]);
    assert!(matches!(scenario(""), Err(Error::UnknownScenario(_))));
    assert!(matches!(scenario("nope"), Err(Error::UnknownScenario(_))));
}

#[test]
fn stationary_run_writes_constant_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scenario("stationary").unwrap();
    cfg.output.cadence = 5;
    let out = run_scenario(&cfg, Some(dir.path())).unwrap();
    assert!(out.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["iterates", "windows", "converged", "final_time", "diagnostics"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["windows"][0]["outcome"], "CONVERGED");
    for level in [0, 5, 10] {
        let rho = FieldDump::read(&dir.path().join(format!("rho_{level:06}.dat"))).unwrap();
        assert!(rho.values[0].iter().all(|&v| v == 1.0));
        let b = FieldDump::read(&dir.path().join(format!("b_{level:06}.dat"))).unwrap();
        assert_eq!(b.values.len(), 3);
        for (c, want) in [0.3, 0.2, 0.1].into_iter().enumerate() {
            assert!(b.values[c].iter().all(|&v| (v - want).abs() < 1e-12));
        }
    }
    assert!(!dir.path().join("rho_000003.dat").exists());
}

#[test]
fn absurd_time_step_reports_no_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scenario("inflow-channel").unwrap();
    cfg.time = openmhd::config::TimeSpec { horizon: 0.5, dt: 0.25, window: 0.5 };
    let out = run_scenario(&cfg, Some(dir.path())).unwrap();
    assert!(!out.report.converged && !out.success());
    assert!(dir.path().join("report.json").exists());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_openmhd"))
}

fn code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_surface() {
    let (status, listing) = code(bin().arg("list-scenarios"));
    assert_eq!(status, 0);
    assert_eq!(listing.lines().collect::<Vec<_>>(), scenario_names());

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("stationary.json");
    assert_eq!(code(bin().args(["dump-scenario", "stationary", "--out"]).arg(&config)).0, 0);
    assert_eq!(code(bin().arg("check").arg(&config)).0, 0);

    let bad = dir.path().join("bad.json");
    let mut cfg = scenario("stationary").unwrap();
    cfg.p = 2.0;
    write_config(&cfg, &bad).unwrap();
    assert_eq!(code(bin().arg("check").arg(&bad)).0, 2);
    assert_eq!(code(bin().args(["--override-exponent-check", "check"]).arg(&bad)).0, 0);

    let out_dir = dir.path().join("out");
    let (status, _) = code(bin().args(["--threads", "2", "run"]).arg(&config).arg("--out").arg(&out_dir));
    assert_eq!(status, 0);
    assert!(out_dir.join("report.json").exists());

    let env_dir = dir.path().join("env");
    let (status, _) = code(bin().arg("run").arg(&config).env("OPENMHD_OUT", &env_dir));
    assert_eq!(status, 0);
    assert!(Path::new(&env_dir).join("rho_000010.dat").exists());
}
