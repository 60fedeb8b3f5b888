//! End-to-end tests of the command-line interface: exit codes, artifact
//! layout, determinism and config round-tripping.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pathforms")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn pathforms")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const GAUSSIAN_SMALL: &str = r#"{
  "density": {"mode": "line", "exp_poly": {"2": [-0.5, 0.0]}},
  "observables": [{"monomial": 1}, {"monomial": 2}],
  "cl": {"n_walkers": 8, "dt": 0.001, "t_burn": 5.0, "t_measure": 40.0,
          "meas_interval": 0.05, "seed": 5, "grid": {"nx": 60, "ny": 60}},
  "flux": {"random": 3},
  "output": {"dir": "out"}
}"#;

#[test]
fn analyze_reports_census() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let config = workspace_root().join("configs/example2.json");
    let out = run(&["analyze", "-c", config.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let census: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("census.json")).unwrap())
            .unwrap();
    assert_eq!(census["data"]["n_gamma"], 8);
    assert_eq!(census["data"]["n_closed"], 2);
    assert_eq!(census["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn analyze_gaussian_has_single_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        r#"{"density": {"mode": "line", "exp_poly": {"2": [-1.0, 0.0]}}}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&["analyze", "-c", &cfg, "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let census: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("census.json")).unwrap())
            .unwrap();
    assert_eq!(census["data"]["n_gamma"], 1);
}

#[test]
fn malformed_config_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", "{\"density\": {\"mode\": \"line\",}");
    let out = run(&["analyze", "-c", &cfg, "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "stderr should point at the location: {err}");

    let cfg2 = write_config(
        tmp.path(),
        "unknown.json",
        r#"{"density": {"mode": "line", "exp_poly": {"2": [-1.0, 0.0]}}, "no_such_key": 1}"#,
    );
    let out2 = run(&["analyze", "-c", &cfg2, "-o", tmp.path().join("o2").to_str().unwrap()]);
    assert_eq!(out2.status.code(), Some(2));
}

#[test]
fn sde_verifies_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let config = workspace_root().join("configs/poles3.json");
    let out = run(&["sde", "-c", config.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sde.json")).unwrap()).unwrap();
    assert_eq!(report["data"]["n_gamma"], 3);
    assert_eq!(report["data"]["n_sde"], 3);
    assert_eq!(report["data"]["pass"], true);
    assert_eq!(report["data"]["basis"].as_array().unwrap().len(), 3);
}

#[test]
fn unstabilized_window_exits_numerical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "tiny.json",
        r#"{
            "density": {
                "mode": "line",
                "poly_factors": [{"a": [2.0, 0.0], "alpha": 3}, {"a": [-1.0, 0.5], "alpha": -2}],
                "exp_poly": {"4": [-1.0, 0.0]},
                "exp_principal": [{"b": [0.0, 0.0], "d": [[0.0, 0.0], [-1.0, 0.0]]}]
            },
            "sde": {"n_max_list": [1]}
        }"#,
    );
    let out = run(&["sde", "-c", &cfg, "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runaway_exits_numerical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.json",
        r#"{
            "density": {"mode": "line", "exp_poly": {"1": [0.0, 5.0]}},
            "observables": [{"monomial": 1}],
            "cl": {"n_walkers": 2, "dt": 0.001, "t_burn": 5.0, "t_measure": 30.0,
                    "meas_interval": 0.1}
        }"#,
    );
    let out = run(&["simulate", "-c", &cfg, "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ran away"));
}

#[test]
fn simulate_fit_flux_plotdata_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "g.json", GAUSSIAN_SMALL);
    let out_dir = tmp.path().join("out");
    let od = out_dir.to_str().unwrap();

    // plotdata before any run is an error
    let out = run(&["plotdata", "-c", &cfg, "-o", od]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["simulate", "-c", &cfg, "-o", od]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["records.json", "records.csv", "histogram.bin"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let first = std::fs::read(out_dir.join("records.json")).unwrap();

    // identical seed and config reproduce the records bit for bit
    let out = run(&["simulate", "-c", &cfg, "-o", od]);
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(out_dir.join("records.json")).unwrap());

    let out = run(&["fit", "-c", &cfg, "-o", od]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    let a0 = &fit["data"]["coefficients"][0];
    assert!((a0[0].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let out = run(&["flux", "-c", &cfg, "-o", od]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("flux.json").exists());

    let out = run(&["plotdata", "-c", &cfg, "-o", od]);
    assert!(out.status.success());
    let grid = std::fs::read_to_string(out_dir.join("grid.csv")).unwrap();
    assert!(grid.lines().count() > 100);
}

#[test]
fn cylinder_plotdata_grid_is_wrapped() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cyl.json",
        r#"{
            "density": {"mode": "cylinder", "exp_poly": {"1": [0.5, 0.0], "-1": [0.5, 0.0]}},
            "observables": [{"exponential": 1}],
            "cl": {"n_walkers": 4, "dt": 0.001, "t_burn": 3.0, "t_measure": 20.0,
                    "meas_interval": 0.1, "grid": {"nx": 40, "ny": 40}}
        }"#,
    );
    let od = tmp.path().join("out");
    let out = run(&["simulate", "-c", &cfg, "-o", od.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["plotdata", "-c", &cfg, "-o", od.to_str().unwrap()]);
    assert!(out.status.success());
    let grid = std::fs::read_to_string(od.join("grid.csv")).unwrap();
    let xs: Vec<f64> = grid
        .lines()
        .skip(3) // two header comments + column header
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let max = xs.iter().copied().fold(f64::MIN, f64::max);
    let min = xs.iter().copied().fold(f64::MAX, f64::min);
    assert!(min >= 0.0 && max < std::f64::consts::TAU, "x range [{min}, {max}]");
}

#[test]
fn emitted_config_roundtrips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "g.json", GAUSSIAN_SMALL);
    let od1 = tmp.path().join("o1");
    let out = run(&["analyze", "-c", &cfg, "-o", od1.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(od1.join("census.json")).unwrap()).unwrap();
    let resolved = &doc["config"];

    // feed the resolved config back in; it must resolve to itself
    let cfg2 = write_config(tmp.path(), "resolved.json", &serde_json::to_string(resolved).unwrap());
    let od2 = tmp.path().join("o2");
    let out = run(&["analyze", "-c", &cfg2, "-o", od2.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(od2.join("census.json")).unwrap()).unwrap();
    assert_eq!(resolved, &doc2["config"], "resolved config must be a fixed point");
}

#[test]
fn shipped_configs_are_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = workspace_root().join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        seen += 1;
        let od = tmp.path().join(format!("o{seen}"));
        let out = run(&["analyze", "-c", path.to_str().unwrap(), "-o", od.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(seen >= 6, "expected the shipped config set, found {seen}");
}

#[test]
fn auto_paths_equal_explicit_paths() {
    // resolve the spanning set in-process, feed it back as an explicit list
    let d = pathforms::corpus::ex1();
    let paths = pathforms::contour::spanning_paths(&d, &d.census().unwrap()).unwrap();
    let explicit = serde_json::to_string(&paths).unwrap();
    let density = r#"{
        "mode": "line",
        "poly_factors": [{"a": [0.0, 1.0], "alpha": 2}],
        "exp_poly": {"2": [-1.6, 0.0]}
    }"#;
    let tmp = tempfile::tempdir().unwrap();
    let cfg_auto = write_config(
        tmp.path(),
        "auto.json",
        &format!(r#"{{"density": {density}, "observables": [{{"monomial": 1}}, {{"exponential": -1}}], "paths": "auto"}}"#),
    );
    let cfg_explicit = write_config(
        tmp.path(),
        "explicit.json",
        &format!(r#"{{"density": {density}, "observables": [{{"monomial": 1}}, {{"exponential": -1}}], "paths": {explicit}}}"#),
    );
    let mut tables = Vec::new();
    for (cfg, od) in [(&cfg_auto, "oa"), (&cfg_explicit, "oe")] {
        let out_dir = tmp.path().join(od);
        let out = run(&["integrate", "--normalize", "-c", cfg, "-o", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("table.json")).unwrap())
                .unwrap();
        tables.push(doc["data"]["cells"].clone());
    }
    let flat = |v: &serde_json::Value| -> Vec<f64> {
        v.as_array()
            .unwrap()
            .iter()
            .flat_map(|row| row.as_array().unwrap().iter())
            .flat_map(|cell| cell["value"].as_array().unwrap().iter())
            .map(|x| x.as_f64().unwrap())
            .collect()
    };
    let (a, b) = (flat(&tables[0]), flat(&tables[1]));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9, "auto {x} vs explicit {y}");
    }
}

#[test]
fn table1_pipeline_runs_on_reduced_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ex1small.json",
        r#"{
            "density": {
                "mode": "line",
                "poly_factors": [{"a": [0.0, 1.0], "alpha": 2}],
                "exp_poly": {"2": [-1.6, 0.0]}
            },
            "cl": {"n_walkers": 8, "dt": 0.0002, "t_burn": 10.0, "t_measure": 60.0,
                    "meas_interval": 0.05, "seed": 3, "grid": {"nx": 80, "ny": 80}},
            "fit": {"bootstrap": 40}
        }"#,
    );
    let od = tmp.path().join("out");
    let out = run(&["table1", "-c", &cfg, "-o", od.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("T_rho") && stdout.contains("a+"), "table missing: {stdout}");
    assert!(od.join("table1.json").exists());
    assert!(od.join("records.csv").exists());
}
