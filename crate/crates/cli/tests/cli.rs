use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn meningefem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meningefem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Single 10 mm B1 hex with its own config, written into `dir`.
fn single_element(dir: &Path) -> (PathBuf, PathBuf) {
    let b1 = scenarios().join("B1.json");
    ok(&meningefem(&[
        "mesh", "gen", "--dims", "0.01", "0.01", "0.01", "--size", "0.01", "--layers", "brain:0.01", "--params",
        p(&b1), "--out", p(dir),
    ]));
    let config = dir.join("config.json");
    fs::write(&config, r#"{"total_pull_m": 0.003, "time_compression": 10.0}"#).unwrap();
    (dir.join("mesh.json"), config)
}

#[test]
fn perfect_cuboid_quality_is_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(&meningefem(&[
        "mesh", "gen", "--dims", "0.004", "0.003", "0.002", "--size", "0.001", "--layers", "brain:0.001",
        "skull:0.001", "--cohesive-at", "0.001", "--out", p(dir.path()),
    ]));
    let q = dir.path().join("q");
    let out = meningefem(&["mesh", "quality", "--in", p(&dir.path().join("mesh.json")), "--out", p(&q)]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(q.join("quality.json")).unwrap()).unwrap();
    assert_eq!(report["min"], 1.0);
    assert_eq!(report["mean"], 1.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("min 1.000000 mean 1.000000"));
}

#[test]
fn non_commensurate_size_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = meningefem(&[
        "mesh", "gen", "--dims", "0.0045", "0.003", "0.002", "--size", "0.001", "--layers", "brain:0.002", "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"x\"") || err.contains(" x "), "{err}");
    assert!(!dir.path().join("mesh.json").exists());
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "mesh", "gen", "--dims", "0.001", "0.001", "0.001", "--size", "0.001", "--layers", "brain:0.001", "--out",
        p(dir.path()),
    ];
    ok(&meningefem(&args));
    let again = meningefem(&args);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&meningefem(&forced));
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(meningefem(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(meningefem(&["--help"]).status.code(), Some(0));
}

#[test]
fn dry_run_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, config) = single_element(dir.path());
    let out_dir = dir.path().join("dry");
    let out = meningefem(&["simulate", "--mesh", p(&mesh), "--config", p(&config), "--dry-run", "--out", p(&out_dir)]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("stable dt") && stdout.contains("steps"));
    let files: Vec<_> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("manifest.json")]);
}

#[test]
fn simulate_writes_curve_energy_plot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, config) = single_element(dir.path());
    let out_dir = dir.path().join("run");
    ok(&meningefem(&["simulate", "--mesh", p(&mesh), "--config", p(&config), "--out", p(&out_dir)]));
    let curve = fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("displacement_m,force_N\n"));
    let forces: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(forces.windows(2).all(|w| w[1] >= w[0] - 1e-12), "monotone loading curve");
    assert!(fs::read_to_string(out_dir.join("energy.csv")).unwrap().starts_with("time_s,"));
    let svg = fs::read_to_string(out_dir.join("curve.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("Displacement (mm)") && svg.contains("Force (N)"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 4);
    let digest = manifest["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn synth_is_seeded_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, config) = single_element(dir.path());
    let synth = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["synth", "--mesh", p(&mesh), "--config", p(&config), "--out", p(&out_dir)];
        args.extend_from_slice(extra);
        ok(&meningefem(&args));
        fs::read_to_string(out_dir.join("target.csv")).unwrap()
    };
    let clean = synth("clean", &[]);
    let a = synth("a", &["--noise", "0.02", "--seed", "42"]);
    let b = synth("b", &["--noise", "0.02", "--seed", "42"]);
    let c = synth("c", &["--noise", "0.02", "--seed", "43"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let parse = |t: &str| -> Vec<(f64, f64)> {
        t.lines()
            .skip(1)
            .map(|l| {
                let mut f = l.split(',').map(|v| v.parse::<f64>().unwrap());
                (f.next().unwrap(), f.next().unwrap())
            })
            .collect()
    };
    let (clean, noisy) = (parse(&clean), parse(&a));
    assert_eq!(clean.len(), noisy.len());
    for (c, n) in clean.iter().zip(&noisy) {
        assert_eq!(c.0, n.0);
        assert!((n.1 - c.1).abs() <= 0.02 * c.1.abs() + 1e-15);
    }
    // 100 Hz at 0.3 mm/s: 3 µm spacing
    assert!((clean[1].0 - 3e-6).abs() < 1e-15);
}

#[test]
fn interface_stage_requires_tissue_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"target": "t.csv", "mesh": "m.json"}"#).unwrap();
    fs::write(dir.path().join("t.csv"), "displacement_m,force_N\n0,0\n0.001,0.1\n").unwrap();
    let (mesh, _) = single_element(dir.path());
    fs::rename(mesh, dir.path().join("m.json")).unwrap();
    let out = meningefem(&["calibrate", "--stage", "interface", "--spec", p(&spec), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tissue-parameters file"));
}

#[test]
fn tissue_stage_recovers_a_synthetic_single_element_target() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, config) = single_element(dir.path());
    ok(&meningefem(&["synth", "--mesh", p(&mesh), "--config", p(&config), "--out", p(&dir.path().join("synth"))]));
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"target": "synth/target.csv", "mesh": "mesh.json", "config": "config.json",
            "free": [{"name": "mu1", "lower": 50, "upper": 5000, "initial": 400},
                     {"name": "mu2", "lower": 50, "upper": 5000, "initial": 200}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("fit");
    let out = meningefem(&["calibrate", "--stage", "tissue", "--spec", p(&spec), "--out", p(&out_dir)]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let mu0 = report["derived"]["mu0"].as_f64().unwrap();
    assert!((mu0 - 1186.7).abs() < 0.05 * 1186.7, "mu0 = {mu0}");
    assert_eq!(report["converged"].as_bool(), Some(out.status.code() == Some(0)));
    let svg = fs::read_to_string(out_dir.join("fit.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("peak-force error"));
    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("tissue_params.json")).unwrap()).unwrap();
    assert_eq!(params["materials"][0]["name"], "brain");
}
