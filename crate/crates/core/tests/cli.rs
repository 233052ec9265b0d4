use std::path::Path;
use std::process::{Command, Output};

fn slitlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slitlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SLITLAB_WORKERS")
        .output()
        .unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn sweep_writes_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = slitlab(
        &[
            "sweep",
            "--n",
            "2",
            "--p",
            "1.5",
            "--lambdas",
            "1/8,1/16,1/32",
            "--no-empirical",
            "--out",
            "r/report.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lambda,dim,norm_factor,empirical_ratio,C_eff,thm11_upper");
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
    assert!(!csv.contains('\r'));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/report.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["files"][0]["rows"].as_array().unwrap().len(), 3);
    assert_eq!(m["files"][0]["rows"][1]["key"], "lambda=1/16");
}

#[test]
fn invalid_config_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "kind = \"bound-sweep\"\nlambdas = [0.6]\n").unwrap();
    let o = slitlab(&["run", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda must be in (0, 1/2)"));
}

#[test]
fn failing_checks_give_status_one() {
    let dir = tempfile::tempdir().unwrap();
    // one sample cannot land in a thin component at every radius
    std::fs::write(
        dir.path().join("d.toml"),
        "kind = \"density\"\nsamples = 1\nradii = [\"1/64\"]\ncomponents = [\"upper\"]\n",
    )
    .unwrap();
    let o = slitlab(&["run", "--config", "d.toml"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(o.status.code(), Some(if v["passed"] == true { 0 } else { 1 }));
}

#[test]
fn geometry_queries() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&slitlab(
        &["cantor", "dist", "--lambda", "1/4", "--point", "0.5"],
        dir.path(),
    ));
    assert!((v["distance"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    let v = stdout_json(&slitlab(
        &[
            "region", "probe", "--kind", "omega", "--lambda", "1/4", "--point", "0.5,0.1",
        ],
        dir.path(),
    ));
    assert_eq!(v["member"], false);
    let v = stdout_json(&slitlab(
        &[
            "region",
            "components",
            "--lambda",
            "1/4",
            "--center",
            "0,0",
            "--radius",
            "1/4",
            "--h",
            "1/128",
        ],
        dir.path(),
    ));
    assert!(v["count"].as_u64().unwrap() >= 2);
    assert!(dir.path().join("components.json").exists());
}

#[test]
fn whitney_commands() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&slitlab(
        &[
            "whitney",
            "build",
            "--region",
            "n",
            "--lambda",
            "1/4",
            "--max-gen",
            "6",
            "--out",
            "cubes.json",
        ],
        dir.path(),
    ));
    assert!(v["cubes"].as_u64().unwrap() > 0);
    let cubes: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cubes.json")).unwrap()).unwrap();
    let first = &cubes[0];
    assert!(first["gen"].is_i64() && first["idx"].is_array());
    assert!(first["status"] == "resolved" || first["status"] == "frontier");
    let v = stdout_json(&slitlab(
        &["whitney", "verify", "--lambda", "1/4", "--max-gen", "6"],
        dir.path(),
    ));
    assert_eq!(v["reflect_violations"], 0);
    let o = slitlab(
        &[
            "whitney",
            "claim-count",
            "--lambda",
            "1/4",
            "--max-gen",
            "7",
            "--k-max",
            "2",
        ],
        dir.path(),
    );
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().next(), Some("k,max_count,fitted_exponent"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn field_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sampled = stdout_json(&slitlab(
        &[
            "field", "sample", "--lambda", "1/4", "--h", "1/64", "--u", "coord:1", "--out", "u.grid",
        ],
        d,
    ));
    stdout_json(&slitlab(&["field", "grad", "--input", "u.grid", "--out", "g.grid"], d));
    let a = stdout_json(&slitlab(&["field", "norm", "--input", "u.grid", "--p", "2"], d));
    let b = stdout_json(&slitlab(&["field", "norm", "--input", "g.grid", "--p", "2"], d));
    assert_eq!(a["seminorm"], b["seminorm"]);
    // |grad x1| = 1 except on cells pinched off along x, which get a zero derivative
    let s = a["seminorm"].as_f64().unwrap();
    let area = sampled["active"].as_f64().unwrap() / 4096.0;
    assert!(s * s <= area && s * s > 0.99 * area, "{s} {area}");
    stdout_json(&slitlab(
        &[
            "field", "sample", "--lambda", "1/4", "--h", "1/16", "--u", "coord:2", "--out", "u.csv",
        ],
        d,
    ));
    let csv = std::fs::read_to_string(d.join("u.csv")).unwrap();
    assert!(csv.starts_with("# n=2"));
}

#[test]
fn extend_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let v = stdout_json(&slitlab(
        &[
            "extend", "--lambda", "1/4", "--p", "1.5", "--u", "coord:1", "--grid", "2^-7", "--out", "eu.grid",
        ],
        d,
    ));
    assert!(v["ratio"]["ratio"].as_f64().unwrap() > 0.0);
    assert!(d.join("eu.grid").exists());
    let v = stdout_json(&slitlab(
        &[
            "dim",
            "estimate",
            "--lambda",
            "1/4",
            "--levels",
            "4",
            "--probes",
            "2000",
            "--out",
            "cert.json",
        ],
        d,
    ));
    assert!((v["s"].as_f64().unwrap() - 0.5).abs() <= 0.05);
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("cert.json")).unwrap()).unwrap();
    assert!(!cert["certificate"].as_array().unwrap().is_empty());
    let v = stdout_json(&slitlab(
        &["--seed", "3", "density", "--radii", "1/4", "--samples", "20000"],
        d,
    ));
    assert!(v["c_fit"].as_f64().unwrap() > 0.05);
    assert!(v["per_radius"].is_array());
}
