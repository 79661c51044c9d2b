use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bdf_vacuum::coulomb::b_constant;
use bdf_vacuum::io::load_state;
use bdf_vacuum::lattice::{build_lattice, LatticeSpec};
use bdf_vacuum::quadrature::QuadratureSettings;
use serde_json::Value;

const TOY: &str = r#"
seed = 7

[lattice]
n_per_axis = 4
box_length = 6.0
cutoff = 2.0

[density]
width = 0.8

[physics]
alpha = 0.0
kappa = 1.0
kappas = [0.9, 1.0, 1.1]
mu = 0.3
mu_minus = -0.6
mu_plus = 0.6
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bdf-vacuum"));
    c.env_remove("BDF_OUT_DIR");
    c
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    bin()
        .args(args)
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Data rows of a CSV written by the CLI, header comments skipped.
fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn screening_table_zero_row_is_b_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = format!("{TOY}cutoffs = [100.0]\n\n[screening]\npoints = 5\n");
    let o = run(
        tmp.path(),
        &config,
        &["screening-table", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("screening_0.csv"));
    assert_eq!(header, ["k", "B_Lambda_k", "U_Lambda_k"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    let b0: f64 = rows[0][1].parse().unwrap();
    let expected = b_constant(100.0, &QuadratureSettings::default()).unwrap();
    assert!(
        (b0 - expected).abs() <= 1e-12 * expected,
        "{b0} vs {expected}"
    );
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.0);
    let text = fs::read_to_string(out.join("screening_0.csv")).unwrap();
    assert!(text.contains("# cutoff = 100.0"));
    assert!(text.contains("# rel_tol = "));
}

#[test]
fn scf_at_alpha_zero_matches_linear_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!("{TOY}\n[output]\nsave_state = true\n");
    let a = tmp.path().join("scan");
    let b = tmp.path().join("scf");
    let o = run(
        tmp.path(),
        &config,
        &["linear-scan", "--out", a.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(tmp.path(), &config, &["scf", "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lattice = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
    let qa = load_state(&a.join("linear_vacuum.state"), &lattice)
        .unwrap()
        .q;
    let qb = load_state(&b.join("scf.state"), &lattice).unwrap().q;
    let diff = (&qa - &qb).norm_l2();
    assert!(diff <= 1e-10, "Frobenius difference {diff}");
    let ja = read_json(&a.join("linear_scan.json"));
    let jb = read_json(&b.join("scf.json"));
    let ea = ja["result"]["vacuum"]["energy"]["total"].as_f64().unwrap();
    let eb = jb["result"]["energy"]["total"].as_f64().unwrap();
    assert!((ea - eb).abs() <= 1e-10 * ea.abs().max(1.0));
    assert_eq!(jb["result"]["converged"], Value::Bool(true));
    let (header, rows) = csv_rows(&a.join("linear_scan.csv"));
    assert_eq!(header, ["kappa", "lambda", "gap_margin", "multiplicity"]);
    assert_eq!(rows.len(), 3);
    let lambdas: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(
        lambdas[0] > 0.0 && lambdas[2] < 0.0 && lambdas[1].abs() < 1e-6,
        "{lambdas:?}"
    );
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = format!("{TOY}\n[solver]\ndampnig = 0.5\n");
    let o = run(
        tmp.path(),
        &config,
        &["scf", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("dampnig"),
        "{err}"
    );

    let config = format!("{TOY}\n[solver]\ndamping = 1.5\n");
    let o = run(
        tmp.path(),
        &config,
        &["scf", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("damping"),
        "{err}"
    );
}

#[test]
fn solver_failure_is_reported_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // No eigenvalue crossing in a window this narrow around a deep well.
    let config = TOY
        .replace("mu_minus = -0.6", "mu_minus = -0.001")
        .replace("mu_plus = 0.6", "mu_plus = 0.001");
    let o = run(
        tmp.path(),
        &config,
        &["linear-scan", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "solver");
    assert!(out.join("error.json").is_file());
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!("{TOY}\n[solver]\nx_tol = 1e-9\n");
    let config = config.replace("alpha = 0.0", "alpha = 0.02");
    // The resolved config embeds the output directory, so both runs use the same one.
    let a = tmp.path().join("first");
    let b = tmp.path().join("out");
    for i in 0..2 {
        let o = run(
            tmp.path(),
            &config,
            &["scf", "--out", b.to_str().unwrap(), "--threads", "1"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        if i == 0 {
            fs::rename(&b, &a).unwrap();
        }
    }
    for name in [
        "scf.json",
        "scf_residuals.csv",
        "schema.json",
        "resolved_config.toml",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let meta = read_json(&a.join("scf.meta.json"));
    assert!(meta["timestamp_unix"].as_f64().unwrap() > 0.0);
    assert_eq!(meta["threads"], 1);
}

#[test]
fn outputs_embed_config_and_schema_covers_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        tmp.path(),
        TOY,
        &[
            "linear-scan",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "99",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = read_json(&out.join("linear_scan.json"));
    assert_eq!(doc["config"]["seed"], 99);
    assert_eq!(doc["config"]["lattice"]["n_per_axis"], 4);
    assert_eq!(doc["config"]["output"]["directory"], out.to_str().unwrap());
    let csv = fs::read_to_string(out.join("linear_scan.csv")).unwrap();
    assert!(csv
        .lines()
        .any(|l| l.starts_with("# config = {") && l.contains("\"seed\":99")));
    let resolved = fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 99"));

    let schema = read_json(&out.join("schema.json"));
    let (header, _) = csv_rows(&out.join("linear_scan.csv"));
    let documented: Vec<&str> = schema["files"]["linear_scan.csv"]["fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert_eq!(header, documented);
    for f in schema["files"]["linear_scan.json"]["fields"]
        .as_array()
        .unwrap()
    {
        assert!(!f["description"].as_str().unwrap().is_empty());
    }
}

#[test]
fn env_var_sets_out_dir_and_flag_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let flag_dir = tmp.path().join("flag");
    let path = tmp.path().join("run.toml");
    fs::write(
        &path,
        format!("{TOY}cutoffs = [10.0]\n\n[screening]\npoints = 3\n"),
    )
    .unwrap();
    let o = bin()
        .args(["screening-table", "--config", path.to_str().unwrap()])
        .env("BDF_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("screening_0.csv").is_file());
    let o = bin()
        .args([
            "screening-table",
            "--config",
            path.to_str().unwrap(),
            "--out",
            flag_dir.to_str().unwrap(),
        ])
        .env("BDF_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_dir.join("screening_0.csv").is_file());
    assert!(flag_dir.join("screening-table.meta.json").is_file());
}

#[test]
fn density_from_file_matches_gaussian() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = LatticeSpec::new(4, 6.0, 2.0);
    let nu = bdf_vacuum::coulomb::ChargeDensity::gaussian(spec, 1.0, 0.8);
    let values: Vec<String> = nu
        .position_values()
        .iter()
        .map(|v| format!("{v:?}"))
        .collect();
    fs::write(tmp.path().join("nu.txt"), values.join("\n")).unwrap();
    let from_file = TOY.replace(
        "[density]\nwidth = 0.8",
        "[density]\nkind = \"file\"\npath = \"nu.txt\"",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(
        tmp.path(),
        TOY,
        &["linear-scan", "--out", a.to_str().unwrap()]
    )
    .status
    .success());
    let o = run(
        tmp.path(),
        &from_file,
        &["linear-scan", "--out", b.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, ra) = csv_rows(&a.join("linear_scan.csv"));
    let (_, rb) = csv_rows(&b.join("linear_scan.csv"));
    for (x, y) in ra.iter().zip(&rb) {
        let (x, y): (f64, f64) = (x[1].parse().unwrap(), y[1].parse().unwrap());
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn invariant_suite_prints_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = format!("{TOY}\n[suite]\ncriteria = [1]\n");
    let o = run(
        tmp.path(),
        &config,
        &["invariant-suite", "--out", out.to_str().unwrap()],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("1 ") && l.contains("PASS")),
        "{stdout}"
    );
    let doc = read_json(&out.join("invariant_suite.json"));
    assert_eq!(doc["result"]["criteria"][0]["passed"], true);
}
