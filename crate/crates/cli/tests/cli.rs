use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde_json::Value;
use tempfile::TempDir;

fn rqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rqc"))
        .args(args)
        .env_remove("RQC_MAX_QUBITS")
        .output()
        .expect("spawn rqc")
}

fn ok(args: &[&str]) -> Output {
    let out = rqc(args);
    assert!(
        out.status.success(),
        "rqc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, n: usize, m: usize, seed: u64) -> PathBuf {
    let out = p(dir, name);
    let (n, m, seed) = (n.to_string(), m.to_string(), seed.to_string());
    ok(&["generate", "--n", &n, "--m", &m, "--seed", &seed, "-o", s(&out)]);
    out
}

fn read_amps(path: &Path) -> Vec<(String, f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn version_lists_schemas() {
    let out = ok(&["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("circuit v1") && text.contains("report v1"), "{text}");
}

#[test]
fn generate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = p(&dir, "a.json");
    let b = p(&dir, "b.json");
    for f in [&a, &b] {
        ok(&[
            "generate",
            "--n",
            "12",
            "--m",
            "14",
            "--seed",
            "7",
            "--sequence",
            "ABCDCDAB",
            "-o",
            s(f),
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn malformed_flags_exit_2() {
    assert_eq!(
        rqc(&["generate", "--n", "x", "--m", "2", "-o", "/dev/null"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(rqc(&["generate", "--m", "2", "-o", "/dev/null"]).status.code(), Some(2));
    assert_eq!(
        rqc(&[
            "generate",
            "--n",
            "4",
            "--m",
            "2",
            "--sequence",
            "XYZ",
            "-o",
            "/dev/null"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        rqc(&[
            "generate",
            "--n",
            "4",
            "--m",
            "2",
            "--variant",
            "elided",
            "-o",
            "/dev/null"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn elided_and_patch_variants() {
    let dir = TempDir::new().unwrap();
    let full = p(&dir, "full.json");
    let report = |args: &[&str]| stdout_json(&ok(args));
    let base = &["generate", "--n", "20", "--m", "12", "--seed", "3"];
    let r_full = report(&[base.as_slice(), &["--cut", "default", "-o", s(&full)]].concat());
    let el = p(&dir, "el.json");
    let r_el = report(
        &[
            base.as_slice(),
            &["--variant", "elided", "--k", "6", "--cut", "default", "-o", s(&el)],
        ]
        .concat(),
    );
    let pa = p(&dir, "patch.json");
    let r_patch = report(&[base.as_slice(), &["--variant", "patch", "-o", s(&pa)]].concat());
    let cross = |r: &Value| r["paths"]["cross_gates"].as_u64().unwrap();
    assert_eq!(cross(&r_full) - cross(&r_el), 6);
    assert_eq!(r_patch["paths"]["total_paths"], 1);
    assert_eq!(cross(&r_patch), 0);
    assert_eq!(r_full["run_config"]["command"], "generate");
}

#[test]
fn sv_and_sfa_amplitudes_agree() {
    let dir = TempDir::new().unwrap();
    let c = generate(&dir, "c16.json", 16, 10, 5);
    let sv = p(&dir, "sv.csv");
    let sfa = p(&dir, "sfa.csv");
    ok(&[
        "simulate",
        "--circuit",
        s(&c),
        "--count",
        "24",
        "--seed",
        "9",
        "-o",
        s(&sv),
    ]);
    ok(&[
        "simulate",
        "--circuit",
        s(&c),
        "--engine",
        "sfa",
        "--cut",
        "13,15",
        "--count",
        "24",
        "--seed",
        "9",
        "-o",
        s(&sfa),
    ]);
    let (a, b) = (read_amps(&sv), read_amps(&sfa));
    assert_eq!(a.len(), 24);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        assert!((x.1 - y.1).abs() < 1e-6 && (x.2 - y.2).abs() < 1e-6);
    }
    let side = json_file(&p(&dir, "sfa.csv.json"));
    assert_eq!(side["engine"], "sfa");
    assert_eq!(side["fraction"], 1.0);
    assert!(side["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sfa_fraction_in_sidecar() {
    let dir = TempDir::new().unwrap();
    let c = generate(&dir, "c12.json", 12, 8, 2);
    let out = p(&dir, "amps.csv");
    ok(&[
        "simulate",
        "--circuit",
        s(&c),
        "--engine",
        "sfa",
        "--cut",
        "4,11",
        "--fraction",
        "0.25",
        "--count",
        "4",
        "-o",
        s(&out),
    ]);
    let side = json_file(&p(&dir, "amps.csv.json"));
    let used = side["paths_used"].as_u64().unwrap();
    let total = side["total_paths"].as_u64().unwrap();
    assert_eq!(total % 4, 0, "{side}");
    assert_eq!(used * 4, total);
    assert_eq!(side["fraction"], 0.25);
}

#[test]
fn sample_count_and_replay() {
    let dir = TempDir::new().unwrap();
    let c = generate(&dir, "c.json", 10, 8, 1);
    let out = p(&dir, "samples.txt");
    ok(&[
        "simulate",
        "--circuit",
        s(&c),
        "--mode",
        "sample",
        "--count",
        "1234",
        "--seed",
        "4",
        "-o",
        s(&out),
    ]);
    let first = std::fs::read(&out).unwrap();
    let lines = String::from_utf8(first.clone()).unwrap();
    assert_eq!(lines.lines().count(), 1234);
    assert!(lines.lines().all(|l| l.len() == 10));
    std::fs::remove_file(&out).unwrap();
    ok(&["replay", s(&p(&dir, "samples.txt.json"))]);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn memory_cap_exit_3() {
    let dir = TempDir::new().unwrap();
    let c = generate(&dir, "c.json", 12, 4, 1);
    let out = Command::new(env!("CARGO_BIN_EXE_rqc"))
        .args([
            "simulate",
            "--circuit",
            s(&c),
            "--count",
            "2",
            "-o",
            s(&p(&dir, "a.csv")),
        ])
        .env("RQC_MAX_QUBITS", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("memory cap"));
}

fn xeb_report(dir: &TempDir, c: &Path, fidelity: &str, extra: &[&str]) -> Value {
    let samples = p(dir, &format!("s{fidelity}.txt"));
    ok(&[
        "simulate",
        "--circuit",
        s(c),
        "--mode",
        "sample",
        "--count",
        "20000",
        "--fidelity",
        fidelity,
        "--seed",
        "17",
        "-o",
        s(&samples),
    ]);
    stdout_json(&ok(
        &[&["xeb", "--circuit", s(c), "--samples", s(&samples)], extra].concat()
    ))
}

fn estimate(report: &Value, name: &str) -> (f64, f64) {
    let e = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["estimator"] == name)
        .unwrap();
    (e["F"].as_f64().unwrap(), e["sigma_theory"].as_f64().unwrap())
}

#[test]
fn xeb_depolarized_and_uniform_fixtures() {
    let dir = TempDir::new().unwrap();
    let c = generate(&dir, "c16.json", 16, 14, 8);
    let plots = p(&dir, "plots");
    let r = xeb_report(&dir, &c, "0.5", &["--bootstrap", "200", "--plots", s(&plots)]);
    for name in ["linear", "log", "hog"] {
        let (f, sigma) = estimate(&r, name);
        assert!((f - 0.5).abs() < 3.0 * sigma, "{name}: {f} ± {sigma}");
    }
    assert!(
        r["ks"]["vs_estimate"]["p_value"].as_f64().unwrap() > 0.05,
        "{}",
        r["ks"]
    );
    assert!(r["ks"]["vs_zero"]["p_value"].as_f64().unwrap() < 1e-6);
    assert!(r["bootstrap"]["sigma"].as_f64().unwrap() > 0.0);
    let hist = std::fs::read_to_string(plots.join("hist_linear.csv")).unwrap();
    assert_eq!(hist.lines().count(), 41);
    assert!(plots.join("hist_log.csv").exists());
    assert_eq!(r["run_config"]["command"], "xeb");

    let u = xeb_report(&dir, &c, "0", &["--estimators", "linear,hog"]);
    for name in ["linear", "hog"] {
        let (f, sigma) = estimate(&u, name);
        assert!(f.abs() < 3.0 * sigma, "{name}: {f} ± {sigma}");
    }
    assert_eq!(u["estimates"].as_array().unwrap().len(), 2);
}

#[test]
fn xeb_mismatched_n_exit_2() {
    let dir = TempDir::new().unwrap();
    let small = generate(&dir, "c10.json", 10, 4, 1);
    let big = generate(&dir, "c12.json", 12, 4, 1);
    let samples = p(&dir, "s.txt");
    ok(&[
        "simulate",
        "--circuit",
        s(&small),
        "--mode",
        "sample",
        "--count",
        "10",
        "-o",
        s(&samples),
    ]);
    let out = rqc(&["xeb", "--circuit", s(&big), "--samples", s(&samples)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn xeb_from_ndjson_and_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let rows = p(&dir, "rows.ndjson");
    let d = 1024.0;
    let mut text = String::new();
    for k in 0..50 {
        let ps = (k % 5) as f64 / d;
        text.push_str(&format!(
            "{{\"circuit_id\":\"c\",\"bitstring\":\"0000000001\",\"p_s\":{ps}}}\n"
        ));
    }
    std::fs::write(&rows, text).unwrap();
    let r = stdout_json(&ok(&["xeb", "--probs", s(&rows), "--estimators", "linear"]));
    assert_eq!(r["N_s"], 50);
    assert!((estimate(&r, "linear").0 - 1.0).abs() < 1e-12);
    let out = rqc(&["xeb", "--probs", s(&rows), "--estimators", "log"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn xeb_purity_table() {
    let dir = TempDir::new().unwrap();
    let d = 256;
    let f = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::new();
    for _ in 0..400 {
        let w: Vec<f64> = (0..d).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        let row: Vec<String> = w
            .iter()
            .map(|x| format!("{:e}", f * x / total + (1.0 - f) / d as f64))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let table = p(&dir, "table.csv");
    std::fs::write(&table, text).unwrap();
    let r = stdout_json(&ok(&["xeb", "--purity", s(&table)]));
    let purity = r["purity"]["purity"].as_f64().unwrap();
    assert!((purity - f * f).abs() < 0.03, "{purity}");
    assert_eq!(r["purity"]["instances"], 400);
}

#[test]
fn cost_tables() {
    let r = stdout_json(&ok(&["cost", "--n", "43,53", "--m", "14"]));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let hours = rows[0]["t_sa_s"].as_f64().unwrap() / 3600.0;
    assert!((hours - 0.1).abs() < 0.005, "{hours}");
    let csv = String::from_utf8(ok(&["cost", "--n", "10..12", "--m", "12..13", "--format", "csv"]).stdout).unwrap();
    assert!(csv.starts_with("n,m,t_sa_s"));
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(rqc(&["cost", "--n", "5..3"]).status.code(), Some(2));
}
