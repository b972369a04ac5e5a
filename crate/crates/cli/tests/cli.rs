use std::path::Path;
use std::process::{Command, Output};

fn qls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qls")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn criterion_json_example() {
    let o = qls(&[
        "criterion",
        "--case",
        "1",
        "--r0",
        "1",
        "--kappa",
        "0",
        "--method",
        "integral",
        "--json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["p_prime_0"].as_f64().unwrap() + 2.8284).abs() < 1e-4);
    assert_eq!(v["verdict"], "StableSlope");
}

#[test]
fn kappa0_example() {
    let o = qls(&["criterion", "--case", "gp-closed-form", "--kappa0"]);
    assert!(o.status.success());
    let k0: f64 = stdout(&o).trim().parse().unwrap();
    assert!((k0 - 3.636).abs() < 0.01);
}

#[test]
fn gp_method_matches_integral() {
    for kappa in ["0", "1", "-0.3"] {
        let a = qls(&[
            "criterion",
            "--case",
            "GP1",
            "--kappa",
            kappa,
            "--method",
            "gp",
            "--json",
        ]);
        let b = qls(&["criterion", "--case", "GP1", "--kappa", kappa, "--json"]);
        let pa: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
        let pb: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
        let d = pa["p_prime_0"].as_f64().unwrap() - pb["p_prime_0"].as_f64().unwrap();
        assert!(d.abs() < 1e-8, "kappa={kappa}: {d}");
    }
    // the closed form only covers the cubic model with h = s
    assert_eq!(
        qls(&["criterion", "--case", "SF3", "--method", "gp"]).status.code(),
        Some(2)
    );
}

#[test]
fn custom_models_match_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("model.json");
    std::fs::write(
        &desc,
        r#"{"case": "custom", "r0": 1.0, "kappa": 0.5, "f": "1 - s", "h": "s"}"#,
    )
    .unwrap();
    let slope = |args: &[&str]| -> f64 {
        let o = qls(args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["p_prime_0"].as_f64().unwrap()
    };
    let a = slope(&["criterion", "--model", desc.to_str().unwrap(), "--json"]);
    let b = slope(&["criterion", "--f", "-s + 1", "--kappa", "0.5", "--json"]);
    let c = slope(&["criterion", "--model", "GP1", "--kappa", "0.5", "--json"]);
    assert!((a - c).abs() < 1e-8 && (b - c).abs() < 1e-8, "{a} {b} {c}");
}

#[test]
fn profile_matches_tanh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("profile.csv");
    let o = qls(&[
        "profile",
        "--case",
        "1",
        "--kappa",
        "0",
        "--c",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["x", "re", "im", "abs", "eta", "phase"]);
    let mut worst: f64 = 0.0;
    for r in rows {
        let x: f64 = r[0].parse().unwrap();
        let re: f64 = r[1].parse().unwrap();
        let im: f64 = r[2].parse().unwrap();
        if x.abs() <= 10.0 {
            worst = worst.max((re - (x / 2f64.sqrt()).tanh()).abs()).max(im.abs());
        }
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn manifest_digests_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("sweep_{tag}.csv"));
        let man = dir.path().join(format!("manifest_{tag}.json"));
        let o = qls(&[
            "sweep",
            "--case",
            "3",
            "--steps",
            "8",
            "--out",
            out.to_str().unwrap(),
            "--manifest",
            man.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&man).unwrap()).unwrap();
        assert_eq!(m["model"]["case"], "SF3");
        let digest = m["outputs"][0]["sha256"].as_str().unwrap().to_string();
        assert_eq!(digest, qls_cli::sha256_file(&out).unwrap());
        digest
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn sweep_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("s{threads}.csv"));
        let o = Command::new(env!("CARGO_BIN_EXE_qls"))
            .env("QLS_THREADS", threads)
            .args(["sweep", "--case", "2", "--steps", "12", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
        let (header, rows) = read_csv(&out);
        assert_eq!(header, ["kappa", "p_prime_0", "verdict", "error"]);
        assert_eq!(rows.len(), 12);
        digests.push(qls_cli::sha256_file(&out).unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn potential_csv() {
    let o = qls(&["potential", "--case", "GP1", "--c", "0", "--xi-grid", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "xi,V");
    assert_eq!(lines.len(), 4);
    // V_0(xi) = -4 (1 + xi) F(1 + xi) = -2 (1 + xi) xi^2 for GP
    let row: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
    assert!(
        (row[0] + 0.5).abs() < 1e-15 && (row[1] + 2.0 * 0.5 * 0.25).abs() < 1e-14,
        "{row:?}"
    );
}

#[test]
fn functionals_roundtrip_kink() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("kink.csv");
    let o = qls(&[
        "profile",
        "--case",
        "GP1",
        "--n",
        "2048",
        "--xmax",
        "20",
        "--out",
        field.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = qls(&[
        "functionals",
        "--case",
        "GP1",
        "--in",
        field.to_str().unwrap(),
        "--M-lyap",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["energy"].as_f64().unwrap() - 4.0 * 2f64.sqrt() / 3.0).abs() < 1e-5);
    assert!((v["momentum_untwisted"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-10);
    assert!(v["lyapunov"].as_f64().is_some());
}

#[test]
fn evolve_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let man = dir.path().join("m.json");
    let o = qls(&[
        "evolve",
        "--case",
        "GP1",
        "--init",
        "kink",
        "--perturb-amp",
        "0.01",
        "--seed",
        "42",
        "--dt",
        "0.01",
        "--T",
        "0.1",
        "--n",
        "512",
        "--xmax",
        "16",
        "--trace",
        trace.to_str().unwrap(),
        "--manifest",
        man.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&trace);
    assert_eq!(header, ["t", "E", "P_untwisted", "min_nu", "z", "phi", "dX_modulated"]);
    assert_eq!(rows.len(), 2);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&man).unwrap()).unwrap();
    assert_eq!(m["seed"], 42);
}

#[test]
fn exit_codes_and_json_errors() {
    // usage error
    let o = qls(&["criterion", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let e: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(e["exit_code"], 2);
    // model outside the admissible coupling range
    let o = qls(&["criterion", "--case", "1", "--kappa", "-0.9"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
    // unknown model
    assert_eq!(qls(&["profile", "--case", "GP9"]).status.code(), Some(2));
    // non-uniform field grid
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.csv");
    let mut text = String::from("x,re,im\n");
    for j in 0..20 {
        let x = j as f64 + if j == 7 { 0.3 } else { 0.0 };
        text += &format!("{x},1,0\n");
    }
    std::fs::write(&f, text).unwrap();
    assert_eq!(
        qls(&["functionals", "--case", "1", "--in", f.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn numerical_failure_exit_code() {
    // the perturbed datum leaves the elliptic region 1 - 0.9 |u|^2 > 0
    let o = qls(&[
        "evolve",
        "--case",
        "GP1",
        "--kappa",
        "-0.45",
        "--perturb-amp",
        "0.8",
        "--dt",
        "0.5",
        "--T",
        "0.5",
        "--n",
        "256",
        "--xmax",
        "16",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let e: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(e["exit_code"], 3);
    assert_eq!(e["error"], "degenerate_dispersion");
}

#[test]
fn figures_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = qls(&["figures", "--out-dir", dir.path().to_str().unwrap(), "--steps", "10"]);
    assert!(o.status.success());
    let (h1, rows1) = read_csv(&dir.path().join("fig1_kink_profiles.csv"));
    assert_eq!(h1, ["case", "r0", "kappa", "x", "u"]);
    for case in ["GP1", "GP2", "SF3"] {
        assert!(rows1.iter().any(|r| r[0] == case));
    }
    let (h2, rows2) = read_csv(&dir.path().join("fig2_slope_vs_kappa.csv"));
    assert_eq!(h2, ["case", "r0", "kappa", "p_prime_0", "verdict", "error"]);
    assert_eq!(rows2.len(), 40);
    assert!(rows2.iter().any(|r| r[0] == "SF3" && r[1].starts_with("2.")));
}
