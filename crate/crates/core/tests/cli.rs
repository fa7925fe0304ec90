use std::fs;
use std::path::Path;
use std::process::Command;

use priorforge::cli::main_with_args;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["priorforge"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn read_log_prior(path: &Path) -> Vec<(Vec<f64>, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let v: Vec<f64> = rec.unwrap().iter().map(|s| s.parse().unwrap()).collect();
            let (lp, t) = v.split_last().unwrap();
            (t.to_vec(), *lp)
        })
        .collect()
}

/// Standard deviation of `a − b` over the rows.
fn spread(rows: &[(Vec<f64>, f64)], target: impl Fn(&[f64]) -> f64) -> f64 {
    let d: Vec<f64> = rows.iter().map(|(t, lp)| lp - target(t)).collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
}

#[test]
fn families_list_table_and_json() {
    let (code, out, _) = run(&["families", "list"]);
    assert_eq!(code, 0);
    for id in ["binomial", "fieller_creasy", "neyman_scott"] {
        assert!(out.lines().any(|l| l.starts_with(id)), "{id} missing");
    }
    let (code, out, _) = run(&["families", "list", "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"binomial") && ids.contains(&"fieller_creasy") && ids.contains(&"neyman_scott"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["bogus"]).0, 2);
    assert_eq!(run(&["families"]).0, 2);
    assert_eq!(run(&["prior", "derive", "--family", "binomial"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let (code, _, err) = run(&["prior", "derive", "--family", "nope", "--method", "jeffreys", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("nope"));
    let (code, _, _) = run(&["prior", "derive", "--family", "binomial", "--method", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn prior_derive_binomial_gml() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gml.csv");
    let (code, _, err) = run(&["prior", "derive", "--family", "binomial", "--method", "gml", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = read_log_prior(&out);
    assert_eq!(rows.len(), 33);
    assert!(spread(&rows, |t| -0.75 * t[0].ln() - 0.75 * (1.0 - t[0]).ln()) < 1e-5);
    let desc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(desc["construction"], "gml");
    assert_eq!(desc["family_id"], "binomial");
}

#[test]
fn prior_derive_poisson_jeffreys() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    assert_eq!(run(&["prior", "derive", "--family", "poisson", "--method", "jeffreys", "--out", out.to_str().unwrap()]).0, 0);
    let rows = read_log_prior(&out);
    assert!(spread(&rows, |t| -0.5 * t[0].ln()) < 1e-8);
}

#[test]
fn prior_derive_neyman_scott_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ns.csv");
    let (code, _, err) =
        run(&["prior", "derive", "--family", "neyman_scott", "--method", "reference_orthogonal", "--grid", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = read_log_prior(&out);
    assert_eq!(rows.len(), 125);
    assert!(spread(&rows, |t| -t[2].ln()) < 1e-8);
}

#[test]
fn prior_derive_failure_exits_1() {
    // the orthogonal reference construction needs two parameter groups
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let (code, _, err) = run(&["prior", "derive", "--family", "poisson", "--method", "reference_orthogonal", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn matching_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("m.json");
    let (code, _, _) = run(&["matching", "check", "--family", "bvn_rho", "--prior", "jeffreys", "--order", "second", "--out", report.to_str().unwrap()]);
    assert_eq!(code, 3);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["verdict"], "fails");
    assert!(report.with_extension("csv").exists());
    assert_eq!(run(&["matching", "check", "--family", "normal_known_var", "--prior", "flat", "--order", "first"]).0, 0);
    assert_eq!(run(&["matching", "check", "--family", "binomial", "--prior", "jeffreys", "--order", "first"]).0, 0);
    assert_eq!(run(&["matching", "check", "--family", "binomial", "--prior", "uniform", "--order", "first"]).0, 3);
    assert_eq!(run(&["matching", "check", "--family", "bvn_rho", "--prior", "jeffreys", "--order", "existence"]).0, 4);
    assert_eq!(run(&["matching", "check", "--family", "exp_scale", "--prior", "jeffreys", "--order", "existence"]).0, 0);
    assert_eq!(run(&["matching", "check", "--family", "normal", "--prior", "haar_right", "--order", "first"]).0, 0);
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn coverage_run_right_haar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "haar.json",
        r#"{"family":"normal","prior":"right_haar","theta_true":[1.0,2.0],"n":5,"alphas":[0.05],"replications":2000,"seed":4}"#,
    );
    let out = dir.path().join("o");
    let (code, _, err) = run(&["coverage", "run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("coverage.json")).unwrap()).unwrap();
    let a = &r["per_alpha"][0];
    let (c, se) = (a["coverage"].as_f64().unwrap(), a["std_error"].as_f64().unwrap());
    assert!((c - 0.95).abs() <= 3.0 * se, "{c} ± {se}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 4);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn coverage_run_neyman_scott_reports_both_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ns.json", r#"{"experiment":"neyman_scott","n_cells":500,"k":2,"sigma_true":1.0,"seed":2}"#);
    let out = dir.path().join("o");
    assert_eq!(run(&["coverage", "run", "--config", &cfg, "--out", out.to_str().unwrap()]).0, 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("neyman_scott.json")).unwrap()).unwrap();
    assert!((r["jeffreys_mean_numeric"].as_f64().unwrap() - 0.5).abs() < 0.1);
    assert!((r["reference_mean_numeric"].as_f64().unwrap() - 1.0).abs() < 0.15);
}

#[test]
fn malformed_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"family\": \"normal\",,\n}");
    let (code, _, err) = run(&["coverage", "run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
    let cfg = write(dir.path(), "unknown.json", r#"{"family":"normal","prior":"jeffreys","theta_true":[0,1],"n":5,"alphas":[0.05],"seed":1,"typo":1}"#);
    assert_eq!(run(&["coverage", "run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]).0, 2);
}

#[test]
fn manifest_replay_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.json",
        r#"{"family":"binomial","prior":"jeffreys","theta_true":[0.3],"n":10,"alphas":[0.05,0.5],"replications":300,"seed":12}"#,
    );
    let exe = env!("CARGO_BIN_EXE_priorforge");
    let first = dir.path().join("t1");
    let st = Command::new(exe).env("PRIORFORGE_THREADS", "1").args(["coverage", "run", "--config", &cfg, "--out"]).arg(&first).status().unwrap();
    assert!(st.success());
    let second = dir.path().join("t8");
    let st = Command::new(exe)
        .env("PRIORFORGE_THREADS", "8")
        .args(["coverage", "run", "--config"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(st.success());
    for f in ["coverage.csv", "coverage.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let hash = |p: &Path| {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&first), hash(&second));
    let bad = Command::new(exe).env("PRIORFORGE_THREADS", "many").args(["coverage", "run", "--config", &cfg, "--out"]).arg(dir.path().join("x")).status().unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"command":"coverage run","config_hash":"00","config":{"experiment":"neyman_scott","n_cells":10,"k":2,"sigma_true":1.0,"seed":1},"seed":1,"version":"0.1.0","started_unix":0,"finished_unix":0,"outputs":[]}"#,
    );
    assert_eq!(run(&["coverage", "run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]).0, 2);
}
