use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochconf"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p
}

fn stochconf(cmd: &str, cfg: &Path, out: &Path) -> Output {
    bin().arg(cmd).arg("--config").arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const SMALL: &str = r#"{
    "system": {"kind": "dubin"},
    "metric": {"metric": "sup", "clip_b": 3.0},
    "spec": "phi_dubin",
    "delta": 0.05, "delta_bar": 0.05, "beta": 0.9, "gamma": 0.05,
    "epsilon": 1.5, "r": 1.0, "risk_measure": "cvar",
    "sizes": {"n_cal": 300, "n_test": 100},
    "seed": 3,
    "mode": "MODE"
}"#;

fn small(mode: &str) -> String {
    SMALL.replace("MODE", mode)
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system":{"kind":"dubin"},"metric":{"metric":"sup"},"delta":1.2,"beta":0,"colour":"red","mode":"def1"}"#,
    );
    let o = stochconf("run", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["delta", "beta", "colour", "sizes", "epsilon"] {
        assert!(err.contains(key), "{key} missing from:\n{err}");
    }
    assert!(!dir.path().join("out").join("report.json").exists());
}

#[test]
fn unparsable_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("transfer").replace("\"phi_dubin\"", "\"G[0,1] (y0 >= 1)\""));
    let o = stochconf("run", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_upstream_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("def1"));
    let o = stochconf("check", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing upstream artifact"), "{err}");
    assert!(err.contains("stochconf"), "{err}");
}

#[test]
fn def1_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("def1"));
    let out = dir.path().join("out");
    ok(&stochconf("run", &cfg, &out));
    let verdict = json(&out.join("verdict.json"));
    let v = &verdict["verdict"];
    assert_eq!(v["method"], "def1");
    assert_eq!(v["k"], 300);
    let z = v["z_bar"].as_f64().unwrap();
    assert_eq!(v["conformant"].as_bool().unwrap(), z <= 1.5);
    let vs = verdict["validation_score"].as_f64().unwrap();
    assert!((0.8..=1.0).contains(&vs));

    let report = json(&out.join("report.json"));
    assert_eq!(report["verdict"], *v);
    assert_eq!(report["provenance"]["seed"], 3);
    assert_eq!(report["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    let h = &report["histograms"]["distance_cal"];
    assert_eq!(h["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 300);
    assert!(out.join("hist_distance_test.csv").exists());

    // The bound is recomputable from the persisted scores.
    let text = fs::read_to_string(out.join("scores_cal.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let col = rdr.headers().unwrap().iter().position(|h| h == "distance").unwrap();
    let mut d: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    d.sort_by(f64::total_cmp);
    let p = v["p_index"].as_u64().unwrap() as usize;
    assert_eq!(p, 286);
    assert_eq!(d[p - 1], z);
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("all"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&stochconf("run", &cfg, &a));
    let o = bin()
        .env("STOCHCONF_THREADS", "1")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    ok(&o);
    for f in ["scores_cal.csv", "scores_test.csv", "report.json", "transfer.json", "risk.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("def1"));
    let o = bin()
        .env("STOCHCONF_THREADS", "zero")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_chain_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("all"));
    let (chain, whole) = (dir.path().join("chain"), dir.path().join("whole"));
    for stage in ["simulate", "score", "calibrate", "check", "risk", "transfer", "report"] {
        ok(&stochconf(stage, &cfg, &chain));
    }
    ok(&stochconf("run", &cfg, &whole));
    assert_eq!(fs::read(chain.join("report.json")).unwrap(), fs::read(whole.join("report.json")).unwrap());
}

#[test]
fn stale_scores_raise_provenance_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("def1"));
    let out = dir.path().join("out");
    for stage in ["simulate", "score", "calibrate"] {
        ok(&stochconf(stage, &cfg, &out));
    }
    let data = out.join("dataset_test.json");
    let mut d = json(&data);
    d["pairs"][0]["id"] = Value::from(123_456);
    fs::write(&data, serde_json::to_string(&d).unwrap()).unwrap();
    let o = stochconf("check", &cfg, &out);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("provenance"));
    let w = json(&out.join("verdict.json"))["warnings"].clone();
    assert!(w.as_array().unwrap().iter().any(|m| m.as_str().unwrap().contains("dataset_test.json")));
    ok(&stochconf("report", &cfg, &out));
    assert_eq!(json(&out.join("report.json"))["warnings"], w);
}

#[test]
fn transfer_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("transfer"));
    let out = dir.path().join("out");
    ok(&stochconf("run", &cfg, &out));
    let file = json(&out.join("transfer.json"));
    let t = &file["transfer"];
    for key in ["c1", "epsilon", "H", "gamma", "c2_bound", "failure_prob", "empirical_fraction", "observed_c2"] {
        assert!(!t[key].is_null(), "{key} missing: {t}");
    }
    let c2 = t["c1"].as_f64().unwrap() - t["H"].as_f64().unwrap() * t["epsilon"].as_f64().unwrap();
    assert!((t["c2_bound"].as_f64().unwrap() - c2).abs() < 1e-12);
    assert!((t["failure_prob"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert!(file["risk_transfer"]["holds"].as_bool().unwrap());
}

#[test]
fn worst_case_mode() {
    let dir = tempfile::tempdir().unwrap();
    let body = small("def2").replace(
        "\"seed\": 3,",
        "\"seed\": 3, \"worstcase\": {\"kappa\": 0.25, \"n_per_cell\": 60, \"K_L\": 50, \"delta_L\": 0.05},",
    );
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    ok(&stochconf("run", &cfg, &out));
    let w = json(&out.join("worstcase.json"));
    assert_eq!(w["verdict"]["method"], "def2");
    let b = &w["bound"];
    let total = b["z_bar"].as_f64().unwrap() + b["l_bar"].as_f64().unwrap() * b["kappa"].as_f64().unwrap();
    assert_eq!(b["total"].as_f64().unwrap(), total);
    assert_eq!(b["per_cell"].as_array().unwrap().len(), 4);
    assert!(json(&out.join("report.json"))["worstcase"].is_object());
}

#[test]
fn dataset_file_source() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&stochconf("simulate", &write_config(dir.path(), &small("def1")), &gen));
    fs::rename(gen.join("dataset_cal.json"), dir.path().join("pairs.json")).unwrap();
    let body = r#"{"dataset": {"path": "pairs.json"}, "metric": {"metric": "skorokhod"},
        "delta": 0.1, "epsilon": 2.0, "sizes": {"n_cal": 200}, "seed": 1, "mode": "def1"}"#;
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("out");
    ok(&stochconf("run", &cfg, &out));
    let v = json(&out.join("verdict.json"));
    assert_eq!(v["verdict"]["k"], 200);
    assert_eq!(v["n_test"], 100);
}
