// Named to sort before the acceptance target: cargo runs test targets in name
// order and stops at the first one that fails.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oraclepriv"));
    c.env_remove("ORACLEPRIV_SEED");
    c
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn rrspm_config(trials: usize, sweep: Option<Value>) -> Value {
    let mut v = json!({
        "schema_version": 1,
        "algorithm": "rrspm_laplace",
        "class": {"kind": "threshold1d"},
        "base": {"kind": "uniform_interval"},
        "labels": {
            "kind": "realizable",
            "target": {"class": {"kind": "threshold1d"}, "params": [0.4]},
            "flip_rate": 0.0
        },
        "hyperparams": {"n": 40, "m": 6, "epsilon": 1.0},
        "trials": trials,
        "seed": 7,
        "test_n": 500
    });
    if let Some(s) = sweep {
        v["sweep"] = s;
    }
    v
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_cmd(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, String::from_utf8_lossy(&o.stderr));
}

#[test]
fn minimal_run_writes_two_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &rrspm_config(2, None));
    let out = dir.path().join("out");
    ok(&run_cmd(&cfg, &out, &["--workers", "1"]));
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("trial,algorithm,n,m,eta,gamma,J,epsilon,delta,sigma,excess_risk,fbar_risk,oracle_calls,runtime_ms,seed"));
    assert!(!text.contains('\r'));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rows"], 2);
    assert_eq!(manifest["master_seed"], 7);
    assert!(out.join("config.json").exists());
    // runtime_ms stays empty without --timing
    for l in &lines[1..] {
        let fields: Vec<&str> = l.split(',').collect();
        assert_eq!(fields[13], "");
    }
}

#[test]
fn sweep_of_four_values_with_fifty_trials_gives_two_hundred_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({"parameter": "n", "values": [20, 40, 80, 160]});
    let cfg = write_config(dir.path(), "c.json", &rrspm_config(50, Some(sweep)));
    let out = dir.path().join("out");
    ok(&run_cmd(&cfg, &out, &[]));
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 201);
    let mut rdr = csv::Reader::from_path(out.join("results.csv")).unwrap();
    let ns: Vec<String> = rdr.records().map(|r| r.unwrap()[2].to_string()).collect();
    for (i, v) in ["20", "40", "80", "160"].iter().enumerate() {
        assert!(ns[i * 50..(i + 1) * 50].iter().all(|n| n == v));
    }
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({"parameter": "n", "values": [20, 40]});
    let cfg = write_config(dir.path(), "c.json", &rrspm_config(6, Some(sweep)));
    let mut outputs = Vec::new();
    for (k, w) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        ok(&run_cmd(&cfg, &out, &["--workers", w]));
        outputs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_overrides_config_and_missing_seed_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &rrspm_config(2, None));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&run_cmd(&cfg, &a, &["--seed", "99"]));
    let o = bin()
        .env("ORACLEPRIV_SEED", "99")
        .args(["run", "--config"])
        .arg(write_config(dir.path(), "noseed.json", &{
            let mut v = rrspm_config(2, None);
            v.as_object_mut().unwrap().remove("seed");
            v
        }))
        .arg("--output-dir")
        .arg(&b)
        .output()
        .unwrap();
    ok(&o);
    assert_eq!(std::fs::read(a.join("results.csv")).unwrap(), std::fs::read(b.join("results.csv")).unwrap());

    let o = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("noseed.json"))
        .arg("--output-dir")
        .arg(dir.path().join("c"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn invalid_config_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = rrspm_config(2, None);
    v["hyperparams"]["epsilon"] = json!(-1.0);
    let cfg = write_config(dir.path(), "bad.json", &v);
    let o = run_cmd(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("epsilon"), "{err}");

    let mut v = rrspm_config(2, None);
    v["bogus"] = json!(1);
    let cfg = write_config(dir.path(), "unknown.json", &v);
    let o = run_cmd(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    std::fs::write(dir.path().join("broken.json"), "{\n  \"schema_version\": 1,\n").unwrap();
    let o = run_cmd(&dir.path().join("broken.json"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn strict_audit_exits_two_on_an_undernoised_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["audit", "--kind", "continuous-privacy", "--strict", "--config"])
        .arg(repo("configs/audit_ftrl_undernoised.json"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    assert!(text.starts_with("kind,instance_id,estimate,ci_low,ci_high,bound,trials,verdict\n"));
    assert!(text.lines().any(|l| l.ends_with(",fail")));

    // the same config without --strict reports but succeeds
    let o = bin()
        .args(["audit", "--kind", "continuous-privacy", "--config"])
        .arg(repo("configs/audit_ftrl_undernoised.json"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&o);
}

#[test]
fn audit_kind_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &rrspm_config(1, None));
    let o = bin()
        .args(["audit", "--kind", "ftpl-tail", "--config"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ftpl-tail"));
}

fn plot_cmd(results: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("plot").arg(results).arg("--out").arg(out).args(extra).output().unwrap()
}

#[test]
fn plot_draws_one_series_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    std::fs::write(&csv, "n,excess_risk,algorithm\n10,0.5,a\n10,0.4,a\n100,0.2,a\n10,0.6,b\n100,0.3,b\n10,0.7,c\n100,0.1,c\n").unwrap();
    let svg = dir.path().join("p.svg");
    ok(&plot_cmd(&csv, &svg, &["--x", "n", "--y", "excess_risk", "--group", "algorithm", "--log-x"]));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert_eq!(text.matches("class=\"series\"").count(), 3);
}

#[test]
fn plot_rejects_missing_columns_and_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    std::fs::write(&csv, "n,excess_risk\n10,0.5\n").unwrap();
    let o = plot_cmd(&csv, &dir.path().join("p.svg"), &["--x", "n", "--y", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));

    let empty = dir.path().join("e.csv");
    std::fs::write(&empty, "").unwrap();
    let o = plot_cmd(&empty, &dir.path().join("p.svg"), &["--x", "n", "--y", "excess_risk"]);
    assert_eq!(o.status.code(), Some(1));

    let header_only = dir.path().join("h.csv");
    std::fs::write(&header_only, "n,excess_risk\n").unwrap();
    let o = plot_cmd(&header_only, &dir.path().join("p.svg"), &["--x", "n", "--y", "excess_risk"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn params_prints_hyperparameters_as_json() {
    let o = bin()
        .args(["params", "--theorem", "rrspm_pure", "--alpha", "0.1", "--epsilon", "1"])
        .output()
        .unwrap();
    ok(&o);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["theorem"], "rrspm_pure");
    assert!(v["n"].as_u64().unwrap() > 0);
    assert!(v["m"].as_u64().unwrap() > 0);

    let o = bin().args(["params", "--theorem", "nonsense", "--alpha", "0.1", "--epsilon", "1"]).output().unwrap();
    assert!(!o.status.success());
}
