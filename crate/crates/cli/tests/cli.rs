use homog_core::verify::ConvergenceReport;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

struct Run {
    status: i32,
    out: PathBuf,
    stderr: String,
    _dir: tempfile::TempDir,
}

impl Run {
    fn json(&self, name: &str) -> Value {
        let text = fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        serde_json::from_str(&text).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

fn homog(args: &[&str], config: Option<&Value>) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_homog"));
    cmd.args(args).arg("--out").arg(&out);
    if let Some(c) = config {
        let path = dir.path().join("config.json");
        fs::write(&path, serde_json::to_string_pretty(c).unwrap()).unwrap();
        cmd.arg("--config").arg(&path);
    }
    let o = cmd.output().unwrap();
    Run { status: o.status.code().unwrap(), out, stderr: String::from_utf8_lossy(&o.stderr).into_owned(), _dir: dir }
}

fn constant_1d(p: f64, q: f64, r: f64) -> Value {
    json!({
        "dimension": 1,
        "coefficient": { "family": "constant", "tensor": [[2.0]] },
        "exponents": { "p": p, "q": q, "r": r },
        "numerics": { "inner_nodes": 8, "outer_nodes": 8, "time_steps": 8, "s1_samples": 2, "s2_samples": 2 }
    })
}

fn shipped(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn classify_case_seven() {
    let r = homog(&["classify"], Some(&constant_1d(1.0, 3.0, 5.0)));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let case = r.json("case.json");
    assert_eq!(case["case"], 7);
    assert_eq!(case["exponents"]["exact"], true);
    assert_eq!(case["recipe"]["inner_type"], "parabolic_in_s2");
    let meta = r.json("metadata.json");
    assert!(meta["started_unix_seconds"].as_u64().unwrap() > 0);
    assert_eq!(meta["status"], 0);
    assert!(!r.text("case.json").contains("unix"));
}

#[test]
fn effective_constant_tensor() {
    let r = homog(&["effective"], Some(&constant_1d(1.0, 2.0, 2.5)));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let e = r.json("effective.json");
    assert_eq!(e["case"], 1);
    assert!((e["b"][0][0].as_f64().unwrap() - 2.0).abs() < 1e-12);
    let csv = r.text("intermediate.csv");
    assert!(csv.starts_with("element,s1,s2,a11\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn outputs_are_deterministic_across_worker_counts() {
    let cfg = shipped("effective_laminate_2d.json");
    let a = homog(&["effective", "--workers", "1"], Some(&cfg));
    let b = homog(&["effective", "--workers", "3"], Some(&cfg));
    assert_eq!(a.status, 0, "{}", a.stderr);
    assert_eq!(b.status, 0, "{}", b.stderr);
    for f in ["effective.json", "intermediate.csv"] {
        assert_eq!(a.text(f), b.text(f), "{f} differs");
    }
    assert_eq!(a.json("metadata.json")["workers"], 1);
    assert_eq!(b.json("metadata.json")["workers"], 3);
}

#[test]
fn dump_correctors_writes_corrector_set() {
    let r = homog(&["effective", "--dump-correctors"], Some(&constant_1d(1.0, 2.0, 2.5)));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let c: homog_core::effective::CorrectorSet = serde_json::from_str(&r.text("correctors.json")).unwrap();
    assert_eq!(c.dim, 1);
    assert!(c.inner.is_some());
}

#[test]
fn usage_errors_exit_64() {
    let r = homog(&["frobnicate"], None);
    assert_eq!(r.status, 64);
    let r = homog(&["classify", "--no-such-flag"], None);
    assert_eq!(r.status, 64);
}

#[test]
fn validation_failures_exit_2_with_reason() {
    let r = homog(&["classify"], Some(&constant_1d(2.0, 1.0, 3.0)));
    assert_eq!(r.status, 2);
    assert_eq!(r.json("error.json")["code"], "invalid_exponents");
    assert_eq!(r.json("metadata.json")["status"], 2);

    let mut cfg = constant_1d(1.0, 2.0, 3.0);
    cfg["typo"] = json!(1);
    let r = homog(&["classify"], Some(&cfg));
    assert_eq!(r.status, 2);
    assert_eq!(r.json("error.json")["code"], "invalid_config");

    let r = homog(&["classify"], None);
    assert_eq!(r.status, 2);
    assert_eq!(r.json("error.json")["code"], "invalid_config");

    let mut cfg = constant_1d(1.0, 2.0, 3.0);
    cfg["exponents"]["r"] = json!("seven halves");
    let r = homog(&["classify"], Some(&cfg));
    assert_eq!(r.json("error.json")["code"], "invalid_exponents");

    let cfg = json!({
        "dimension": 1,
        "coefficient": { "family": "custom_expression", "entries": [["0.5 + sin(2*pi*y1[0])"]], "coercivity": 0.4, "entry_bound": 2.0 },
        "exponents": { "p": 1, "q": 2, "r": 3 }
    });
    let r = homog(&["effective"], Some(&cfg));
    assert_eq!(r.status, 2, "{}", r.stderr);
    assert_eq!(r.json("error.json")["code"], "non_coercive");
}

#[test]
fn every_plan_is_checked_before_fine_runs() {
    let mut cfg = constant_1d(1.0, 2.0, 3.0);
    cfg["fine"] = json!({ "epsilons": [0.5, 0.001] });
    let r = homog(&["fine"], Some(&cfg));
    assert_eq!(r.status, 2);
    let err = r.json("error.json");
    assert_eq!(err["code"], "over_budget");
    assert!(err["message"].as_str().unwrap().contains("smallest admissible epsilon"));
    let minimal = err["details"]["minimal_epsilon"].as_f64().unwrap();
    assert!(minimal > 0.001 && minimal < 0.5, "{minimal}");
    assert!(!r.out.join("fine_0.csv").exists());
}

#[test]
fn solver_failures_exit_3() {
    let cfg = json!({
        "dimension": 1,
        // travelling wave in (y1, s2): the outer period map has real work to do
        "coefficient": { "family": "custom_expression", "entries": [["2 + sin(2*pi*(y1[0] + s2))"]], "coercivity": 1.0, "entry_bound": 3.0 },
        "exponents": { "p": 1, "q": 2, "r": 3 },
        "numerics": { "inner_nodes": 16, "outer_nodes": 16, "time_steps": 16, "cell": { "max_sweeps": 1, "periodic_tol": 1e-14 } }
    });
    let r = homog(&["effective"], Some(&cfg));
    assert_eq!(r.status, 3, "{}", r.stderr);
    let err = r.json("error.json");
    assert_eq!(err["kind"], "solver");
    assert!(err["code"].as_str().unwrap().starts_with("period_map"));
}

#[test]
fn fine_writes_solution_and_sidecar() {
    let mut cfg = constant_1d(1.0, 2.0, 3.0);
    cfg["fine"] = json!({ "epsilons": [0.5], "csv_stride": 4 });
    let r = homog(&["fine"], Some(&cfg));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let csv = r.text("fine_0.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,node,x0,value"));
    let meta = r.json("fine_0.json");
    let nodes = meta["nodes_per_axis"].as_u64().unwrap() as usize;
    let slices = meta["slices"].as_u64().unwrap() as usize;
    let last = slices - 1;
    let written = last / 4 + 1 + usize::from(last % 4 != 0);
    assert_eq!(csv.lines().count() - 1, nodes * written);
    let last_t: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(last_t, meta["horizon"].as_f64().unwrap());
    assert_eq!(r.json("fine_plans.json")["plans"].as_array().unwrap().len(), 1);
}

#[test]
fn macro_matches_poisson_solution() {
    let mut cfg = constant_1d(1.0, 2.0, 3.0);
    cfg["macro"] = json!({ "nodes": 65, "time_samples": 2 });
    let r = homog(&["macro"], Some(&cfg));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let csv = r.text("macro.csv");
    let mut worst = 0.0f64;
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        // −2u'' = 1
        worst = worst.max((f[3] - f[2] * (1.0 - f[2]) / 4.0).abs());
    }
    assert!(worst < 1e-12, "{worst}");
    assert_eq!(csv.lines().count(), 1 + 2 * 65);
}

#[test]
fn study_errors_strictly_decrease_and_report_round_trips() {
    let r = homog(&["study"], Some(&shipped("study_case3.json")));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let csv = r.text("study.csv");
    let errors: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errors.len(), 4);
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    let rep: ConvergenceReport = serde_json::from_str(&r.text("report.json")).unwrap();
    assert_eq!(rep.case_index, 3);
    assert!(rep.errors_strictly_decreasing);
    assert!((rep.b[0][0] - 6.0).abs() < 1e-6);
    assert_eq!(rep.conditions.len(), 4);
    // a priori bound surrogate
    assert!(rep.energy_norm_spread < 1.5);
    let again = serde_json::to_string_pretty(&rep).unwrap();
    assert_eq!(serde_json::from_str::<ConvergenceReport>(&again).unwrap(), rep);
    assert!(r.text("errors.svg").contains("<polyline"));
}

#[test]
fn diagnose_probe_gap_decreases() {
    let r = homog(&["diagnose"], Some(&shipped("diagnose_probe.json")));
    assert_eq!(r.status, 0, "{}", r.stderr);
    let d = r.json("diagnose.json");
    let series = &d["probes"][0]["series"];
    assert_eq!(series["gap_decreasing"], true);
    assert!(series["reduction"].as_f64().unwrap() >= 1.5);
    let probes = r.text("probes.csv");
    assert_eq!(probes.lines().count(), 5);
    assert!(r.text("conditions.csv").lines().count() == 1 + 4 * 4);
    assert!(r.text("diagnose.svg").starts_with("<svg"));
    for f in ["report.json", "study.csv", "pairings.csv"] {
        assert!(r.out.join(f).exists(), "{f}");
    }
}

#[test]
fn rejects_bad_probe_factors() {
    let mut cfg = shipped("diagnose_probe.json");
    cfg["diagnostics"]["probes"][0]["v3"] = json!({ "kind": "sin", "k": 1 });
    cfg["fine"] = json!({ "epsilons": [0.5] });
    let r = homog(&["diagnose"], Some(&cfg));
    assert_eq!(r.status, 2, "{}", r.stderr);
    assert_eq!(r.json("error.json")["code"], "invalid_diagnostic");
}
