use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fairaudit::fixtures;
use fairaudit_cli::report::FairnessReport;
use fairaudit_cli::mitigate::MitigationReport;
use fairaudit::ThresholdPolicy;

fn fairaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairaudit")).args(args).output().unwrap()
}

fn toy(dir: &Path) -> PathBuf {
    let p = dir.join("toy24.csv");
    std::fs::write(&p, fixtures::TOY_CSV).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn audit_writes_json_and_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("report.json");
    let o = fairaudit(&["--threshold", "0.4375", "audit", s(&data), "--output", s(&out), "--replicates", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: FairnessReport = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report.dataset.records, 24);
    assert_eq!(report.dataset.group_sizes, [8, 16]);
    assert_eq!(report.disparate_impact.as_ref().unwrap().result.ratio, 1.0 / 3.0);
    assert!(report.seeds.iter().any(|s| s.purpose == "impact_bootstrap"));
    let md = std::fs::read_to_string(out.with_extension("md")).unwrap();
    assert!(md.contains("| statistical parity | P[Ŷ=1\\|S=s] | 25.0% | 75.0% | 50.0 | +200.0% | no |"));
}

#[test]
fn missing_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let o = fairaudit(&["--y-col", "label", "--threshold", "0.5", "audit", s(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("label"));
}

#[test]
fn single_group_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    std::fs::write(&data, "s,y,score\n0,0,0.2\n0,1,0.8\n").unwrap();
    let o = fairaudit(&["mitigate", s(&data), "--method", "equalize-odds", "--output-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn audit_without_policy_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    assert_eq!(fairaudit(&["audit", s(&data)]).status.code(), Some(2));
}

#[test]
fn reweigh_balances_label_rates() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("rw");
    let o = fairaudit(&["mitigate", s(&data), "--method", "reweigh", "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: MitigationReport = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report.before.label_gap.unwrap() > 0.05);
    assert!(report.after.label_gap.unwrap() <= 1e-12);
    let csv = std::fs::read_to_string(out.join("data.csv")).unwrap();
    assert!(csv.starts_with("s,y,score,w\n"));
}

#[test]
fn zero_repair_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("feat.csv");
    std::fs::write(&data, "s,y,x1,x2\n0,0,1.50,3\n0,1,2.25,\n1,0,0.1,7\n1,1,9,2e1\n1,0,4,5\n").unwrap();
    let out = dir.path().join("rep");
    let o = fairaudit(&["mitigate", s(&data), "--method", "repair", "--amount", "0", "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(out.join("data.csv")).unwrap(), std::fs::read(&data).unwrap());

    let full = dir.path().join("full");
    let o = fairaudit(&["mitigate", s(&data), "--method", "repair", "--output-dir", s(&full)]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(full.join("data.csv")).unwrap(), std::fs::read(&data).unwrap());
    assert!(full.join("repair_plan.json").exists());
}

#[test]
fn equalize_odds_on_identical_groups_is_one_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("same.csv");
    let mut text = String::from("s,y,score\n");
    for g in 0..2 {
        for (y, m) in [(0, 0.1), (0, 0.3), (1, 0.4), (0, 0.55), (1, 0.7), (1, 0.9)] {
            text.push_str(&format!("{g},{y},{m}\n"));
        }
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("eo");
    let o = fairaudit(&["mitigate", s(&data), "--method", "equalize-odds", "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let policy: ThresholdPolicy = serde_json::from_slice(&std::fs::read(out.join("policy.json")).unwrap()).unwrap();
    assert!(policy.is_deterministic());
    assert_eq!(policy.rule(fairaudit::Group::Zero), policy.rule(fairaudit::Group::One));
}

#[test]
fn train_writes_model_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bench.csv");
    let o = fairaudit(&["--seed", "3", "synth", "--preset", "benchmark", "--n", "500", "--output", s(&data)]);
    assert!(o.status.success());
    let out = dir.path().join("train");
    let o = fairaudit(&[
        "--threshold", "0.5", "mitigate", s(&data), "--method", "train", "--penalty", "dp", "--lambda", "10",
        "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = fairaudit::mitigate::LinearModel::load(out.join("model.json")).unwrap();
    assert_eq!(model.coefficients.len(), 5);
    let csv = std::fs::read_to_string(out.join("data.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",score"));
    let report: MitigationReport = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(!report.after.metrics.is_empty());
}

#[test]
fn thresholds_policy_applies() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("thr");
    let o = fairaudit(&[
        "mitigate", s(&data), "--method", "thresholds", "--objective", "dp", "--target-rate", "0.5",
        "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: MitigationReport = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let sp = report.after.metrics[0].result.as_ref().unwrap();
    assert_eq!(sp.values, [Some(0.5), Some(0.5)]);
}

#[test]
fn roc_plot_ends_at_one_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let prefix = dir.path().join("roc");
    let o = fairaudit(&["plot", s(&data), "--kind", "roc", "--output", s(&prefix)]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(first.starts_with("0,0,"));
    assert!(last.starts_with("1,1,"));
    let svg = std::fs::read_to_string(dir.path().join("roc.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    let o = fairaudit(&["plot", s(&data), "--kind", "roc-by-group", "--output", s(&dir.path().join("g"))]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(csv.contains("s=0,") && csv.contains("s=1,"));
}

#[test]
fn uniform_histogram_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("u.csv");
    let o = fairaudit(&["--seed", "1", "synth", "--preset", "uniform", "--n", "20000", "--output", s(&data)]);
    assert!(o.status.success());
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("u.csv.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 1);
    let o = fairaudit(&["plot", s(&data), "--kind", "score-hist", "--bins", "10", "--output", s(&dir.path().join("h"))]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let totals: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(totals.len(), 10);
    assert_eq!(totals.iter().sum::<f64>(), 20000.0);
    let (lo, hi) = totals.iter().fold((f64::MAX, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    assert!(hi / lo <= 1.2, "{totals:?}");
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        assert!(fairaudit(&["--seed", "5", "synth", "--n", "300", "--output", s(p)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let d = fairaudit::load_csv(&a, &Default::default()).unwrap();
    assert_eq!(d.len(), 300);
}

#[test]
fn validate_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let o = fairaudit(&["validate", s(&data)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["records"], 24);
    assert_eq!(v["group_sizes"][0], 8);
}

#[test]
fn prediction_column_audit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.csv");
    std::fs::write(&data, "s,y,x,yhat\n0,0,1,0\n0,1,2,1\n1,0,3,1\n1,1,4,1\n0,1,5,0\n1,0,6,0\n").unwrap();
    let o = fairaudit(&["--prediction-col", "yhat", "audit", s(&data), "--metrics", "statistical_parity", "--ci", "asymptotic"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: FairnessReport = serde_json::from_slice(&o.stdout).unwrap();
    let sp = r.metrics[0].result.as_ref().unwrap();
    assert_eq!(sp.values, [Some(1.0 / 3.0), Some(2.0 / 3.0)]);
}
