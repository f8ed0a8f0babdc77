//! The `mitigate` command: one method per invocation, with the metrics
//! recomputed before and after.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use fairaudit::depmeasure::{BasisFamily, BasisSpec};
use fairaudit::groupfair::{MetricId, MetricOptions};
use fairaudit::mitigate::{
    di_remove, equalize_odds, massage_labels, per_group_thresholds, reweigh, train_logistic, EqualizeOptions, Link,
    OddsCriterion, PenaltySpec, ThresholdObjective, TrainOptions,
};
use fairaudit::{apply_policy, CsvTable, Dataset, Group, PredictionSet, Result, ThresholdPolicy};

use crate::report::{metric_entries, metric_rows, pct, DatasetInfo, MetricEntry, ToolInfo};
use crate::{write_json, GlobalArgs, Input, PolicySource, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Massage,
    Reweigh,
    Repair,
    Train,
    Thresholds,
    EqualizeOdds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    None,
    Dp,
    Eo,
    DpMaxcor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Logistic,
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Dp,
    EoTpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Full,
    Opportunity,
}

#[derive(Debug, Clone, Args)]
pub struct MitigateArgs {
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Directory for the transformed data, policies and reports.
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Massaging: ranking threshold (default: accuracy-optimal).
    #[arg(long)]
    pub massage_threshold: Option<f64>,
    /// Repair: fraction of the way to the common distribution.
    #[arg(long, default_value_t = 1.0)]
    pub amount: f64,
    /// Repair: features to repair (default: all).
    #[arg(long, value_delimiter = ',')]
    pub repair: Vec<String>,
    #[arg(long, value_enum, default_value_t = PenaltyArg::None)]
    pub penalty: PenaltyArg,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Equalized-odds penalty weight on the y=0 stratum (default: --lambda).
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Equalized-odds penalty weight on the y=1 stratum (default: --lambda).
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Polynomial degree of the maximal-correlation penalty.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, value_enum, default_value_t = LinkArg::Logistic)]
    pub link: LinkArg,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Dp)]
    pub objective: ObjectiveArg,
    /// Thresholds: set each group's rate as close as possible to this.
    #[arg(long)]
    pub target_rate: Option<f64>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Full)]
    pub criterion: CriterionArg,
    /// Equalized odds: deterministic per-group thresholds only.
    #[arg(long)]
    pub deterministic: bool,
}

/// Label and (when decisions exist) metric summary of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub dataset: DatasetInfo,
    /// Weighted `P[Y=1|S=s]`.
    pub label_rates: [Option<f64>; 2],
    pub label_gap: Option<f64>,
    pub policy: Option<PolicySource>,
    pub metrics: Vec<MetricEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub method: Method,
    pub before: Snapshot,
    pub after: Snapshot,
    /// Method-specific output (swap log, cell weights, repair plan, ...).
    pub details: serde_json::Value,
    pub artifacts: Vec<String>,
}

fn snapshot(
    file: &str,
    sha256: &str,
    d: &Dataset,
    decisions: Option<(PolicySource, PredictionSet)>,
    eps: f64,
) -> Snapshot {
    let label_rates = Group::BOTH.map(|g| d.base_rate(g));
    let label_gap = match label_rates {
        [Some(a), Some(b)] => Some((b - a).abs()),
        _ => None,
    };
    let (policy, metrics) = match decisions {
        Some((policy, pred)) => {
            let opts = MetricOptions {
                epsilon: eps,
                ..MetricOptions::default()
            };
            let ids: Vec<MetricId> = MetricId::TABLE
                .into_iter()
                .chain([MetricId::EqualizedOdds])
                .chain(d.has_scores().then_some(MetricId::AucFairness))
                .collect();
            (Some(policy), metric_entries(&ids, d, &pred, &opts))
        }
        None => (None, Vec::new()),
    };
    Snapshot {
        dataset: DatasetInfo::of(file, sha256, d),
        label_rates,
        label_gap,
        policy,
        metrics,
    }
}

/// Decisions for a transformed dataset under the command-line policy.
fn global_decisions(global: &GlobalArgs, table: &CsvTable, d: &Dataset) -> Result<Option<(PolicySource, PredictionSet)>> {
    if let Some(col) = &global.prediction_col {
        let pred = table.predictions(col)?;
        return Ok(Some((PolicySource::PredictionColumn { column: col.clone() }, pred)));
    }
    match global.threshold_policy()? {
        Some(policy) if d.has_scores() => {
            let pred = apply_policy(d, &policy)?;
            Ok(Some((PolicySource::Thresholds { policy }, pred)))
        }
        _ => Ok(None),
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Rewrites only the cells whose value changed, so untouched cells keep
/// their original text.
fn update_column(table: &mut CsvTable, name: &str, old: &[f64], new: &[f64], fmt: impl Fn(f64) -> String) {
    let j = table.column_index(name);
    let values = (0..new.len())
        .map(|i| match j {
            Some(j) if same(old[i], new[i]) => table.rows[i][j].clone(),
            _ => fmt(new[i]),
        })
        .collect();
    table.set_column(name, values);
}

fn write_table(table: &CsvTable, path: &Path) -> Result<()> {
    table.write(path)
}

fn policy_decisions(d: &Dataset, policy: &ThresholdPolicy) -> Result<(PolicySource, PredictionSet)> {
    let pred = apply_policy(d, policy)?;
    Ok((PolicySource::Thresholds { policy: policy.clone() }, pred))
}

pub fn run(global: &GlobalArgs, args: &MitigateArgs) -> Result<()> {
    let input = Input::load(&args.data, global)?;
    std::fs::create_dir_all(&args.output_dir)?;
    let out = |name: &str| args.output_dir.join(name);
    let d = &input.dataset;
    let name = input.file_name();
    let before = snapshot(&name, &input.sha256, d, global_decisions(global, &input.table, d)?, global.epsilon);
    let mut table = input.table.clone();
    let mut artifacts = Vec::new();

    let (after_data, after_decisions, details) = match args.method {
        Method::Massage => {
            let m = massage_labels(d, global.epsilon, args.massage_threshold)?;
            let old: Vec<f64> = d.labels().iter().map(|&y| f64::from(u8::from(y))).collect();
            let new: Vec<f64> = m.dataset.labels().iter().map(|&y| f64::from(u8::from(y))).collect();
            update_column(&mut table, &global.y_col, &old, &new, |v| format!("{v}"));
            let dec = global_decisions(global, &table, &m.dataset)?;
            let details = serde_json::json!({
                "swaps": m.swaps,
                "threshold": m.threshold,
                "gap_before": m.gap_before,
                "gap_after": m.gap_after,
                "reached": m.reached,
            });
            (m.dataset, dec, details)
        }
        Method::Reweigh => {
            let r = reweigh(d)?;
            let col = global.weight_col.clone().unwrap_or_else(|| "w".into());
            update_column(&mut table, &col, &d.weights(), &r.dataset.weights(), |v| format!("{v}"));
            let dec = global_decisions(global, &table, &r.dataset)?;
            (r.dataset, dec, serde_json::json!({ "cell_weights": r.cell_weights, "weight_column": col }))
        }
        Method::Repair => {
            let (repaired, plan) = di_remove(d, &args.repair, args.amount)?;
            for f in &plan.features {
                let old = d.feature_column(f.index);
                let new = repaired.feature_column(f.index);
                update_column(&mut table, &f.feature, &old, &new, |v| format!("{v}"));
            }
            write_json(&out("repair_plan.json"), &plan)?;
            artifacts.push("repair_plan.json".to_string());
            let dec = global_decisions(global, &table, &repaired)?;
            let details = serde_json::json!({
                "amount": plan.amount,
                "features": plan.features.iter().map(|f| f.feature.clone()).collect::<Vec<_>>(),
            });
            (repaired, dec, details)
        }
        Method::Train => {
            let penalty = match args.penalty {
                PenaltyArg::None => PenaltySpec::None,
                PenaltyArg::Dp => PenaltySpec::DpCorrelation { lambda: args.lambda },
                PenaltyArg::Eo => PenaltySpec::EoCorrelation {
                    lambda0: args.lambda0.unwrap_or(args.lambda),
                    lambda1: args.lambda1.unwrap_or(args.lambda),
                },
                PenaltyArg::DpMaxcor => PenaltySpec::DpMaxCorrelation {
                    lambda: args.lambda,
                    basis: BasisSpec {
                        family: BasisFamily::Polynomial,
                        size: args.degree,
                        ..BasisSpec::default()
                    },
                },
            };
            let opts = TrainOptions {
                link: match args.link {
                    LinkArg::Logistic => Link::Logistic,
                    LinkArg::Probit => Link::Probit,
                },
                l2: args.l2,
                max_iter: args.max_iter,
                ..TrainOptions::default()
            };
            let fit = train_logistic(d, penalty.clone(), &opts)?;
            fit.model.save(out("model.json"))?;
            artifacts.push("model.json".to_string());
            let scores = fit.model.predict(d)?;
            let col = global.score_col.clone().unwrap_or_else(|| "score".into());
            let old = d.scores().unwrap_or_else(|_| vec![f64::NAN; d.len()]);
            update_column(&mut table, &col, &old, &scores, |v| format!("{v}"));
            let records = d
                .records()
                .iter()
                .zip(&scores)
                .map(|(r, &m)| {
                    let mut r = r.clone();
                    r.score = Some(m);
                    r
                })
                .collect();
            let scored = d.replace_records(records)?;
            let dec = match global.threshold_policy()? {
                Some(p) => Some(policy_decisions(&scored, &p)?),
                None => None,
            };
            let details = serde_json::json!({
                "penalty": penalty,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "diverged": fit.diverged,
                "objective": fit.objective,
                "loss": fit.loss,
                "penalty_value": fit.penalty,
                "score_column": col,
            });
            (scored, dec, details)
        }
        Method::Thresholds => {
            let objective = match args.objective {
                ObjectiveArg::Dp => ThresholdObjective::Dp,
                ObjectiveArg::EoTpr => ThresholdObjective::EoTpr,
            };
            let t = per_group_thresholds(d, objective, args.target_rate)?;
            write_json(&out("policy.json"), &t.policy)?;
            artifacts.push("policy.json".to_string());
            let dec = Some(policy_decisions(d, &t.policy)?);
            (d.clone(), dec, serde_json::to_value(&t)?)
        }
        Method::EqualizeOdds => {
            let opts = EqualizeOptions {
                criterion: match args.criterion {
                    CriterionArg::Full => OddsCriterion::Full,
                    CriterionArg::Opportunity => OddsCriterion::Opportunity,
                },
                randomized: !args.deterministic,
            };
            let e = equalize_odds(d, &opts)?;
            write_json(&out("policy.json"), &e.policy)?;
            artifacts.push("policy.json".to_string());
            let dec = Some(policy_decisions(d, &e.policy)?);
            (d.clone(), dec, serde_json::to_value(&e)?)
        }
    };

    let data_changed = matches!(
        args.method,
        Method::Massage | Method::Reweigh | Method::Repair | Method::Train
    );
    let mut after_sha = input.sha256.clone();
    let mut after_name = name.clone();
    if data_changed {
        write_table(&table, &out("data.csv"))?;
        artifacts.push("data.csv".to_string());
        after_sha = crate::sha256_file(&out("data.csv"))?;
        after_name = "data.csv".into();
    }
    let after = snapshot(&after_name, &after_sha, &after_data, after_decisions, global.epsilon);
    artifacts.push("report.json".to_string());
    artifacts.push("report.md".to_string());
    let report = MitigationReport {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::current(),
        method: args.method,
        before,
        after,
        details,
        artifacts,
    };
    write_json(&out("report.json"), &report)?;
    std::fs::write(out("report.md"), render_markdown(&report))?;
    Ok(())
}

pub fn render_markdown(r: &MitigationReport) -> String {
    let mut md = String::new();
    let method = serde_json::to_value(r.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let _ = writeln!(md, "# Mitigation: {method}\n");
    for (title, s) in [("Before", &r.before), ("After", &r.after)] {
        let _ = writeln!(md, "## {title}\n");
        let _ = writeln!(
            md,
            "- data: `{}` ({} records, sha256 `{}`)",
            s.dataset.file, s.dataset.records, s.dataset.sha256
        );
        let _ = writeln!(
            md,
            "- label rates: s=0 {}, s=1 {}; gap {}",
            pct(s.label_rates[0]),
            pct(s.label_rates[1]),
            pct(s.label_gap)
        );
        if !s.metrics.is_empty() {
            let _ = writeln!(md, "\n| Name | Probabilistic formula | s=0 | s=1 | diff | (%) | pass |");
            let _ = writeln!(md, "|---|---|---:|---:|---:|---:|---|");
            for e in &s.metrics {
                for row in metric_rows(e) {
                    let _ = writeln!(md, "{row}");
                }
            }
        }
        md.push('\n');
    }
    let _ = writeln!(md, "## Artifacts\n");
    for a in &r.artifacts {
        let _ = writeln!(md, "- {a}");
    }
    md
}
