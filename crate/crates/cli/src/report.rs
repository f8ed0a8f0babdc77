//! The `audit` command and the report document it writes.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use fairaudit::depmeasure::{maximal_correlation, mutual_information, pearson, BasisSpec, MaxCorrResult};
use fairaudit::groupfair::{
    disparate_impact, group_metric, impact_ci, impact_estimate, CiMethod, DisparateImpactResult, ImpactInterval,
    MetricId, MetricOptions, MetricResult,
};
use fairaudit::indivfair::{
    lipschitz_audit, reconstruction_audit, LipschitzAuditResult, LipschitzOptions, OutputMetric,
    ReconstructionAuditResult, ReconstructionOptions,
};
use fairaudit::{Dataset, Error, Group, PredictionSet, Result};

use crate::{decisions, write_json, Format, GlobalArgs, Input, PolicySource, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiArg {
    Bootstrap,
    Asymptotic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LipschitzMetricArg {
    Score,
    Decision,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    pub data: PathBuf,
    /// `all`, `table`, or a comma-separated list of metric names.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub metrics: Vec<String>,
    /// Write the JSON report here and the Markdown rendering next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Flag ratios below this value as disparate impact.
    #[arg(long, default_value_t = 0.8)]
    pub di_threshold: f64,
    #[arg(long, value_enum, default_value_t = CiArg::Bootstrap)]
    pub ci: CiArg,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 10)]
    pub calibration_bins: usize,
    /// Also run the Lipschitz and reconstruction audits.
    #[arg(long)]
    pub individual: bool,
    #[arg(long, default_value_t = 1.0)]
    pub lipschitz_scale: f64,
    #[arg(long, value_enum, default_value_t = LipschitzMetricArg::Score)]
    pub lipschitz_metric: LipschitzMetricArg,
    /// Write the most violating pairs to this CSV.
    #[arg(long)]
    pub pairs_output: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> ToolInfo {
        ToolInfo {
            name: "fairaudit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub file: String,
    pub sha256: String,
    pub records: usize,
    pub group_sizes: [usize; 2],
    pub group_weights: [f64; 2],
    pub base_rates: [Option<f64>; 2],
    pub has_scores: bool,
    pub features: Vec<String>,
}

impl DatasetInfo {
    pub fn new(input: &Input) -> DatasetInfo {
        DatasetInfo::of(&input.file_name(), &input.sha256, &input.dataset)
    }

    pub fn of(file: &str, sha256: &str, d: &Dataset) -> DatasetInfo {
        DatasetInfo {
            file: file.into(),
            sha256: sha256.into(),
            records: d.len(),
            group_sizes: Group::BOTH.map(|g| d.group_size(g)),
            group_weights: Group::BOTH.map(|g| d.group_weight(g)),
            base_rates: Group::BOTH.map(|g| d.base_rate(g)),
            has_scores: d.has_scores(),
            features: d.feature_names().to_vec(),
        }
    }
}

/// A metric row: either a result or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: MetricId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<MetricResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactBlock {
    pub result: DisparateImpactResult,
    /// `P[Ŷ=1|S=0] / P[Ŷ=1|S=1]`.
    pub estimate: Option<f64>,
    pub interval: Option<ImpactInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dependence {
    pub pearson: Option<f64>,
    pub maximal_correlation: Option<MaxCorrResult>,
    /// In nats.
    pub mutual_information: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceBlock {
    pub decision: Dependence,
    pub score: Option<Dependence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualBlock {
    pub lipschitz: Option<LipschitzAuditResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz_error: Option<String>,
    pub reconstruction: Option<ReconstructionAuditResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub purpose: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub dataset: DatasetInfo,
    pub policy: PolicySource,
    pub epsilon: f64,
    pub metrics: Vec<MetricEntry>,
    pub disparate_impact: Option<ImpactBlock>,
    pub independence: IndependenceBlock,
    pub individual: Option<IndividualBlock>,
    pub seeds: Vec<SeedEntry>,
}

/// Metric ids selected by `--metrics`. `all` keeps only the metrics the
/// data can support; explicit names are always attempted.
pub fn select_metrics(spec: &[String], d: &Dataset) -> Result<Vec<MetricId>> {
    match spec {
        [one] if one == "all" => Ok(MetricId::ALL
            .into_iter()
            .filter(|m| d.has_scores() || !m.needs_scores())
            .filter(|m| *m != MetricId::ConditionalDemographicParity || !d.legitimate().is_empty())
            .collect()),
        [one] if one == "table" => Ok(MetricId::TABLE.to_vec()),
        names => names.iter().map(|n| n.trim().parse()).collect(),
    }
}

fn lift<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn metric_entries(ids: &[MetricId], d: &Dataset, pred: &PredictionSet, opts: &MetricOptions) -> Vec<MetricEntry> {
    ids.iter()
        .map(|&metric| {
            let (result, error) = lift(group_metric(metric, d, pred, opts));
            MetricEntry { metric, result, error }
        })
        .collect()
}

fn dependence(x: &[f64], s: &[f64], w: &[f64], discrete: bool) -> Dependence {
    Dependence {
        pearson: pearson(x, s, Some(w)).ok(),
        maximal_correlation: maximal_correlation(x, s, &BasisSpec::default()).ok(),
        mutual_information: if discrete { mutual_information(x, s, Some(w)).ok() } else { None },
    }
}

pub fn independence(d: &Dataset, pred: &PredictionSet) -> IndependenceBlock {
    let s: Vec<f64> = d.groups().iter().map(|g| g.index() as f64).collect();
    let w = d.weights();
    let decision = dependence(pred.probs(), &s, &w, pred.is_hard());
    let score = d.scores().ok().map(|m| dependence(&m, &s, &w, false));
    IndependenceBlock { decision, score }
}

pub fn build_report(global: &GlobalArgs, args: &AuditArgs, input: &Input) -> Result<FairnessReport> {
    let d = &input.dataset;
    let (policy, pred) = decisions(global, input)?.ok_or_else(|| {
        Error::invalid("audit needs decisions: pass --threshold, --threshold-by-group or --prediction-col")
    })?;
    let opts = MetricOptions {
        epsilon: global.epsilon,
        calibration_bins: args.calibration_bins,
    };
    let ids = select_metrics(&args.metrics, d)?;
    let metrics = metric_entries(&ids, d, &pred, &opts);
    let mut seeds = Vec::new();

    let disparate = disparate_impact(d, &pred, args.di_threshold, global.epsilon).ok().map(|result| {
        let estimate = impact_estimate(d, &pred).ok().filter(|t| t.is_finite());
        let method = match args.ci {
            CiArg::Bootstrap => Some(CiMethod::Bootstrap),
            CiArg::Asymptotic => Some(CiMethod::Asymptotic),
            CiArg::None => None,
        };
        let (interval, interval_error) = match method {
            Some(m) => {
                if m == CiMethod::Bootstrap {
                    seeds.push(SeedEntry {
                        purpose: "impact_bootstrap".into(),
                        seed: global.seed,
                    });
                }
                lift(impact_ci(d, &pred, m, args.ci_level, args.replicates, global.seed))
            }
            None => (None, None),
        };
        ImpactBlock {
            result,
            estimate,
            interval,
            interval_error,
        }
    });

    let individual = args.individual.then(|| {
        let lopts = LipschitzOptions {
            metric: match args.lipschitz_metric {
                LipschitzMetricArg::Score => OutputMetric::Score,
                LipschitzMetricArg::Decision => OutputMetric::Decision,
            },
            scale: args.lipschitz_scale,
            seed: global.seed,
            ..LipschitzOptions::default()
        };
        let lip_pred = (lopts.metric == OutputMetric::Decision).then_some(&pred);
        let (lipschitz, lipschitz_error) = lift(lipschitz_audit(d, lip_pred, &lopts));
        if lipschitz.as_ref().is_some_and(|l| !l.exact) {
            seeds.push(SeedEntry {
                purpose: "lipschitz_pairs".into(),
                seed: global.seed,
            });
        }
        let ropts = ReconstructionOptions {
            folds: args.folds,
            seed: global.seed,
            ..ReconstructionOptions::default()
        };
        let (reconstruction, reconstruction_error) = lift(reconstruction_audit(d, Some(&pred), &ropts));
        if reconstruction.is_some() {
            seeds.push(SeedEntry {
                purpose: "reconstruction_folds".into(),
                seed: global.seed,
            });
        }
        IndividualBlock {
            lipschitz,
            lipschitz_error,
            reconstruction,
            reconstruction_error,
        }
    });
    if let (Some(path), Some(lip)) = (&args.pairs_output, individual.as_ref().and_then(|i| i.lipschitz.as_ref())) {
        lip.write_pairs_csv(std::fs::File::create(path)?)?;
    }

    Ok(FairnessReport {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::current(),
        dataset: DatasetInfo::new(input),
        policy,
        epsilon: global.epsilon,
        metrics,
        disparate_impact: disparate,
        independence: independence(d, &pred),
        individual,
        seeds,
    })
}

pub fn run(global: &GlobalArgs, args: &AuditArgs) -> Result<()> {
    let input = Input::load(&args.data, global)?;
    let report = build_report(global, args, &input)?;
    let markdown = render_markdown(&report);
    match &args.output {
        Some(path) => {
            write_json(path, &report)?;
            std::fs::write(path.with_extension("md"), &markdown)?;
        }
        None => match global.format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            Format::Md => print!("{markdown}"),
        },
    }
    Ok(())
}

/// Percentage with one decimal, `-` when undefined.
pub fn pct(v: Option<f64>) -> String {
    v.filter(|v| v.is_finite())
        .map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn points(v: Option<f64>) -> String {
    v.filter(|v| v.is_finite())
        .map_or_else(|| "-".into(), |v| format!("{:.1}", 100.0 * v))
}

fn signed_pct(v: Option<f64>) -> String {
    v.filter(|v| v.is_finite())
        .map_or_else(|| "-".into(), |v| format!("{:+.1}%", 100.0 * v))
}

fn num(v: Option<f64>) -> String {
    v.filter(|v| v.is_finite()).map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn pass_mark(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    }
}

/// Markdown rows for one metric entry: the per-group row when the metric
/// has per-group values, then one row per component.
pub fn metric_rows(e: &MetricEntry) -> Vec<String> {
    let label = e.metric.label();
    let formula = cell(e.metric.formula());
    let Some(r) = &e.result else {
        let why = e.error.as_deref().unwrap_or("not computed");
        return vec![format!("| {label} | {formula} | - | - | - | - | {} |", cell(why))];
    };
    let mut rows = Vec::new();
    if r.parts.is_empty() || r.values.iter().any(Option::is_some) {
        rows.push(format!(
            "| {label} | {formula} | {} | {} | {} | {} | {} |",
            pct(r.values[0]),
            pct(r.values[1]),
            points(r.diff),
            signed_pct(r.relative),
            pass_mark(r.pass)
        ));
    } else {
        rows.push(format!(
            "| {label} | {formula} | | | {} | | {} |",
            points(r.gap),
            pass_mark(r.pass)
        ));
    }
    for p in &r.parts {
        let diff = match p.values {
            [Some(a), Some(b)] => Some(b - a),
            _ => p.gap,
        };
        rows.push(format!(
            "| {label}: {} | | {} | {} | {} | | |",
            cell(&p.label),
            pct(p.values[0]),
            pct(p.values[1]),
            points(diff)
        ));
    }
    rows
}

fn policy_line(p: &PolicySource) -> String {
    match p {
        PolicySource::PredictionColumn { column } => format!("decisions from column `{column}`"),
        PolicySource::Thresholds { policy } => {
            let rules: Vec<String> = Group::BOTH
                .iter()
                .map(|&g| match policy.rule(g) {
                    Some(r) => format!("s={g}: {}", serde_json::to_string(r).unwrap_or_default()),
                    None => format!("s={g}: none"),
                })
                .collect();
            format!("thresholds ({})", rules.join("; "))
        }
    }
}

pub fn render_markdown(r: &FairnessReport) -> String {
    let mut md = String::new();
    let ds = &r.dataset;
    let _ = writeln!(md, "# Fairness audit\n");
    let _ = writeln!(md, "- data: `{}` ({} records, sha256 `{}`)", ds.file, ds.records, ds.sha256);
    let _ = writeln!(
        md,
        "- groups: s=0 {} records, s=1 {} records; base rates {} / {}",
        ds.group_sizes[0],
        ds.group_sizes[1],
        pct(ds.base_rates[0]),
        pct(ds.base_rates[1])
    );
    let _ = writeln!(md, "- policy: {}", policy_line(&r.policy));
    let _ = writeln!(md, "- epsilon: {}", r.epsilon);
    let _ = writeln!(md, "- {} {}\n", r.tool.name, r.tool.version);

    let _ = writeln!(md, "## Group metrics\n");
    let _ = writeln!(md, "| Name | Probabilistic formula | s=0 | s=1 | diff | (%) | pass |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|---|");
    for e in &r.metrics {
        for row in metric_rows(e) {
            let _ = writeln!(md, "{row}");
        }
    }

    if let Some(di) = &r.disparate_impact {
        let x = &di.result;
        let _ = writeln!(md, "\n## Disparate impact\n");
        let _ = writeln!(
            md,
            "- positive rates: {} / {}",
            pct(Some(x.positive_rates[0])),
            pct(Some(x.positive_rates[1]))
        );
        let _ = writeln!(
            md,
            "- ratio: {} (threshold {}, {})",
            num(Some(x.ratio)),
            x.threshold,
            if x.flagged { "flagged" } else { "not flagged" }
        );
        let _ = writeln!(md, "- statistical parity difference: {}", num(Some(x.spd)));
        let _ = writeln!(md, "- normalized difference: {}", num(x.nspd));
        let _ = writeln!(md, "- equal opportunity difference: {}", num(x.eod));
        let _ = writeln!(md, "- t̂ = P[Ŷ=1|S=0]/P[Ŷ=1|S=1]: {}", num(di.estimate));
        if let Some(ci) = &di.interval {
            let _ = writeln!(
                md,
                "- {:.0}% interval ({:?}, {} replicates, seed {}): [{}, {}]",
                100.0 * ci.level,
                ci.method,
                ci.replicates,
                ci.seed,
                num(Some(ci.lower)),
                num(Some(ci.upper))
            );
        }
        if let Some(e) = &di.interval_error {
            let _ = writeln!(md, "- interval unavailable: {e}");
        }
    }

    let _ = writeln!(md, "\n## Dependence on s\n");
    let _ = writeln!(md, "| Quantity | Pearson | Maximal correlation | Mutual information |");
    let _ = writeln!(md, "|---|---:|---:|---:|");
    let mut dep_row = |name: &str, d: &Dependence| {
        let _ = writeln!(
            md,
            "| {name} | {} | {} | {} |",
            num(d.pearson),
            num(d.maximal_correlation.map(|m| m.value)),
            num(d.mutual_information)
        );
    };
    dep_row("decision", &r.independence.decision);
    if let Some(s) = &r.independence.score {
        dep_row("score", s);
    }

    if let Some(ind) = &r.individual {
        let _ = writeln!(md, "\n## Individual fairness\n");
        if let Some(l) = &ind.lipschitz {
            let _ = writeln!(
                md,
                "- Lipschitz ({:?}, L = {}): {} violations in {} pairs{} ({}), worst ratio {}",
                l.metric,
                l.scale,
                l.violations,
                l.pairs_examined,
                if l.exact { "" } else { " sampled" },
                pct(Some(l.violation_rate())),
                num(l.worst_ratio)
            );
        }
        if let Some(e) = &ind.lipschitz_error {
            let _ = writeln!(md, "- Lipschitz audit unavailable: {e}");
        }
        if let Some(rc) = &ind.reconstruction {
            let _ = writeln!(
                md,
                "- reconstruction of s: AUC {} over {} folds",
                num(Some(rc.auc)),
                rc.folds
            );
        }
        if let Some(e) = &ind.reconstruction_error {
            let _ = writeln!(md, "- reconstruction audit unavailable: {e}");
        }
    }

    if !r.seeds.is_empty() {
        let _ = writeln!(md, "\n## Seeds\n");
        for s in &r.seeds {
            let _ = writeln!(md, "- {}: {}", s.purpose, s.seed);
        }
    }
    md
}
