//! Group fairness metrics, disparate impact and its confidence intervals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, PredictionSet, Record};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::rocstats::{auc, confusion, rates, roc_curve, RocCurve};
use crate::stats::{ks_distance_weighted, normal_quantile, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    StatisticalParity,
    EqualOpportunity,
    PredictiveEquality,
    EqualizedOdds,
    ConditionalAccuracy,
    PredictiveParity,
    AccuracyEquality,
    TreatmentEquality,
    EqualizingDisincentives,
    PhiFairness,
    AucFairness,
    RocEquality,
    ClassBalanceWeak,
    ClassBalanceStrong,
    CalibrationParity,
    GoodCalibration,
    ConditionalDemographicParity,
}

impl MetricId {
    pub const ALL: [MetricId; 17] = [
        MetricId::StatisticalParity,
        MetricId::EqualOpportunity,
        MetricId::PredictiveEquality,
        MetricId::EqualizedOdds,
        MetricId::ConditionalAccuracy,
        MetricId::PredictiveParity,
        MetricId::AccuracyEquality,
        MetricId::TreatmentEquality,
        MetricId::EqualizingDisincentives,
        MetricId::PhiFairness,
        MetricId::AucFairness,
        MetricId::RocEquality,
        MetricId::ClassBalanceWeak,
        MetricId::ClassBalanceStrong,
        MetricId::CalibrationParity,
        MetricId::GoodCalibration,
        MetricId::ConditionalDemographicParity,
    ];

    /// The seven decision-based rows of the classic comparison table.
    pub const TABLE: [MetricId; 7] = [
        MetricId::StatisticalParity,
        MetricId::EqualOpportunity,
        MetricId::PredictiveEquality,
        MetricId::ConditionalAccuracy,
        MetricId::PredictiveParity,
        MetricId::AccuracyEquality,
        MetricId::TreatmentEquality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::StatisticalParity => "statistical_parity",
            MetricId::EqualOpportunity => "equal_opportunity",
            MetricId::PredictiveEquality => "predictive_equality",
            MetricId::EqualizedOdds => "equalized_odds",
            MetricId::ConditionalAccuracy => "conditional_accuracy",
            MetricId::PredictiveParity => "predictive_parity",
            MetricId::AccuracyEquality => "accuracy_equality",
            MetricId::TreatmentEquality => "treatment_equality",
            MetricId::EqualizingDisincentives => "equalizing_disincentives",
            MetricId::PhiFairness => "phi_fairness",
            MetricId::AucFairness => "auc_fairness",
            MetricId::RocEquality => "roc_equality",
            MetricId::ClassBalanceWeak => "class_balance_weak",
            MetricId::ClassBalanceStrong => "class_balance_strong",
            MetricId::CalibrationParity => "calibration_parity",
            MetricId::GoodCalibration => "good_calibration",
            MetricId::ConditionalDemographicParity => "conditional_demographic_parity",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricId::StatisticalParity => "statistical parity",
            MetricId::EqualOpportunity => "equal opportunity",
            MetricId::PredictiveEquality => "predictive equality",
            MetricId::EqualizedOdds => "equalized odds",
            MetricId::ConditionalAccuracy => "conditional accuracy",
            MetricId::PredictiveParity => "predictive parity",
            MetricId::AccuracyEquality => "accuracy equality",
            MetricId::TreatmentEquality => "treatment equality",
            MetricId::EqualizingDisincentives => "equalizing disincentives",
            MetricId::PhiFairness => "phi fairness",
            MetricId::AucFairness => "AUC fairness",
            MetricId::RocEquality => "ROC equality",
            MetricId::ClassBalanceWeak => "class balance (weak)",
            MetricId::ClassBalanceStrong => "class balance (strong)",
            MetricId::CalibrationParity => "calibration parity",
            MetricId::GoodCalibration => "good calibration",
            MetricId::ConditionalDemographicParity => "conditional demographic parity",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            MetricId::StatisticalParity => "P[Ŷ=1|S=s]",
            MetricId::EqualOpportunity => "P[Ŷ=1|S=s,Y=1]",
            MetricId::PredictiveEquality => "P[Ŷ=1|S=s,Y=0]",
            MetricId::EqualizedOdds => "P[Ŷ=1|S=s,Y=y], y∈{0,1}",
            MetricId::ConditionalAccuracy => "P[Y=0|S=s,Ŷ=0]",
            MetricId::PredictiveParity => "P[Y=1|S=s,Ŷ=1]",
            MetricId::AccuracyEquality => "P[Ŷ=Y|S=s]",
            MetricId::TreatmentEquality => "FN_s/FP_s",
            MetricId::EqualizingDisincentives => "TPR_s−FPR_s",
            MetricId::PhiFairness => "φ_s",
            MetricId::AucFairness => "AUC_s",
            MetricId::RocEquality => "sup|Δ_TPR|, sup|Δ_FPR|",
            MetricId::ClassBalanceWeak => "E[m|Y=y,S=s]",
            MetricId::ClassBalanceStrong => "KS(m|Y=y,S=0; m|Y=y,S=1)",
            MetricId::CalibrationParity => "P[Y=1|m∈bin,S=s]",
            MetricId::GoodCalibration => "max|P[Y=1|m∈bin,S=s]−μ|",
            MetricId::ConditionalDemographicParity => "P[Ŷ=1|X_ℓ=x,S=s]",
        }
    }

    /// Whether the metric reads scores rather than decisions.
    pub fn needs_scores(self) -> bool {
        matches!(
            self,
            MetricId::AucFairness
                | MetricId::RocEquality
                | MetricId::ClassBalanceWeak
                | MetricId::ClassBalanceStrong
                | MetricId::CalibrationParity
                | MetricId::GoodCalibration
        )
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<MetricId> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// One labelled component of a composite metric (e.g. the TPR half of
/// equalized odds, or one stratum of conditional parity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPart {
    pub label: String,
    pub values: [Option<f64>; 2],
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: MetricId,
    /// Per-group values (group 0, group 1); `None` when undefined or when the
    /// metric is composite.
    pub values: [Option<f64>; 2],
    /// Signed difference `v1 - v0`.
    pub diff: Option<f64>,
    /// Absolute gap; for composite metrics the largest part gap.
    pub gap: Option<f64>,
    /// `(v1 - v0) / v0`.
    pub relative: Option<f64>,
    pub interval: Option<Interval>,
    pub epsilon: f64,
    pub pass: Option<bool>,
    pub parts: Vec<MetricPart>,
}

impl MetricResult {
    fn from_values(metric: MetricId, values: [Option<f64>; 2], epsilon: f64) -> MetricResult {
        let diff = match values {
            [Some(a), Some(b)] => Some(b - a),
            _ => None,
        };
        let relative = match values {
            [Some(a), Some(b)] if a != 0.0 => Some((b - a) / a),
            _ => None,
        };
        let gap = diff.map(f64::abs);
        MetricResult {
            metric,
            values,
            diff,
            gap,
            relative,
            interval: None,
            epsilon,
            pass: gap.map(|g| g <= epsilon),
            parts: Vec::new(),
        }
    }

    fn from_parts(metric: MetricId, parts: Vec<MetricPart>, epsilon: f64) -> MetricResult {
        let gap = if parts.is_empty() || parts.iter().any(|p| p.gap.is_none()) {
            None
        } else {
            parts.iter().filter_map(|p| p.gap).reduce(f64::max)
        };
        MetricResult {
            metric,
            values: [None, None],
            diff: None,
            gap,
            relative: None,
            interval: None,
            epsilon,
            pass: gap.map(|g| g <= epsilon),
            parts,
        }
    }
}

fn part(label: impl Into<String>, values: [Option<f64>; 2]) -> MetricPart {
    let gap = match values {
        [Some(a), Some(b)] => Some((b - a).abs()),
        _ => None,
    };
    MetricPart {
        label: label.into(),
        values,
        gap,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOptions {
    pub epsilon: f64,
    pub calibration_bins: usize,
}

impl Default for MetricOptions {
    fn default() -> MetricOptions {
        MetricOptions {
            epsilon: 0.05,
            calibration_bins: 10,
        }
    }
}

/// Weighted `Σ num / Σ den` over group `g`; `f` maps `(y, P[Ŷ=1])` to the
/// numerator and denominator contributions.
fn cond_prob(
    d: &Dataset,
    pred: &PredictionSet,
    g: Group,
    f: impl Fn(bool, f64) -> (f64, f64),
) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, &p) in d.records().iter().zip(pred.probs()) {
        if r.s == g {
            let (a, b) = f(r.y, p);
            num += r.weight * a;
            den += r.weight * b;
        }
    }
    (den > 0.0).then(|| num / den)
}

fn when(c: bool, v: f64) -> f64 {
    if c {
        v
    } else {
        0.0
    }
}

fn per_group(f: impl Fn(Group) -> Option<f64>) -> [Option<f64>; 2] {
    Group::BOTH.map(f)
}

pub fn positive_rates(d: &Dataset, pred: &PredictionSet) -> [Option<f64>; 2] {
    per_group(|g| cond_prob(d, pred, g, |_, p| (p, 1.0)))
}

fn tpr(d: &Dataset, pred: &PredictionSet, g: Group) -> Option<f64> {
    cond_prob(d, pred, g, |y, p| (when(y, p), when(y, 1.0)))
}

fn fpr(d: &Dataset, pred: &PredictionSet, g: Group) -> Option<f64> {
    cond_prob(d, pred, g, |y, p| (when(!y, p), when(!y, 1.0)))
}

pub fn group_metric(
    id: MetricId,
    d: &Dataset,
    pred: &PredictionSet,
    opts: &MetricOptions,
) -> Result<MetricResult> {
    pred.check_aligned(d)?;
    d.require_both_groups()?;
    let eps = opts.epsilon;
    let simple = |values| Ok(MetricResult::from_values(id, values, eps));
    match id {
        MetricId::StatisticalParity => simple(positive_rates(d, pred)),
        MetricId::EqualOpportunity => simple(per_group(|g| tpr(d, pred, g))),
        MetricId::PredictiveEquality => simple(per_group(|g| fpr(d, pred, g))),
        MetricId::EqualizedOdds => Ok(MetricResult::from_parts(
            id,
            vec![
                part("tpr", per_group(|g| tpr(d, pred, g))),
                part("fpr", per_group(|g| fpr(d, pred, g))),
            ],
            eps,
        )),
        MetricId::ConditionalAccuracy => simple(per_group(|g| {
            cond_prob(d, pred, g, |y, p| (when(!y, 1.0 - p), 1.0 - p))
        })),
        MetricId::PredictiveParity => simple(per_group(|g| cond_prob(d, pred, g, |y, p| (when(y, p), p)))),
        MetricId::AccuracyEquality => simple(per_group(|g| {
            cond_prob(d, pred, g, |y, p| (if y { p } else { 1.0 - p }, 1.0))
        })),
        MetricId::TreatmentEquality => simple(per_group(|g| {
            cond_prob(d, pred, g, |y, p| (when(y, 1.0 - p), when(!y, p)))
        })),
        MetricId::EqualizingDisincentives => simple(per_group(|g| Some(tpr(d, pred, g)? - fpr(d, pred, g)?))),
        MetricId::PhiFairness => {
            let mut values = [None, None];
            for g in Group::BOTH {
                values[g.index()] = rates(&confusion(d, pred, Some(g))?).phi;
            }
            simple(values)
        }
        MetricId::AucFairness => {
            let mut values = [None, None];
            for g in Group::BOTH {
                values[g.index()] = match roc_curve(d, Some(g)) {
                    Ok(r) => Some(auc(&r)),
                    Err(Error::SingleClass(_)) => None,
                    Err(e) => return Err(e),
                };
            }
            simple(values)
        }
        MetricId::RocEquality => {
            let r = roc_equality(d)?;
            let mut res = MetricResult::from_parts(
                id,
                vec![part("tpr", [None, None]), part("fpr", [None, None])],
                eps,
            );
            res.parts[0].gap = Some(r.tpr_gap);
            res.parts[1].gap = Some(r.fpr_gap);
            res.gap = Some(r.tpr_gap.max(r.fpr_gap));
            res.pass = res.gap.map(|g| g <= eps);
            Ok(res)
        }
        MetricId::ClassBalanceWeak => class_balance(d, BalanceMode::Weak, eps),
        MetricId::ClassBalanceStrong => class_balance(d, BalanceMode::Strong, eps),
        MetricId::CalibrationParity => {
            let cal = calibration(d, opts.calibration_bins)?;
            let parts = cal
                .bins
                .iter()
                .map(|b| part(format!("({:.4}, {:.4}]", b.lower, b.upper), b.observed))
                .collect();
            let mut res = MetricResult::from_parts(id, parts, eps);
            res.gap = cal.parity_gap;
            res.pass = res.gap.map(|g| g <= eps);
            Ok(res)
        }
        MetricId::GoodCalibration => {
            let cal = calibration(d, opts.calibration_bins)?;
            let mut res = MetricResult::from_values(id, cal.group_deviation, eps);
            res.diff = None;
            res.relative = None;
            res.gap = Some(cal.good_calibration_deviation);
            res.pass = Some(cal.good_calibration_deviation <= eps);
            Ok(res)
        }
        MetricId::ConditionalDemographicParity => {
            let c = conditional_dp(d, pred, d.legitimate(), eps)?;
            let parts = c
                .strata
                .iter()
                .map(|s| part(s.key.clone(), s.result.values))
                .collect();
            let mut res = MetricResult::from_parts(id, parts, eps);
            // Strata with a single group are undefined; the summary is the
            // largest gap among the others.
            res.gap = c.max_gap;
            res.pass = res.gap.map(|g| g <= eps);
            Ok(res)
        }
    }
}

pub fn group_metrics(
    ids: &[MetricId],
    d: &Dataset,
    pred: &PredictionSet,
    opts: &MetricOptions,
) -> Result<Vec<MetricResult>> {
    ids.iter().map(|&id| group_metric(id, d, pred, opts)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparateImpactResult {
    pub positive_rates: [f64; 2],
    /// `min(p0/p1, p1/p0)`; 0 when either group has no positives.
    pub ratio: f64,
    pub threshold: f64,
    pub flagged: bool,
    pub spd: f64,
    pub nspd: Option<f64>,
    /// `TPR_1 - TPR_0`.
    pub eod: Option<f64>,
    pub epsilon: f64,
    pub epsilon_fair: bool,
}

pub fn disparate_impact(
    d: &Dataset,
    pred: &PredictionSet,
    threshold: f64,
    epsilon: f64,
) -> Result<DisparateImpactResult> {
    pred.check_aligned(d)?;
    d.require_both_groups()?;
    let [p0, p1] = positive_rates(d, pred).map(|p| p.unwrap_or(0.0));
    let ratio = if p0 > 0.0 && p1 > 0.0 { (p0 / p1).min(p1 / p0) } else { 0.0 };
    let spd = (p0 - p1).abs();
    let total: f64 = d.weights().iter().sum();
    let accepted: f64 = d.records().iter().zip(pred.probs()).map(|(r, p)| r.weight * p).sum();
    let share = Group::BOTH.map(|g| d.group_weight(g) / total);
    let d_max = (accepted / total / share[1]).min((1.0 - accepted / total) / share[0]);
    let eod = match (tpr(d, pred, Group::Zero), tpr(d, pred, Group::One)) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    Ok(DisparateImpactResult {
        positive_rates: [p0, p1],
        ratio,
        threshold,
        flagged: ratio < threshold,
        spd,
        nspd: (d_max > 0.0).then(|| spd / d_max),
        eod,
        epsilon,
        epsilon_fair: spd < epsilon,
    })
}

/// `t̂ = (Σ ŷ 1[s=0] / Σ ŷ 1[s=1]) · (n1 / n0)`, weighted.
pub fn impact_estimate(d: &Dataset, pred: &PredictionSet) -> Result<f64> {
    pred.check_aligned(d)?;
    d.require_both_groups()?;
    let mut acc = [0.0; 2];
    for (r, &p) in d.records().iter().zip(pred.probs()) {
        acc[r.s.index()] += r.weight * p;
    }
    Ok(acc[0] / acc[1] * (d.group_weight(Group::One) / d.group_weight(Group::Zero)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Bootstrap,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    pub replicates: usize,
    pub seed: u64,
    /// Total resamples redrawn because a group vanished or had no positives.
    pub redraws: usize,
}

const MAX_REDRAWS: usize = 100;

fn ratio_of(records: &[Record], probs: &[f64], idx: &[usize]) -> Option<f64> {
    let mut acc = [0.0; 2];
    let mut size = [0.0; 2];
    for &i in idx {
        let g = records[i].s.index();
        acc[g] += records[i].weight * probs[i];
        size[g] += records[i].weight;
    }
    (size[0] > 0.0 && size[1] > 0.0 && acc[1] > 0.0).then(|| acc[0] / acc[1] * (size[1] / size[0]))
}

/// Interval for `T = P[Ŷ=1|S=0] / P[Ŷ=1|S=1]`. Bootstrap replicates resample
/// records with replacement, each from its own derived stream; resamples
/// where a group vanishes or group 1 has no positives are redrawn. The
/// asymptotic interval applies the delta method to `log t̂`.
pub fn impact_ci(
    d: &Dataset,
    pred: &PredictionSet,
    method: CiMethod,
    level: f64,
    replicates: usize,
    seed: u64,
) -> Result<ImpactInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} outside (0, 1)")));
    }
    let estimate = impact_estimate(d, pred)?;
    let alpha = 1.0 - level;
    match method {
        CiMethod::Asymptotic => {
            let mut var_log = 0.0;
            for g in Group::BOTH {
                let ws: Vec<f64> = d.records().iter().filter(|r| r.s == g).map(|r| r.weight).collect();
                let n_eff = ws.iter().sum::<f64>().powi(2) / ws.iter().map(|w| w * w).sum::<f64>();
                let p = cond_prob(d, pred, g, |_, p| (p, 1.0)).unwrap_or(0.0);
                if p <= 0.0 {
                    return Err(Error::degenerate(format!("group {g} has no positive decisions")));
                }
                var_log += (1.0 - p) / (n_eff * p);
            }
            let z = normal_quantile(1.0 - alpha / 2.0);
            let half = z * var_log.sqrt();
            Ok(ImpactInterval {
                estimate,
                lower: estimate * (-half).exp(),
                upper: estimate * half.exp(),
                level,
                method,
                replicates: 0,
                seed,
                redraws: 0,
            })
        }
        CiMethod::Bootstrap => {
            if replicates < 100 {
                return Err(Error::invalid("bootstrap needs at least 100 replicates"));
            }
            let records = d.records();
            let probs = pred.probs();
            let n = records.len();
            let draws: Vec<Result<(f64, usize)>> = (0..replicates as u64)
                .into_par_iter()
                .map(|b| {
                    let mut rng = SplitMix64::new(derive_seed(seed, b));
                    let mut idx = vec![0usize; n];
                    for redraws in 0..=MAX_REDRAWS {
                        for slot in idx.iter_mut() {
                            *slot = rng.below(n as u64) as usize;
                        }
                        if let Some(t) = ratio_of(records, probs, &idx) {
                            return Ok((t, redraws));
                        }
                    }
                    Err(Error::degenerate(format!(
                        "bootstrap replicate {b} kept losing a group after {MAX_REDRAWS} redraws"
                    )))
                })
                .collect();
            let mut stats = Vec::with_capacity(replicates);
            let mut redraws = 0;
            for r in draws {
                let (t, k) = r?;
                stats.push(t);
                redraws += k;
            }
            stats.sort_by(|a, b| a.total_cmp(b));
            Ok(ImpactInterval {
                estimate,
                lower: quantile_sorted(&stats, alpha / 2.0),
                upper: quantile_sorted(&stats, 1.0 - alpha / 2.0),
                level,
                method,
                replicates,
                seed,
                redraws,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocEqualityResult {
    pub tpr_gap: f64,
    pub fpr_gap: f64,
}

fn class_scores(d: &Dataset, scores: &[f64], g: Group, y: bool) -> Vec<(f64, f64)> {
    d.records()
        .iter()
        .zip(scores)
        .filter(|(r, _)| r.s == g && r.y == y)
        .map(|(r, &m)| (m, r.weight))
        .collect()
}

/// `sup_t |TPR_1(t) − TPR_0(t)|` and the same for FPR, over every threshold
/// of the merged score grid — i.e. `‖TPR_1∘TPR_0⁻¹ − id‖∞` read off on the
/// quantile levels of group 0.
pub fn roc_equality(d: &Dataset) -> Result<RocEqualityResult> {
    d.require_both_groups()?;
    let scores = d.scores()?;
    let mut cells = Vec::new();
    for y in [true, false] {
        let pair = Group::BOTH.map(|g| class_scores(d, &scores, g, y));
        for g in Group::BOTH {
            if pair[g.index()].is_empty() {
                return Err(Error::SingleClass(format!(" in group {g}")));
            }
        }
        cells.push(ks_distance_weighted(&pair[0], &pair[1]));
    }
    Ok(RocEqualityResult {
        tpr_gap: cells[0],
        fpr_gap: cells[1],
    })
}

fn range_at(r: &RocCurve, x: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..r.points.len() {
        if r.fpr(i) == x {
            lo = lo.min(r.tpr(i));
            hi = hi.max(r.tpr(i));
        }
    }
    if lo > hi {
        let v = r.value_at(x);
        (v, v)
    } else {
        (lo, hi)
    }
}

/// Sup distance between the two groups' ROC curves as functions of FPR,
/// comparing both ends of vertical runs. Unlike [`roc_equality`] it only
/// depends on within-group ranks.
pub fn roc_shape_gap(d: &Dataset) -> Result<f64> {
    let c0 = roc_curve(d, Some(Group::Zero))?;
    let c1 = roc_curve(d, Some(Group::One))?;
    let mut xs: Vec<f64> = (0..c0.points.len())
        .map(|i| c0.fpr(i))
        .chain((0..c1.points.len()).map(|i| c1.fpr(i)))
        .collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    Ok(xs
        .into_iter()
        .map(|x| {
            let (a0, b0) = range_at(&c0, x);
            let (a1, b1) = range_at(&c1, x);
            (a0 - a1).abs().max((b0 - b1).abs())
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    Weak,
    Strong,
}

/// Per outcome class, the gap between group score distributions: difference
/// of means (weak) or KS distance (strong). Parts are labelled `y=0`, `y=1`.
pub fn class_balance(d: &Dataset, mode: BalanceMode, epsilon: f64) -> Result<MetricResult> {
    d.require_both_groups()?;
    let scores = d.scores()?;
    let mut parts = Vec::new();
    for y in [false, true] {
        let cells = Group::BOTH.map(|g| class_scores(d, &scores, g, y));
        let label = format!("y={}", u8::from(y));
        let defined = cells.iter().all(|c| !c.is_empty());
        match mode {
            BalanceMode::Weak => {
                let means = cells.clone().map(|c| {
                    let w: f64 = c.iter().map(|p| p.1).sum();
                    (w > 0.0).then(|| c.iter().map(|p| p.0 * p.1).sum::<f64>() / w)
                });
                parts.push(part(label, means));
            }
            BalanceMode::Strong => parts.push(MetricPart {
                label,
                values: [None, None],
                gap: defined.then(|| ks_distance_weighted(&cells[0], &cells[1])),
            }),
        }
    }
    let id = match mode {
        BalanceMode::Weak => MetricId::ClassBalanceWeak,
        BalanceMode::Strong => MetricId::ClassBalanceStrong,
    };
    // An undefined class makes the composite undefined only if no class is
    // measurable.
    let mut res = MetricResult::from_parts(id, parts, epsilon);
    res.gap = res.parts.iter().filter_map(|p| p.gap).reduce(f64::max);
    res.pass = res.gap.map(|g| g <= epsilon);
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub weight: [f64; 2],
    pub mean_score: [Option<f64>; 2],
    pub observed: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    /// Largest inter-group difference of observed positive rates over bins
    /// holding both groups.
    pub parity_gap: Option<f64>,
    /// Largest `|observed − mean score|` over populated (group, bin) cells.
    pub good_calibration_deviation: f64,
    /// Per-group version of the deviation.
    pub group_deviation: [Option<f64>; 2],
    pub warnings: Vec<String>,
}

/// Reliability table on quantile bins of the pooled scores. Bins are
/// `(lower, upper]`, the first one closed on the left; coinciding edges are
/// merged.
pub fn calibration(d: &Dataset, bins: usize) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(Error::invalid("calibration needs at least one bin"));
    }
    let scores = d.scores()?;
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut edges: Vec<f64> = (0..=bins)
        .map(|k| quantile_sorted(&sorted, k as f64 / bins as f64))
        .collect();
    edges.dedup();
    let mut warnings = Vec::new();
    if edges.len() < bins + 1 {
        warnings.push(format!(
            "requested {bins} bins but only {} distinct edges; coinciding bins merged",
            edges.len().saturating_sub(1).max(1)
        ));
    }
    if edges.len() == 1 {
        edges.push(edges[0]);
    }
    let nb = edges.len() - 1;
    let mut w = vec![[0.0; 2]; nb];
    let mut wm = vec![[0.0; 2]; nb];
    let mut wy = vec![[0.0; 2]; nb];
    for (r, &m) in d.records().iter().zip(&scores) {
        // First edge e with m <= e, excluding the left end of the range.
        let k = edges[1..].partition_point(|&e| e < m).min(nb - 1);
        let g = r.s.index();
        w[k][g] += r.weight;
        wm[k][g] += r.weight * m;
        wy[k][g] += when(r.y, r.weight);
    }
    let mut out = Vec::with_capacity(nb);
    let mut parity_gap: Option<f64> = None;
    let mut deviation: f64 = 0.0;
    let mut group_dev: [Option<f64>; 2] = [None, None];
    for k in 0..nb {
        let mean_score = [0, 1].map(|g| (w[k][g] > 0.0).then(|| wm[k][g] / w[k][g]));
        let observed = [0, 1].map(|g| (w[k][g] > 0.0).then(|| wy[k][g] / w[k][g]));
        if let [Some(a), Some(b)] = observed {
            parity_gap = Some(parity_gap.map_or((a - b).abs(), |p| p.max((a - b).abs())));
        }
        for g in 0..2 {
            if let (Some(o), Some(m)) = (observed[g], mean_score[g]) {
                let dev = (o - m).abs();
                deviation = deviation.max(dev);
                group_dev[g] = Some(group_dev[g].map_or(dev, |v: f64| v.max(dev)));
            }
        }
        out.push(CalibrationBin {
            lower: edges[k],
            upper: edges[k + 1],
            weight: w[k],
            mean_score,
            observed,
        });
    }
    Ok(CalibrationReport {
        bins: out,
        parity_gap,
        good_calibration_deviation: deviation,
        group_deviation: group_dev,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    /// `col=value` pairs joined by `,`; `all` without legitimate columns.
    pub key: String,
    pub size: usize,
    pub result: MetricResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDpResult {
    pub strata: Vec<Stratum>,
    pub max_gap: Option<f64>,
}

/// Statistical parity within each stratum of the legitimate columns.
pub fn conditional_dp(
    d: &Dataset,
    pred: &PredictionSet,
    legit: &[String],
    epsilon: f64,
) -> Result<ConditionalDpResult> {
    pred.check_aligned(d)?;
    let cols = legit
        .iter()
        .map(|c| d.feature_index(c).ok_or_else(|| Error::MissingColumn(c.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in d.records().iter().enumerate() {
        let key = if cols.is_empty() {
            "all".to_string()
        } else {
            cols.iter()
                .zip(legit)
                .map(|(&j, name)| format!("{name}={}", r.features[j]))
                .collect::<Vec<_>>()
                .join(",")
        };
        groups.entry(key).or_default().push(i);
    }
    let mut strata = Vec::with_capacity(groups.len());
    for (key, idx) in groups {
        let sub = d.subset(&idx)?;
        let sub_pred = PredictionSet::new(idx.iter().map(|&i| pred.probs()[i]).collect())?;
        let values = positive_rates(&sub, &sub_pred);
        strata.push(Stratum {
            key,
            size: idx.len(),
            result: MetricResult::from_values(MetricId::StatisticalParity, values, epsilon),
        });
    }
    let max_gap = strata.iter().filter_map(|s| s.result.gap).reduce(f64::max);
    Ok(ConditionalDpResult { strata, max_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_policy, ThresholdPolicy};
    use crate::fixtures;
    use crate::rng::SplitMix64;
    use crate::stats::ks_distance;
    use proptest::prelude::*;

    fn toy() -> (Dataset, PredictionSet) {
        let d = fixtures::toy();
        let p = apply_policy(&d, &ThresholdPolicy::shared(fixtures::TOY_SHARED_THRESHOLD)).unwrap();
        (d, p)
    }

    fn pct(v: Option<f64>) -> String {
        v.map_or("-".into(), |v| format!("{:.1}", 100.0 * v))
    }

    #[test]
    fn toy_table_rows() {
        let (d, p) = toy();
        let o = MetricOptions::default();
        let rows: Vec<(MetricId, &str, &str, &str, &str)> = vec![
            (MetricId::StatisticalParity, "25.0", "75.0", "50.0", "200.0"),
            (MetricId::EqualOpportunity, "40.0", "88.9", "48.9", "122.2"),
            (MetricId::PredictiveEquality, "0.0", "57.1", "57.1", "-"),
            (MetricId::ConditionalAccuracy, "50.0", "75.0", "25.0", "50.0"),
            (MetricId::PredictiveParity, "100.0", "66.7", "-33.3", "-33.3"),
            (MetricId::AccuracyEquality, "62.5", "68.8", "6.2", "10.0"),
            (MetricId::TreatmentEquality, "-", "25.0", "-", "-"),
        ];
        for (id, v0, v1, diff, rel) in rows {
            let r = group_metric(id, &d, &p, &o).unwrap();
            assert_eq!(pct(r.values[0]), v0, "{id}");
            assert_eq!(pct(r.values[1]), v1, "{id}");
            assert_eq!(pct(r.diff), diff, "{id}");
            assert_eq!(pct(r.relative), rel, "{id}");
        }
    }

    #[test]
    fn confusion_figure_passes_and_fails() {
        let d = fixtures::confusion_figure();
        let p = apply_policy(&d, &ThresholdPolicy::shared(fixtures::CONFUSION_THRESHOLD)).unwrap();
        let o = MetricOptions {
            epsilon: 0.0,
            ..Default::default()
        };
        for id in [MetricId::StatisticalParity, MetricId::EqualizedOdds, MetricId::AccuracyEquality] {
            assert_eq!(group_metric(id, &d, &p, &o).unwrap().pass, Some(true), "{id}");
        }
        let pp = group_metric(MetricId::PredictiveParity, &d, &p, &o).unwrap();
        assert_eq!(pp.values, [Some(0.4), Some(0.6)]);
        assert_eq!(pp.pass, Some(false));
        let te = group_metric(MetricId::TreatmentEquality, &d, &p, &o).unwrap();
        assert!((te.values[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(te.values[1], Some(1.5));
        let phi = group_metric(MetricId::PhiFairness, &d, &p, &o).unwrap();
        assert_eq!(phi.values, [Some(0.0), Some(0.0)]);
    }

    #[test]
    fn toy_disparate_impact() {
        let (d, p) = toy();
        let di = disparate_impact(&d, &p, 0.8, 0.05).unwrap();
        assert_eq!(di.ratio, 1.0 / 3.0);
        assert!(di.flagged);
        assert_eq!(di.spd, 0.5);
        assert!((di.nspd.unwrap() - 0.5 / 0.875).abs() < 1e-12);
        assert_eq!(impact_estimate(&d, &p).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn equal_rates_not_flagged() {
        let d = fixtures::confusion_figure();
        let p = apply_policy(&d, &ThresholdPolicy::shared(0.5)).unwrap();
        let di = disparate_impact(&d, &p, 0.8, 0.05).unwrap();
        assert_eq!((di.ratio, di.spd, di.flagged), (1.0, 0.0, false));
    }

    #[test]
    fn roc_equality_cases() {
        let s = [0, 0, 0, 0, 1, 1, 1, 1];
        let y = [0, 1, 0, 1, 0, 1, 0, 1];
        let m = [0.1, 0.4, 0.3, 0.8, 0.1, 0.4, 0.3, 0.8];
        let same = Dataset::from_scores(&s, &y, &m).unwrap();
        let r = roc_equality(&same).unwrap();
        assert_eq!((r.tpr_gap, r.fpr_gap), (0.0, 0.0));

        // Group 1 scores are a strictly increasing transform of group 0's.
        let m2: Vec<f64> = m.iter().enumerate().map(|(i, &v)| if i < 4 { v } else { v * v }).collect();
        let moved = Dataset::from_scores(&s, &y, &m2).unwrap();
        assert_eq!(roc_shape_gap(&moved).unwrap(), 0.0);
        assert!(roc_equality(&moved).unwrap().tpr_gap > 0.0);

        let t = roc_equality(&fixtures::toy()).unwrap();
        // Group 0 positives sit at ranks {3,5,6,11,12}, group 1 positives at
        // {9,16..19,21..24}; negatives {1,2,4} vs {7,8,10,13,14,15,20}.
        assert!((t.tpr_gap - 8.0 / 9.0).abs() < 1e-12, "{}", t.tpr_gap);
        assert!((t.fpr_gap - 1.0).abs() < 1e-12, "{}", t.fpr_gap);
    }

    #[test]
    fn toy_class_balance() {
        let d = fixtures::toy();
        let r = class_balance(&d, BalanceMode::Weak, 0.05).unwrap();
        let y1 = &r.parts[1];
        assert!((y1.values[0].unwrap() - 37.0 / 120.0).abs() < 1e-12);
        assert!((y1.values[1].unwrap() - 169.0 / 216.0).abs() < 1e-12);
        assert!((y1.gap.unwrap() - 0.474).abs() < 1e-3);
    }

    #[test]
    fn class_balance_extremes() {
        let d = Dataset::from_scores(&[0, 0, 1, 1], &[0, 1, 0, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap();
        let r = class_balance(&d, BalanceMode::Strong, 0.05).unwrap();
        assert_eq!(r.gap, Some(1.0));
        let id = Dataset::from_scores(&[0, 0, 1, 1], &[0, 1, 0, 1], &[0.1, 0.9, 0.1, 0.9]).unwrap();
        assert_eq!(class_balance(&id, BalanceMode::Weak, 0.05).unwrap().gap, Some(0.0));
        assert_eq!(class_balance(&id, BalanceMode::Strong, 0.05).unwrap().gap, Some(0.0));
    }

    #[test]
    fn calibration_constant_calibrated_score() {
        // Both groups have base rate 1/2 and score 1/2.
        let d = Dataset::from_scores(&[0, 0, 1, 1], &[0, 1, 0, 1], &[0.5; 4]).unwrap();
        let cal = calibration(&d, 1).unwrap();
        assert_eq!(cal.good_calibration_deviation, 0.0);
        let merged = calibration(&d, 10).unwrap();
        assert_eq!(merged.bins.len(), 1);
        assert_eq!(merged.warnings.len(), 1);
    }

    #[test]
    fn calibration_parity_on_calibrated_synthetic() {
        let mut rng = SplitMix64::new(3);
        let n = 100_000;
        let (mut s, mut y, mut m) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let score = rng.next_f64();
            s.push(rng.below(2) as u8);
            y.push(rng.bernoulli(score) as u8);
            m.push(score);
        }
        let d = Dataset::from_scores(&s, &y, &m).unwrap();
        let cal = calibration(&d, 10).unwrap();
        assert!(cal.parity_gap.unwrap() <= 0.03, "{:?}", cal.parity_gap);
    }

    #[test]
    fn calibration_detects_shift() {
        let mut rng = SplitMix64::new(4);
        let (mut s, mut y, mut m) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..20_000 {
            let g = rng.below(2) as u8;
            let base = 0.1 + 0.7 * rng.next_f64();
            s.push(g);
            y.push(rng.bernoulli(base) as u8);
            m.push(if g == 0 { base + 0.2 } else { base });
        }
        let d = Dataset::from_scores(&s, &y, &m).unwrap();
        let cal = calibration(&d, 10).unwrap();
        let interior = &cal.bins[3..7];
        assert!(interior.iter().any(|b| match b.observed {
            [Some(a), Some(c)] => (a - c).abs() > 0.1,
            _ => false,
        }));
    }

    #[test]
    fn conditional_dp_cases() {
        let (d, p) = toy();
        let c = conditional_dp(&d, &p, &[], 0.05).unwrap();
        assert_eq!(c.strata.len(), 1);
        assert_eq!(c.max_gap, Some(0.5));

        // Stratum x equals s: every stratum holds a single group.
        let mk = |s: u8, x: f64, yhat: bool| {
            Record::new(Group::try_from(s).unwrap(), yhat, Some(if yhat { 0.9 } else { 0.1 })).with_features(vec![x])
        };
        let recs = vec![mk(0, 0.0, true), mk(0, 0.0, false), mk(1, 1.0, true), mk(1, 1.0, false)];
        let aligned = Dataset::new(recs, vec!["x".into()]).unwrap();
        let pa = apply_policy(&aligned, &ThresholdPolicy::shared(0.5)).unwrap();
        let c = conditional_dp(&aligned, &pa, &["x".into()], 0.05).unwrap();
        assert!(c.strata.iter().all(|s| s.result.gap.is_none()));
        assert_eq!(c.max_gap, None);

        // Simpson: stratum a accepts 3/4 in both groups, stratum b 1/4; group
        // 0 lives mostly in a, group 1 mostly in b.
        let mut recs = Vec::new();
        let mut push = |s: u8, x: f64, acc: usize, tot: usize| {
            for k in 0..tot {
                recs.push(mk(s, x, k < acc));
            }
        };
        push(0, 0.0, 6, 8);
        push(1, 0.0, 3, 4);
        push(0, 1.0, 1, 4);
        push(1, 1.0, 2, 8);
        let simpson = Dataset::new(recs, vec!["x".into()]).unwrap();
        let ps = apply_policy(&simpson, &ThresholdPolicy::shared(0.5)).unwrap();
        let c = conditional_dp(&simpson, &ps, &["x".into()], 0.05).unwrap();
        assert_eq!(c.max_gap, Some(0.0));
        let global = group_metric(MetricId::StatisticalParity, &simpson, &ps, &MetricOptions::default()).unwrap();
        assert!(global.gap.unwrap() > 0.1);
    }

    #[test]
    fn bootstrap_brackets_estimate_and_is_deterministic() {
        let (d, p) = toy();
        let a = impact_ci(&d, &p, CiMethod::Bootstrap, 0.95, 500, 9).unwrap();
        let b = impact_ci(&d, &p, CiMethod::Bootstrap, 0.95, 500, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.lower < a.estimate && a.estimate < a.upper);
        let asy = impact_ci(&d, &p, CiMethod::Asymptotic, 0.95, 0, 0).unwrap();
        assert!(asy.lower < 1.0 / 3.0 && 1.0 / 3.0 < asy.upper);
    }

    #[test]
    fn metric_names_roundtrip() {
        for id in MetricId::ALL {
            assert_eq!(id.name().parse::<MetricId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.name()));
        }
        assert!("bogus".parse::<MetricId>().is_err());
    }

    #[test]
    fn ks_matches_strong_balance() {
        let d = fixtures::toy();
        let scores = d.scores().unwrap();
        let pick = |g: Group| -> Vec<f64> {
            d.records().iter().zip(&scores).filter(|(r, _)| r.s == g && r.y).map(|(_, &m)| m).collect()
        };
        let r = class_balance(&d, BalanceMode::Strong, 0.05).unwrap();
        assert_eq!(r.parts[1].gap.unwrap(), ks_distance(&pick(Group::Zero), &pick(Group::One)));
    }

    fn arb_dataset() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<f64>)> {
        prop::collection::vec((0u8..2, 0u8..2, 0u8..10), 4..40).prop_map(|v| {
            let s = v.iter().map(|t| t.0).collect();
            let y = v.iter().map(|t| t.1).collect();
            let m = v.iter().map(|t| t.2 as f64 / 9.0).collect();
            (s, y, m)
        })
    }

    proptest! {
        #[test]
        fn ppv_matches_rate_identity((s, y, m) in arb_dataset(), t in 0.0f64..1.0) {
            let d = Dataset::from_scores(&s, &y, &m).unwrap();
            prop_assume!(d.has_group(Group::Zero) && d.has_group(Group::One));
            let p = apply_policy(&d, &ThresholdPolicy::shared(t)).unwrap();
            let o = MetricOptions::default();
            let ppv = group_metric(MetricId::PredictiveParity, &d, &p, &o).unwrap();
            for g in Group::BOTH {
                let c = rates(&confusion(&d, &p, Some(g)).unwrap());
                let pi = d.base_rate(g).unwrap();
                if let (Some(tpr), Some(fpr), Some(v)) = (c.tpr, c.fpr, ppv.values[g.index()]) {
                    let identity = tpr * pi / (tpr * pi + fpr * (1.0 - pi));
                    prop_assert!((identity - v).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn metrics_invariant_under_permutation_and_duplication(
            (s, y, m) in arb_dataset(), t in 0.0f64..1.0, k in 2usize..4, seed in any::<u64>()
        ) {
            let d = Dataset::from_scores(&s, &y, &m).unwrap();
            prop_assume!(d.has_group(Group::Zero) && d.has_group(Group::One));
            let mut idx: Vec<usize> = (0..d.len()).collect();
            SplitMix64::new(seed).shuffle(&mut idx);
            let perm = d.subset(&idx).unwrap();
            let dup_idx: Vec<usize> = (0..d.len()).flat_map(|i| std::iter::repeat(i).take(k)).collect();
            let dup = d.subset(&dup_idx).unwrap();
            let o = MetricOptions::default();
            let policy = ThresholdPolicy::shared(t);
            for id in MetricId::TABLE {
                let base = group_metric(id, &d, &apply_policy(&d, &policy).unwrap(), &o).unwrap();
                for other in [&perm, &dup] {
                    let r = group_metric(id, other, &apply_policy(other, &policy).unwrap(), &o).unwrap();
                    for g in 0..2 {
                        match (base.values[g], r.values[g]) {
                            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                            (None, None) => {}
                            _ => prop_assert!(false, "definedness changed for {id}"),
                        }
                    }
                }
            }
        }

        #[test]
        fn unit_ratio_iff_zero_spd((s, y, m) in arb_dataset(), t in 0.0f64..1.0) {
            let d = Dataset::from_scores(&s, &y, &m).unwrap();
            prop_assume!(d.has_group(Group::Zero) && d.has_group(Group::One));
            let p = apply_policy(&d, &ThresholdPolicy::shared(t)).unwrap();
            let di = disparate_impact(&d, &p, 0.8, 0.05).unwrap();
            prop_assume!(di.positive_rates[0] > 0.0 && di.positive_rates[1] > 0.0);
            prop_assert_eq!(di.ratio == 1.0, di.spd == 0.0);
        }
    }
}
