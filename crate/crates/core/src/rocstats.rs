//! Confusion matrices, rates, ROC curves, AUC, convex envelopes and
//! threshold selection.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, PredictionSet, ThresholdRule, ACCEPT_ALL, REJECT_ALL};
use crate::error::{Error, Result};

/// Weighted confusion counts. Randomized decisions contribute fractionally.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl ConfusionMatrix {
    pub fn positives(&self) -> f64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> f64 {
        self.tn + self.fp
    }

    pub fn predicted_positive(&self) -> f64 {
        self.tp + self.fp
    }

    pub fn predicted_negative(&self) -> f64 {
        self.tn + self.fn_
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(d: &Dataset, pred: &PredictionSet, filter: Option<Group>) -> Result<ConfusionMatrix> {
    pred.check_aligned(d)?;
    let mut c = ConfusionMatrix::default();
    let mut seen = false;
    for (r, &p) in d.records().iter().zip(pred.probs()) {
        if filter.is_some_and(|g| g != r.s) {
            continue;
        }
        seen = true;
        let (pos, neg) = (r.weight * p, r.weight * (1.0 - p));
        if r.y {
            c.tp += pos;
            c.fn_ += neg;
        } else {
            c.fp += pos;
            c.tn += neg;
        }
    }
    match (seen, filter) {
        (false, Some(g)) => Err(Error::EmptyGroup(g)),
        _ => Ok(c),
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Rates derived from a confusion matrix; `None` where the denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub positive_rate: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub accuracy: Option<f64>,
    pub phi: Option<f64>,
}

pub fn rates(c: &ConfusionMatrix) -> RateSet {
    let phi_den = (c.predicted_positive() * c.positives() * c.negatives() * c.predicted_negative()).sqrt();
    RateSet {
        positive_rate: ratio(c.predicted_positive(), c.total()),
        tpr: ratio(c.tp, c.positives()),
        fpr: ratio(c.fp, c.negatives()),
        fnr: ratio(c.fn_, c.positives()),
        ppv: ratio(c.tp, c.predicted_positive()),
        npv: ratio(c.tn, c.predicted_negative()),
        accuracy: ratio(c.tp + c.tn, c.total()),
        phi: ratio(c.tp * c.tn - c.fp * c.fn_, phi_den),
    }
}

/// ROC vertex in weighted counts: `fp` negatives and `tp` positives score
/// strictly above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fp: f64,
    pub tp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From threshold `+inf` at (0, 0) down to `-inf` at (1, 1).
    pub points: Vec<RocPoint>,
    pub negatives: f64,
    pub positives: f64,
    pub envelope: bool,
}

impl RocCurve {
    pub fn fpr(&self, i: usize) -> f64 {
        self.points[i].fp / self.negatives
    }

    pub fn tpr(&self, i: usize) -> f64 {
        self.points[i].tp / self.positives
    }

    /// `(fpr, tpr, threshold)` triples.
    pub fn rates(&self) -> Vec<(f64, f64, f64)> {
        (0..self.points.len())
            .map(|i| (self.fpr(i), self.tpr(i), self.points[i].threshold))
            .collect()
    }

    /// Largest TPR reachable at `fpr` by interpolating along the curve.
    pub fn value_at(&self, fpr: f64) -> f64 {
        let x = fpr.clamp(0.0, 1.0);
        let mut best: f64 = 0.0;
        for i in 0..self.points.len() {
            let (xi, yi) = (self.fpr(i), self.tpr(i));
            if xi == x {
                best = best.max(yi);
            }
            if i + 1 < self.points.len() {
                let (xj, yj) = (self.fpr(i + 1), self.tpr(i + 1));
                if xi < x && x < xj {
                    best = best.max(yi + (yj - yi) * (x - xi) / (xj - xi));
                }
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fpr,tpr,threshold")?;
        for (x, y, t) in self.rates() {
            writeln!(w, "{x},{y},{t}")?;
        }
        Ok(())
    }
}

/// Maps ROC sentinel thresholds onto finite accept-all / reject-all values.
pub fn policy_threshold(t: f64) -> f64 {
    if t == f64::INFINITY {
        REJECT_ALL
    } else if t == f64::NEG_INFINITY {
        ACCEPT_ALL
    } else {
        t
    }
}

/// ROC curve of weighted `(score, label)` data. Thresholds sit at midpoints
/// between consecutive distinct scores, plus `±inf`.
pub fn roc_from_scores(scores: &[f64], labels: &[bool], weights: &[f64]) -> Result<RocCurve> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let positives: f64 = labels.iter().zip(weights).filter(|(y, _)| **y).map(|(_, w)| w).sum();
    let negatives: f64 = labels.iter().zip(weights).filter(|(y, _)| !**y).map(|(_, w)| w).sum();
    if positives <= 0.0 || negatives <= 0.0 {
        return Err(Error::SingleClass(String::new()));
    }
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fp: 0.0,
        tp: 0.0,
    }];
    let (mut fp, mut tp) = (0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let level = scores[order[k]];
        while k < order.len() && scores[order[k]] == level {
            let i = order[k];
            if labels[i] {
                tp += weights[i];
            } else {
                fp += weights[i];
            }
            k += 1;
        }
        let threshold = match order.get(k) {
            Some(&next) => (level + scores[next]) / 2.0,
            None => f64::NEG_INFINITY,
        };
        points.push(RocPoint { threshold, fp, tp });
    }
    // Pin the final vertex to the totals so the curve ends exactly at (1, 1).
    if let Some(last) = points.last_mut() {
        last.fp = negatives;
        last.tp = positives;
    }
    Ok(RocCurve {
        points,
        negatives,
        positives,
        envelope: false,
    })
}

pub fn roc_curve(d: &Dataset, filter: Option<Group>) -> Result<RocCurve> {
    let scores = d.scores()?;
    let (mut m, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (r, s) in d.records().iter().zip(scores) {
        if filter.map_or(true, |g| g == r.s) {
            m.push(s);
            y.push(r.y);
            w.push(r.weight);
        }
    }
    if let (Some(g), true) = (filter, m.is_empty()) {
        return Err(Error::EmptyGroup(g));
    }
    roc_from_scores(&m, &y, &w).map_err(|e| match (e, filter) {
        (Error::SingleClass(_), Some(g)) => Error::SingleClass(format!(" in group {g}")),
        (e, _) => e,
    })
}

/// Trapezoid area, accumulated on counts so integer-weighted data is exact
/// up to the final division.
pub fn auc(r: &RocCurve) -> f64 {
    let area2: f64 = r
        .points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) * (w[0].tp + w[1].tp))
        .sum();
    area2 / (2.0 * r.negatives * r.positives)
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn concordance(scores: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    let (mut num2, mut pos, mut neg) = (0.0, 0.0, 0.0);
    for i in 0..scores.len() {
        if labels[i] {
            pos += weights[i];
        } else {
            neg += weights[i];
        }
    }
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in (0..scores.len()).filter(|&j| !labels[j]) {
            let w = weights[i] * weights[j];
            if scores[i] > scores[j] {
                num2 += 2.0 * w;
            } else if scores[i] == scores[j] {
                num2 += w;
            }
        }
    }
    num2 / (2.0 * pos * neg)
}

fn cross(o: &RocPoint, a: &RocPoint, b: &RocPoint) -> f64 {
    (a.fp - o.fp) * (b.tp - o.tp) - (a.tp - o.tp) * (b.fp - o.fp)
}

fn hull(r: &RocCurve, upper: bool) -> RocCurve {
    let mut pts = r.points.clone();
    // Order by FPR; on the lower hull vertical runs are taken top-down.
    pts.sort_by(|a, b| {
        a.fp.total_cmp(&b.fp).then(if upper {
            a.tp.total_cmp(&b.tp)
        } else {
            b.tp.total_cmp(&a.tp)
        })
    });
    let mut out: Vec<RocPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while out.len() >= 2 {
            let c = cross(&out[out.len() - 2], &out[out.len() - 1], &p);
            if (upper && c >= 0.0) || (!upper && c <= 0.0) {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    RocCurve {
        points: out,
        negatives: r.negatives,
        positives: r.positives,
        envelope: true,
    }
}

/// Upper concave hull of the ROC vertices. Collinear interior vertices are
/// dropped.
pub fn convex_envelope(r: &RocCurve) -> RocCurve {
    hull(r, true)
}

/// Lower convex hull; with the upper envelope it bounds every operating
/// point reachable by mixing thresholds.
pub fn lower_envelope(r: &RocCurve) -> RocCurve {
    hull(r, false)
}

/// True when `(fpr, tpr)` lies in the convex hull of the curve's vertices.
pub fn in_hull(r: &RocCurve, fpr: f64, tpr: f64, tol: f64) -> bool {
    let up = convex_envelope(r);
    let lo = lower_envelope(r);
    let lower = lower_value_at(&lo, fpr);
    (-tol..=1.0 + tol).contains(&fpr) && tpr <= up.value_at(fpr) + tol && tpr >= lower - tol
}

fn lower_value_at(lo: &RocCurve, fpr: f64) -> f64 {
    let x = fpr.clamp(0.0, 1.0);
    let mut best: f64 = 1.0;
    for i in 0..lo.points.len() {
        let (xi, yi) = (lo.fpr(i), lo.tpr(i));
        if xi == x {
            best = best.min(yi);
        }
        if i + 1 < lo.points.len() {
            let (xj, yj) = (lo.fpr(i + 1), lo.tpr(i + 1));
            if xi < x && x < xj {
                best = best.min(yi + (yj - yi) * (x - xi) / (xj - xi));
            }
        }
    }
    best
}

/// Envelope segment between two adjacent vertices; interior points are
/// realized by mixing the two vertex thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullSegment {
    pub from: (f64, f64),
    pub to: (f64, f64),
    /// Threshold of the `to` vertex (more acceptances).
    pub low_threshold: f64,
    /// Threshold of the `from` vertex.
    pub high_threshold: f64,
}

impl HullSegment {
    /// Rule reaching the point a fraction `lambda` of the way from `from`
    /// to `to`.
    pub fn rule_at(&self, lambda: f64) -> ThresholdRule {
        let (low, high) = (policy_threshold(self.low_threshold), policy_threshold(self.high_threshold));
        if lambda <= 0.0 {
            ThresholdRule::deterministic(high)
        } else if lambda >= 1.0 {
            ThresholdRule::deterministic(low)
        } else {
            ThresholdRule::Randomized {
                low,
                high,
                p_low: lambda,
            }
        }
    }
}

pub fn segments(env: &RocCurve) -> Vec<HullSegment> {
    (0..env.points.len().saturating_sub(1))
        .map(|i| HullSegment {
            from: (env.fpr(i), env.tpr(i)),
            to: (env.fpr(i + 1), env.tpr(i + 1)),
            low_threshold: env.points[i + 1].threshold,
            high_threshold: env.points[i].threshold,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    /// Decision threshold, with sentinels mapped to finite values.
    pub threshold: f64,
    pub accuracy: f64,
    pub error: f64,
}

/// Maximizes `TPR·P + (1 − FPR)·N` over the curve vertices; ties go to the
/// larger threshold.
pub fn best_accuracy_threshold(r: &RocCurve, n_weight: f64, p_weight: f64) -> Result<ThresholdChoice> {
    if !(n_weight > 0.0 && p_weight > 0.0) {
        return Err(Error::invalid("class weights must be positive"));
    }
    let total = n_weight + p_weight;
    let eval = |pt: &RocPoint| {
        let acc = (pt.tp * p_weight / r.positives + (r.negatives - pt.fp) * n_weight / r.negatives) / total;
        let err = ((r.positives - pt.tp) * p_weight / r.positives + pt.fp * n_weight / r.negatives) / total;
        (acc, err)
    };
    let tol = 1e-12;
    let mut best: Option<(usize, f64, f64)> = None;
    // Vertices run from high to low thresholds, so keeping the first of
    // equal values honours the tie-break.
    for (i, pt) in r.points.iter().enumerate() {
        let (acc, err) = eval(pt);
        if best.map_or(true, |(_, a, _)| acc > a + tol) {
            best = Some((i, acc, err));
        }
    }
    let (i, accuracy, error) = best.expect("curve has vertices");
    Ok(ThresholdChoice {
        threshold: policy_threshold(r.points[i].threshold),
        accuracy,
        error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairThreshold {
    pub threshold: f64,
    /// `min(r, 1/r)` with `r = P[Ŷ=1|S=0] / P[Ŷ=1|S=1]`.
    pub dp_ratio: f64,
    pub accuracy: f64,
    pub error: f64,
}

/// Shared threshold maximizing the parity ratio. Only thresholds where each
/// group has both accepted and rejected members compete: accepting or
/// rejecting everyone is trivially "fair" and carries no information.
/// Ties go to higher accuracy, then to the larger threshold.
pub fn fairest_threshold(d: &Dataset) -> Result<FairThreshold> {
    d.require_both_groups()?;
    let scores = d.scores()?;
    let mut grid: Vec<f64> = scores.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let weights = Group::BOTH.map(|g| d.group_weight(g));
    let total = weights[0] + weights[1];
    let tol = 1e-12;
    let mut best: Option<FairThreshold> = None;
    for k in 0..grid.len().saturating_sub(1) {
        let t = (grid[k] + grid[k + 1]) / 2.0;
        let mut accepted = [0.0; 2];
        let mut wrong = 0.0;
        for (r, &m) in d.records().iter().zip(&scores) {
            let yhat = m > t;
            if yhat {
                accepted[r.s.index()] += r.weight;
            }
            if yhat != r.y {
                wrong += r.weight;
            }
        }
        let p0 = accepted[0] / weights[0];
        let p1 = accepted[1] / weights[1];
        if !(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0) {
            continue;
        }
        let dp_ratio = (p0 / p1).min(p1 / p0);
        let cand = FairThreshold {
            threshold: t,
            dp_ratio,
            accuracy: (total - wrong) / total,
            error: wrong / total,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                cand.dp_ratio > b.dp_ratio + tol
                    || ((cand.dp_ratio - b.dp_ratio).abs() <= tol && cand.accuracy > b.accuracy + tol)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::degenerate("no shared threshold yields both decisions in both groups"))
}

/// Minimal SVG with one polyline per curve on the unit square.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    const SIZE: f64 = 400.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SIZE
    );
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{s}" height="{s}" fill="none" stroke="#000"/>"##,
        s = SIZE
    );
    let _ = writeln!(
        svg,
        r##"<line x1="0" y1="{s}" x2="{s}" y2="0" stroke="#999" stroke-dasharray="4"/>"##,
        s = SIZE
    );
    for (k, (label, curve)) in curves.iter().enumerate() {
        let pts: Vec<String> = curve
            .rates()
            .iter()
            .map(|(x, y, _)| format!("{:.3},{:.3}", x * SIZE, (1.0 - y) * SIZE))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            COLORS[k % COLORS.len()],
            pts.join(" "),
            label
        );
    }
    svg.push_str("</svg>\n");
    svg
}
