//! Group-specific decision rules on top of a fixed score.

use serde::{Deserialize, Serialize};

use crate::data::{apply_policy, Dataset, Group, MixtureComponent, PredictionSet, ThresholdPolicy, ThresholdRule};
use crate::error::{Error, Result};
use crate::rocstats::{confusion, convex_envelope, lower_envelope, policy_threshold, rates, roc_curve, RocCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdObjective {
    /// Equal positive rates.
    Dp,
    /// Equal true-positive rates.
    EoTpr,
}

/// One deterministic cut of a group: accept everything scoring above
/// `threshold`.
#[derive(Debug, Clone, Copy)]
struct Cut {
    threshold: f64,
    rate: f64,
    /// Weight classified correctly.
    correct: f64,
}

#[derive(Debug, Clone)]
struct GroupCuts {
    cuts: Vec<Cut>,
    records: usize,
    positive_records: usize,
}

/// Cuts of one group from reject-all to accept-all, keeping for each
/// distinct rate only the most accurate (then highest) threshold.
fn group_cuts(d: &Dataset, scores: &[f64], g: Group, objective: ThresholdObjective) -> Result<GroupCuts> {
    let mut rows: Vec<(f64, bool, f64)> = d
        .records()
        .iter()
        .zip(scores)
        .filter(|(r, _)| r.s == g)
        .map(|(r, &m)| (m, r.y, r.weight))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyGroup(g));
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = rows.iter().map(|r| r.2).sum();
    let positives: f64 = rows.iter().filter(|r| r.1).map(|r| r.2).sum();
    let negatives = total - positives;
    let positive_records = rows.iter().filter(|r| r.1).count();
    if objective == ThresholdObjective::EoTpr && positives <= 0.0 {
        return Err(Error::SingleClass(format!(" in group {g}: no positives to equalize")));
    }
    let rate = |tp: f64, fp: f64| match objective {
        ThresholdObjective::Dp => (tp + fp) / total,
        ThresholdObjective::EoTpr => tp / positives,
    };
    let mut raw = vec![Cut {
        threshold: f64::INFINITY,
        rate: 0.0,
        correct: negatives,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = 0;
    while k < rows.len() {
        let level = rows[k].0;
        while k < rows.len() && rows[k].0 == level {
            if rows[k].1 {
                tp += rows[k].2;
            } else {
                fp += rows[k].2;
            }
            k += 1;
        }
        let threshold = rows.get(k).map_or(f64::NEG_INFINITY, |next| (level + next.0) / 2.0);
        raw.push(Cut {
            threshold,
            rate: if k == rows.len() { 1.0 } else { rate(tp, fp) },
            correct: tp + negatives - fp,
        });
    }
    let mut cuts: Vec<Cut> = Vec::with_capacity(raw.len());
    for c in raw {
        match cuts.last_mut() {
            Some(last) if last.rate == c.rate => {
                if c.correct > last.correct + 1e-12 * total {
                    *last = c;
                }
            }
            _ => cuts.push(c),
        }
    }
    Ok(GroupCuts {
        cuts,
        records: rows.len(),
        positive_records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub objective: ThresholdObjective,
    pub policy: ThresholdPolicy,
    pub thresholds: [f64; 2],
    /// Positive rate (dp) or TPR (eo_tpr) per group.
    pub rates: [f64; 2],
    pub gap: f64,
    /// Largest gap accepted as equal: one record of the smaller group.
    pub tolerance: f64,
    pub accuracy: f64,
    /// `gap ≤ tolerance`.
    pub reached: bool,
    pub flags: Vec<String>,
}

/// Deterministic per-group thresholds. Without `target_rate`, maximizes
/// total accuracy among pairs whose rates differ by at most one record of
/// the smaller group (ties: smaller gap, then higher thresholds); with it,
/// each group's rate is set as close to the target as its data allow.
pub fn per_group_thresholds(d: &Dataset, objective: ThresholdObjective, target_rate: Option<f64>) -> Result<GroupThresholds> {
    if let Some(t) = target_rate {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("target rate {t} outside [0, 1]")));
        }
    }
    let scores = d.scores()?;
    let g0 = group_cuts(d, &scores, Group::Zero, objective)?;
    let g1 = group_cuts(d, &scores, Group::One, objective)?;
    let total: f64 = d.weights().iter().sum();
    let smallest = match objective {
        ThresholdObjective::Dp => g0.records.min(g1.records),
        ThresholdObjective::EoTpr => g0.positive_records.min(g1.positive_records),
    };
    let tolerance = 1.0 / smallest as f64;
    let eps = 1e-12;

    let (i, j) = match target_rate {
        Some(t) => {
            let closest = |g: &GroupCuts| {
                let mut best = 0;
                for (k, c) in g.cuts.iter().enumerate() {
                    let (db, dk) = ((g.cuts[best].rate - t).abs(), (c.rate - t).abs());
                    if dk < db - eps || (dk <= db + eps && c.correct > g.cuts[best].correct + eps) {
                        best = k;
                    }
                }
                best
            };
            (closest(&g0), closest(&g1))
        }
        None => {
            let mut best: Option<(usize, usize, f64, f64)> = None;
            let mut consider = |a: usize, b: usize| {
                let (c0, c1) = (&g0.cuts[a], &g1.cuts[b]);
                let (acc, gap) = (c0.correct + c1.correct, (c0.rate - c1.rate).abs());
                let better = match best {
                    None => true,
                    Some((_, _, ba, bg)) => acc > ba + eps * total || (acc >= ba - eps * total && gap < bg - eps),
                };
                if better {
                    best = Some((a, b, acc, gap));
                }
            };
            let mut lo = 0;
            for a in 0..g0.cuts.len() {
                let r = g0.cuts[a].rate;
                while lo < g1.cuts.len() && g1.cuts[lo].rate < r - tolerance - eps {
                    lo += 1;
                }
                let mut b = lo;
                while b < g1.cuts.len() && g1.cuts[b].rate <= r + tolerance + eps {
                    consider(a, b);
                    b += 1;
                }
            }
            match best {
                Some((a, b, _, _)) => (a, b),
                // Nothing within tolerance: fall back to the closest pair.
                None => {
                    let mut pair = (0, 0);
                    let mut gap = f64::INFINITY;
                    for a in 0..g0.cuts.len() {
                        for b in 0..g1.cuts.len() {
                            let g = (g0.cuts[a].rate - g1.cuts[b].rate).abs();
                            if g < gap {
                                gap = g;
                                pair = (a, b);
                            }
                        }
                    }
                    pair
                }
            }
        }
    };
    let (c0, c1) = (g0.cuts[i], g1.cuts[j]);
    let thresholds = [policy_threshold(c0.threshold), policy_threshold(c1.threshold)];
    let gap = (c0.rate - c1.rate).abs();
    let reached = gap <= tolerance + eps;
    let mut flags = Vec::new();
    if !reached {
        flags.push(format!("rates differ by {gap}, more than the tolerance {tolerance}"));
    }
    if smallest < 2 {
        flags.push("a group has a single relevant record; equality is only up to that record".into());
    }
    Ok(GroupThresholds {
        objective,
        policy: ThresholdPolicy::per_group(
            ThresholdRule::deterministic(thresholds[0]),
            ThresholdRule::deterministic(thresholds[1]),
        ),
        thresholds,
        rates: [c0.rate, c1.rate],
        gap,
        tolerance,
        accuracy: (c0.correct + c1.correct) / total,
        reached,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddsCriterion {
    /// Equal TPR and FPR.
    Full,
    /// Equal TPR only.
    Opportunity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EqualizeOptions {
    pub criterion: OddsCriterion,
    /// Allow randomized rules; without them only per-group deterministic
    /// cuts are searched and equality holds up to data granularity.
    pub randomized: bool,
}

impl Default for EqualizeOptions {
    fn default() -> EqualizeOptions {
        EqualizeOptions {
            criterion: OddsCriterion::Full,
            randomized: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizedOdds {
    pub criterion: OddsCriterion,
    pub policy: ThresholdPolicy,
    /// Target `(fpr, tpr)` per group; both entries coincide for `full`.
    pub target: [(f64, f64); 2],
    /// `(fpr, tpr)` obtained by applying the policy to the data.
    pub realized: [(f64, f64); 2],
    pub tpr_gap: f64,
    pub fpr_gap: f64,
    pub accuracy: f64,
    pub flags: Vec<String>,
}

/// Value of a hull at `x` (upper: largest, lower: smallest) with the vertex
/// mixture reaching it.
fn locate(env: &RocCurve, x: f64, upper: bool) -> (f64, Vec<(f64, f64)>) {
    let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
    let mut offer = |y: f64, mix: Vec<(f64, f64)>| {
        let take = match &best {
            None => true,
            Some((b, _)) => (upper && y > *b) || (!upper && y < *b),
        };
        if take {
            best = Some((y, mix));
        }
    };
    for i in 0..env.points.len() {
        let (xi, yi) = (env.fpr(i), env.tpr(i));
        if xi == x {
            offer(yi, vec![(env.points[i].threshold, 1.0)]);
        }
        if i + 1 < env.points.len() {
            let (xj, yj) = (env.fpr(i + 1), env.tpr(i + 1));
            if xi < x && x < xj {
                let lambda = (x - xi) / (xj - xi);
                offer(
                    yi + lambda * (yj - yi),
                    vec![(env.points[i].threshold, 1.0 - lambda), (env.points[i + 1].threshold, lambda)],
                );
            }
        }
    }
    best.expect("hull spans [0, 1]")
}

/// Smallest FPR on the upper envelope reaching TPR `y`.
fn invert(env: &RocCurve, y: f64) -> (f64, Vec<(f64, f64)>) {
    let i = (0..env.points.len()).find(|&i| env.tpr(i) >= y).unwrap_or(env.points.len() - 1);
    if i == 0 || env.tpr(i) == y {
        return (env.fpr(i), vec![(env.points[i].threshold, 1.0)]);
    }
    let (y0, y1) = (env.tpr(i - 1), env.tpr(i));
    let lambda = (y - y0) / (y1 - y0);
    (
        env.fpr(i - 1) + lambda * (env.fpr(i) - env.fpr(i - 1)),
        vec![(env.points[i - 1].threshold, 1.0 - lambda), (env.points[i].threshold, lambda)],
    )
}

/// Collapses a threshold mixture into the simplest equivalent rule.
fn rule_from(mix: Vec<(f64, f64)>) -> ThresholdRule {
    let mut parts: Vec<(f64, f64)> = Vec::new();
    for (t, w) in mix {
        if w <= 0.0 {
            continue;
        }
        let t = policy_threshold(t);
        match parts.iter_mut().find(|p| p.0 == t) {
            Some(p) => p.1 += w,
            None => parts.push((t, w)),
        }
    }
    parts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = parts.iter().map(|p| p.1).sum();
    match parts.as_slice() {
        [(t, _)] => ThresholdRule::deterministic(*t),
        [(low, wl), (high, _)] => ThresholdRule::Randomized {
            low: *low,
            high: *high,
            p_low: wl / total,
        },
        _ => ThresholdRule::Mixture {
            components: parts
                .iter()
                .map(|&(threshold, w)| MixtureComponent {
                    threshold,
                    weight: w / total,
                })
                .collect(),
        },
    }
}

fn is_diagonal(env: &RocCurve) -> bool {
    (0..env.points.len()).all(|i| (env.tpr(i) - env.fpr(i)).abs() <= 1e-12)
}

/// `(fpr, tpr)` reached by a prediction in one group.
fn realized_rates(d: &Dataset, pred: &PredictionSet, g: Group) -> Result<(f64, f64)> {
    let r = rates(&confusion(d, pred, Some(g))?);
    Ok((r.fpr.unwrap_or(0.0), r.tpr.unwrap_or(0.0)))
}

/// Post-processing towards equalized odds. Each group's reachable operating
/// points are the convex hull of its ROC curve; the common point (group
/// pair, for `opportunity`) maximizing accuracy is chosen, ties towards
/// lower FPR, and realized per group by mixing hull-vertex thresholds.
pub fn equalize_odds(d: &Dataset, opts: &EqualizeOptions) -> Result<EqualizedOdds> {
    d.require_both_groups()?;
    if !opts.randomized {
        return granular_odds(d, opts.criterion);
    }
    let roc = [roc_curve(d, Some(Group::Zero))?, roc_curve(d, Some(Group::One))?];
    let upper = [convex_envelope(&roc[0]), convex_envelope(&roc[1])];
    let (p, n) = (roc[0].positives + roc[1].positives, roc[0].negatives + roc[1].negatives);
    let mut flags = Vec::new();
    if upper.iter().any(is_diagonal) {
        flags.push("a group's envelope is the diagonal; the target is a trivial corner".into());
    }

    let (target, rules) = match opts.criterion {
        OddsCriterion::Full => {
            let mut xs: Vec<f64> = upper.iter().flat_map(|e| (0..e.points.len()).map(|i| e.fpr(i))).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            // Crossings of the two envelopes between consecutive breakpoints.
            let mut crossings = Vec::new();
            for w in xs.windows(2) {
                let diff = |x: f64| locate(&upper[0], x, true).0 - locate(&upper[1], x, true).0;
                let (da, db) = (diff(w[0]), diff(w[1]));
                if da * db < 0.0 {
                    crossings.push(w[0] + (w[1] - w[0]) * da / (da - db));
                }
            }
            xs.extend(crossings);
            xs.sort_by(f64::total_cmp);
            let height = |x: f64| locate(&upper[0], x, true).0.min(locate(&upper[1], x, true).0);
            let mut best = (0.0, f64::NEG_INFINITY);
            for &x in &xs {
                let v = p * height(x) - n * x;
                if v > best.1 + 1e-12 * (p + n) {
                    best = (x, v);
                }
            }
            let (x, y) = (best.0, height(best.0));
            let mut rules = Vec::with_capacity(2);
            for g in 0..2 {
                let (top, top_mix) = locate(&upper[g], x, true);
                if y >= top - 1e-12 {
                    rules.push(rule_from(top_mix));
                } else {
                    // Below this group's envelope: blend with its lower hull
                    // at the same FPR.
                    let (bottom, bottom_mix) = locate(&lower_envelope(&roc[g]), x, false);
                    let mu = if top > bottom { (y - bottom) / (top - bottom) } else { 1.0 };
                    let mix = top_mix
                        .into_iter()
                        .map(|(t, w)| (t, mu * w))
                        .chain(bottom_mix.into_iter().map(|(t, w)| (t, (1.0 - mu) * w)))
                        .collect();
                    rules.push(rule_from(mix));
                }
            }
            ([(x, y), (x, y)], rules)
        }
        OddsCriterion::Opportunity => {
            let mut ys: Vec<f64> = upper.iter().flat_map(|e| (0..e.points.len()).map(|i| e.tpr(i))).collect();
            ys.sort_by(f64::total_cmp);
            ys.dedup();
            let value = |y: f64| -> f64 {
                (0..2).map(|g| roc[g].positives * y - roc[g].negatives * invert(&upper[g], y).0).sum()
            };
            let mut best = (0.0, f64::NEG_INFINITY);
            for &y in &ys {
                let v = value(y);
                if v > best.1 + 1e-12 * (p + n) {
                    best = (y, v);
                }
            }
            let y = best.0;
            let (a, b) = (invert(&upper[0], y), invert(&upper[1], y));
            ([(a.0, y), (b.0, y)], vec![rule_from(a.1), rule_from(b.1)])
        }
    };
    let mut rules = rules.into_iter();
    let policy = ThresholdPolicy::per_group(rules.next().unwrap(), rules.next().unwrap());
    finish(d, opts.criterion, policy, target, flags)
}

fn finish(
    d: &Dataset,
    criterion: OddsCriterion,
    policy: ThresholdPolicy,
    target: [(f64, f64); 2],
    flags: Vec<String>,
) -> Result<EqualizedOdds> {
    let pred = apply_policy(d, &policy)?;
    let realized = [realized_rates(d, &pred, Group::Zero)?, realized_rates(d, &pred, Group::One)?];
    let correct: f64 = d
        .records()
        .iter()
        .zip(pred.probs())
        .map(|(r, &q)| r.weight * if r.y { q } else { 1.0 - q })
        .sum();
    let total: f64 = d.weights().iter().sum();
    Ok(EqualizedOdds {
        criterion,
        policy,
        target,
        realized,
        tpr_gap: (realized[0].1 - realized[1].1).abs(),
        fpr_gap: (realized[0].0 - realized[1].0).abs(),
        accuracy: correct / total,
        flags,
    })
}

/// Deterministic variant: per-group cuts equalizing TPR up to granularity.
fn granular_odds(d: &Dataset, criterion: OddsCriterion) -> Result<EqualizedOdds> {
    if criterion == OddsCriterion::Full {
        return Err(Error::invalid(
            "deterministic equalized odds supports the opportunity criterion only; allow randomized rules",
        ));
    }
    let choice = per_group_thresholds(d, ThresholdObjective::EoTpr, None)?;
    let pred = apply_policy(d, &choice.policy)?;
    let target = [realized_rates(d, &pred, Group::Zero)?, realized_rates(d, &pred, Group::One)?];
    let mut flags = choice.flags.clone();
    flags.push(format!("granular: deterministic cuts equalize TPR up to {}", choice.tolerance));
    finish(d, criterion, choice.policy, target, flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::fixtures::toy;
    use crate::rocstats::in_hull;
    use proptest::prelude::*;

    fn scored(rows: &[(u8, u8, f64)]) -> Dataset {
        let records = rows
            .iter()
            .map(|&(s, y, m)| Record::new(Group::from_index(s as usize), y == 1, Some(m)))
            .collect();
        Dataset::new(records, Vec::new()).unwrap()
    }

    /// Same `(y, score)` rows in both groups.
    fn mirrored(rows: &[(u8, f64)]) -> Dataset {
        let all: Vec<(u8, u8, f64)> = (0..2u8).flat_map(|s| rows.iter().map(move |&(y, m)| (s, y, m))).collect();
        scored(&all)
    }

    #[test]
    fn toy_dp_at_half() {
        let out = per_group_thresholds(&toy(), ThresholdObjective::Dp, Some(0.5)).unwrap();
        assert_eq!(out.rates, [0.5, 0.5]);
        let pred = apply_policy(&toy(), &out.policy).unwrap();
        let accepted: Vec<usize> = pred
            .decisions()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i + 1)
            .collect();
        let expected: Vec<usize> = [5, 6, 11, 12].into_iter().chain(17..=24).collect();
        assert_eq!(accepted, expected);
    }

    #[test]
    fn toy_dp_accuracy_search_within_tolerance() {
        let out = per_group_thresholds(&toy(), ThresholdObjective::Dp, None).unwrap();
        assert!(out.reached);
        assert!(out.gap <= 1.0 / 8.0 + 1e-12);
        assert!(out.flags.is_empty());
    }

    #[test]
    fn identical_groups_share_threshold() {
        let d = mirrored(&[(0, 0.1), (0, 0.3), (1, 0.35), (0, 0.5), (1, 0.7), (1, 0.9)]);
        for obj in [ThresholdObjective::Dp, ThresholdObjective::EoTpr] {
            let out = per_group_thresholds(&d, obj, None).unwrap();
            assert_eq!(out.thresholds[0], out.thresholds[1]);
            assert_eq!(out.gap, 0.0);
        }
        let eo = equalize_odds(&d, &EqualizeOptions::default()).unwrap();
        assert!(eo.policy.is_deterministic());
        assert_eq!(eo.policy.s0, eo.policy.s1);
        assert_eq!((eo.tpr_gap, eo.fpr_gap), (0.0, 0.0));
    }

    #[test]
    fn singleton_group_is_flagged() {
        let d = scored(&[(0, 1, 0.8), (1, 0, 0.2), (1, 1, 0.6), (1, 0, 0.4)]);
        let out = per_group_thresholds(&d, ThresholdObjective::Dp, None).unwrap();
        assert!(out.gap <= 1.0);
        assert!(!out.flags.is_empty());
    }

    /// Group 0 envelope through (0.2, 0.8); group 1 peaks at (0.3, 0.6).
    fn two_envelopes() -> Dataset {
        let mut rows = Vec::new();
        rows.extend([(0, 1, 0.9); 4]);
        rows.push((0, 0, 0.9));
        rows.push((0, 1, 0.1));
        rows.extend([(0, 0, 0.1); 4]);
        rows.extend([(1, 1, 0.9); 3]);
        rows.extend([(1, 0, 0.9); 3]);
        rows.extend([(1, 1, 0.1); 2]);
        rows.extend([(1, 0, 0.1); 7]);
        scored(&rows)
    }

    #[test]
    fn equalized_odds_geometric_example() {
        let d = two_envelopes();
        let out = equalize_odds(&d, &EqualizeOptions::default()).unwrap();
        let (x, y) = out.target[0];
        assert!((x - 0.3).abs() < 1e-12 && (y - 0.6).abs() < 1e-12);
        assert!(out.tpr_gap <= 1e-9 && out.fpr_gap <= 1e-9, "{out:?}");
        for g in Group::BOTH {
            assert!(in_hull(&roc_curve(&d, Some(g)).unwrap(), x, y, 1e-12));
            let (rx, ry) = out.realized[g.index()];
            assert!((rx - x).abs() <= 1e-9 && (ry - y).abs() <= 1e-9);
        }
        // Group 0 sits strictly inside its hull, which needs randomization.
        assert!(!out.policy.s0.as_ref().unwrap().is_deterministic());
    }

    #[test]
    fn opportunity_equalizes_tpr() {
        let d = two_envelopes();
        let out = equalize_odds(
            &d,
            &EqualizeOptions {
                criterion: OddsCriterion::Opportunity,
                randomized: true,
            },
        )
        .unwrap();
        assert!(out.tpr_gap <= 1e-9);
        assert_eq!(out.target[0].1, out.target[1].1);
    }

    #[test]
    fn toy_granular_opportunity() {
        let out = equalize_odds(
            &toy(),
            &EqualizeOptions {
                criterion: OddsCriterion::Opportunity,
                randomized: false,
            },
        )
        .unwrap();
        assert!(out.policy.is_deterministic());
        assert!(out.tpr_gap <= 1.0 / 5.0 + 1e-12, "{out:?}");
        assert!(out.flags.iter().any(|f| f.starts_with("granular")));
        let full = EqualizeOptions {
            criterion: OddsCriterion::Full,
            randomized: false,
        };
        assert!(equalize_odds(&toy(), &full).is_err());
    }

    #[test]
    fn uninformative_score_gives_corner() {
        let d = scored(&[(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5), (1, 1, 0.5)]);
        let out = equalize_odds(&d, &EqualizeOptions::default()).unwrap();
        assert!(!out.flags.is_empty());
        let (x, y) = out.target[0];
        assert!((x, y) == (0.0, 0.0) || (x, y) == (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn equalized_odds_hits_target(
            rows in prop::collection::vec((0u8..2, 0u8..2, 0u32..12), 8..80),
        ) {
            let mut rows: Vec<(u8, u8, f64)> = rows.into_iter().map(|(s, y, k)| (s, y, k as f64 / 12.0)).collect();
            rows.extend([(0, 0, 0.2), (0, 1, 0.7), (1, 0, 0.4), (1, 1, 0.6)]);
            let d = scored(&rows);
            let out = equalize_odds(&d, &EqualizeOptions::default()).unwrap();
            prop_assert!(out.tpr_gap <= 1e-9 && out.fpr_gap <= 1e-9, "{:?}", out);
            let (x, y) = out.target[0];
            for g in Group::BOTH {
                prop_assert!(in_hull(&roc_curve(&d, Some(g)).unwrap(), x, y, 1e-9));
            }
        }

        #[test]
        fn dp_thresholds_within_tolerance(
            rows in prop::collection::vec((0u8..2, 0u8..2, 0.0f64..1.0), 4..60),
        ) {
            let mut rows = rows;
            rows.extend([(0, 0, 0.3), (1, 1, 0.6)]);
            let d = scored(&rows);
            let out = per_group_thresholds(&d, ThresholdObjective::Dp, None).unwrap();
            prop_assert!(out.reached);
            let pred = apply_policy(&d, &out.policy).unwrap();
            let mut acc = [0.0; 2];
            let mut tot = [0.0; 2];
            for (r, q) in d.records().iter().zip(pred.probs()) {
                acc[r.s.index()] += q;
                tot[r.s.index()] += 1.0;
            }
            prop_assert!(((acc[0] / tot[0]) - out.rates[0]).abs() < 1e-12);
            prop_assert!(((acc[1] / tot[1]) - out.rates[1]).abs() < 1e-12);
        }
    }
}
