//! Data-level corrections applied before a model is fitted.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, Record};
use crate::error::{Error, Result};
use crate::mitigate::logistic::{train_logistic, PenaltySpec, TrainOptions};
use crate::rocstats::{best_accuracy_threshold, roc_from_scores};

fn label_rates(records: &[Record]) -> [f64; 2] {
    let mut pos = [0.0; 2];
    let mut tot = [0.0; 2];
    for r in records {
        tot[r.s.index()] += r.weight;
        if r.y {
            pos[r.s.index()] += r.weight;
        }
    }
    [pos[0] / tot[0], pos[1] / tot[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Swap {
    /// Negative of the disadvantaged group relabelled positive.
    pub promoted: usize,
    /// Positive of the advantaged group relabelled negative.
    pub demoted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassageResult {
    pub dataset: Dataset,
    pub swaps: Vec<Swap>,
    /// Boundary the swap candidates were ranked against.
    pub threshold: f64,
    pub gap_before: f64,
    pub gap_after: f64,
    /// `gap_after ≤ ε`; false when the candidates ran out first.
    pub reached: bool,
}

/// Ranking scores for massaging: the dataset's own scores, otherwise those
/// of an unpenalized logistic fit on the features.
fn ranking_scores(d: &Dataset) -> Result<Vec<f64>> {
    if d.has_scores() {
        return d.scores();
    }
    let fit = train_logistic(d, PenaltySpec::None, &TrainOptions::default())?;
    fit.model.predict(d)
}

/// Relabels pairs of records until the label rates of the two groups differ
/// by at most `epsilon`. Each pair demotes the advantaged-group positive and
/// promotes the disadvantaged-group negative closest to `threshold`
/// (default: the accuracy-optimal cut of the ranking scores), so the number
/// of positive labels never changes. Stops early once another pair would
/// no longer shrink the gap.
pub fn massage_labels(d: &Dataset, epsilon: f64, threshold: Option<f64>) -> Result<MassageResult> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be non-negative"));
    }
    d.require_both_groups()?;
    let scores = ranking_scores(d)?;
    let threshold = match threshold {
        Some(t) => t,
        None => {
            let roc = roc_from_scores(&scores, &d.labels(), &d.weights())?;
            best_accuracy_threshold(&roc, roc.negatives, roc.positives)?.threshold
        }
    };
    let mut records = d.records().to_vec();
    let before = label_rates(&records);
    let gap_before = (before[1] - before[0]).abs();
    let advantaged = if before[1] >= before[0] { Group::One } else { Group::Zero };
    let distance = |i: usize| (scores[i] - threshold).abs();
    let by_distance = |mut idx: Vec<usize>| {
        idx.sort_by(|&a, &b| distance(a).total_cmp(&distance(b)).then(a.cmp(&b)));
        idx
    };
    let demote = by_distance((0..records.len()).filter(|&i| records[i].s == advantaged && records[i].y).collect());
    let promote = by_distance((0..records.len()).filter(|&i| records[i].s != advantaged && !records[i].y).collect());

    let mut swaps = Vec::new();
    let mut gap = gap_before;
    for (&dn, &up) in demote.iter().zip(&promote) {
        if gap <= epsilon {
            break;
        }
        records[dn].y = false;
        records[up].y = true;
        let rates = label_rates(&records);
        let next = (rates[1] - rates[0]).abs();
        if next >= gap {
            records[dn].y = true;
            records[up].y = false;
            break;
        }
        gap = next;
        swaps.push(Swap {
            promoted: up,
            demoted: dn,
        });
    }
    Ok(MassageResult {
        dataset: d.replace_records(records)?,
        swaps,
        threshold,
        gap_before,
        gap_after: gap,
        reached: gap <= epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reweighting {
    /// `w(s, y)`, indexed `[s][y]`.
    pub cell_weights: [[f64; 2]; 2],
    /// The input with each record weight multiplied by its cell weight.
    pub dataset: Dataset,
}

/// `w(s, y) = P[S=s]·P[Y=y] / P[S=s, Y=y]` under the current record
/// weights, which makes `s` and `y` independent in the reweighted data.
pub fn reweigh(d: &Dataset) -> Result<Reweighting> {
    let mut joint = [[0.0; 2]; 2];
    for r in d.records() {
        joint[r.s.index()][r.y as usize] += r.weight;
    }
    let total: f64 = joint.iter().flatten().sum();
    let mut cell_weights = [[0.0; 2]; 2];
    for s in 0..2 {
        for y in 0..2 {
            if joint[s][y] <= 0.0 {
                return Err(Error::degenerate(format!("cell s={s}, y={y} is empty")));
            }
            let ps = joint[s][0] + joint[s][1];
            let py = joint[0][y] + joint[1][y];
            cell_weights[s][y] = ps * py / (total * joint[s][y]);
        }
    }
    let records = d
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.weight *= cell_weights[r.s.index()][r.y as usize];
            r
        })
        .collect();
    Ok(Reweighting {
        cell_weights,
        dataset: d.replace_records(records)?,
    })
}

/// Per-group order statistics of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRepair {
    pub feature: String,
    pub index: usize,
    /// Sorted non-missing values, indexed by group.
    pub sorted: [Vec<f64>; 2],
}

/// Position of `x` in `sorted` on the scale `[0, n−1]`: tied values take
/// their mid-rank, values in between interpolate linearly.
fn fractional_position(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len();
    let below = sorted.partition_point(|&v| v < x);
    let upto = sorted.partition_point(|&v| v <= x);
    if upto > below {
        return (below + upto - 1) as f64 / 2.0;
    }
    if below == 0 {
        return 0.0;
    }
    if below == n {
        return (n - 1) as f64;
    }
    let (a, b) = (sorted[below - 1], sorted[below]);
    (below - 1) as f64 + (x - a) / (b - a)
}

/// Linear interpolation between order statistics at level `q ∈ [0, 1]`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FeatureRepair {
    /// `F_g(x)`; a singleton group maps everything to the median level.
    pub fn level(&self, g: Group, x: f64) -> f64 {
        let s = &self.sorted[g.index()];
        if s.len() == 1 {
            0.5
        } else {
            fractional_position(s, x) / (s.len() - 1) as f64
        }
    }

    /// `F_m⁻¹(q)`: the average of the two group quantiles.
    pub fn target(&self, q: f64) -> f64 {
        0.5 * (quantile(&self.sorted[0], q) + quantile(&self.sorted[1], q))
    }
}

/// Quantile maps moving each group's feature distribution towards their
/// common median distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairPlan {
    pub amount: f64,
    pub features: Vec<FeatureRepair>,
}

impl RepairPlan {
    pub fn fit(d: &Dataset, features: &[String], amount: f64) -> Result<RepairPlan> {
        if !(0.0..=1.0).contains(&amount) {
            return Err(Error::invalid(format!("repair amount {amount} outside [0, 1]")));
        }
        d.require_both_groups()?;
        let names: Vec<String> = if features.is_empty() { d.feature_names().to_vec() } else { features.to_vec() };
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let index = d.feature_index(&name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
            let mut sorted = [Vec::new(), Vec::new()];
            for r in d.records() {
                let v = r.features[index];
                if !v.is_nan() {
                    sorted[r.s.index()].push(v);
                }
            }
            for (g, s) in sorted.iter_mut().enumerate() {
                if s.is_empty() {
                    return Err(Error::degenerate(format!("feature `{name}` has no values in group {g}")));
                }
                s.sort_by(f64::total_cmp);
            }
            out.push(FeatureRepair {
                feature: name,
                index,
                sorted,
            });
        }
        Ok(RepairPlan { amount, features: out })
    }

    pub fn repair_value(&self, f: &FeatureRepair, g: Group, x: f64) -> f64 {
        if x.is_nan() || self.amount == 0.0 {
            return x;
        }
        (1.0 - self.amount) * x + self.amount * f.target(f.level(g, x))
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let records = d
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for f in &self.features {
                    r.features[f.index] = self.repair_value(f, r.s, r.features[f.index]);
                }
                r
            })
            .collect();
        d.replace_records(records)
    }
}

/// Disparate-impact removal: `x ← (1−amount)·x + amount·F_m⁻¹(F_g(x))` for
/// each selected feature (all features when `features` is empty).
pub fn di_remove(d: &Dataset, features: &[String], amount: f64) -> Result<(Dataset, RepairPlan)> {
    let plan = RepairPlan::fit(d, features, amount)?;
    Ok((plan.apply(d)?, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::toy;
    use crate::stats::ks_distance;
    use proptest::prelude::*;

    fn labelled(groups: &[(u8, u8, f64)]) -> Dataset {
        let records = groups
            .iter()
            .map(|&(s, y, m)| Record::new(Group::from_index(s as usize), y == 1, Some(m)))
            .collect();
        Dataset::new(records, Vec::new()).unwrap()
    }

    fn massage_fixture() -> Dataset {
        let mut cells = Vec::new();
        for i in 0..10 {
            cells.push((0, (i < 8) as u8, 0.05 + 0.09 * i as f64));
            cells.push((1, (i < 2) as u8, 0.05 + 0.09 * i as f64));
        }
        labelled(&cells)
    }

    #[test]
    fn massage_counting_example() {
        let d = massage_fixture();
        let out = massage_labels(&d, 0.0, Some(0.5)).unwrap();
        assert_eq!(out.swaps.len(), 3);
        assert!(out.reached);
        assert_eq!(label_rates(out.dataset.records()), [0.5, 0.5]);
        let pos = |d: &Dataset| d.labels().iter().filter(|&&y| y).count();
        assert_eq!(pos(&out.dataset), pos(&d));
    }

    #[test]
    fn massage_trivial_targets() {
        let d = massage_fixture();
        assert!(massage_labels(&d, 1.0, None).unwrap().swaps.is_empty());
        let balanced = labelled(&[(0, 1, 0.7), (0, 0, 0.2), (1, 1, 0.6), (1, 0, 0.4)]);
        let out = massage_labels(&balanced, 0.1, None).unwrap();
        assert!(out.swaps.is_empty());
        assert_eq!(out.dataset, balanced);
    }

    #[test]
    fn massage_reports_exhaustion() {
        // One disadvantaged negative only: a single swap is all there is.
        let mut cells = vec![(0, 1, 0.9); 6];
        cells.extend([(1, 0, 0.2), (1, 1, 0.6)]);
        let d = labelled(&cells);
        let out = massage_labels(&d, 0.0, Some(0.5)).unwrap();
        assert_eq!(out.swaps.len(), 1);
        assert!(!out.reached);
        assert!(out.gap_after < out.gap_before);
    }

    #[test]
    fn reweigh_toy_cells() {
        let out = reweigh(&toy()).unwrap();
        let w = out.cell_weights;
        assert!((w[0][1] - (8.0 / 24.0 * 14.0 / 24.0) / (5.0 / 24.0)).abs() < 1e-12);
        assert!((w[1][0] - (16.0 / 24.0 * 10.0 / 24.0) / (7.0 / 24.0)).abs() < 1e-12);
        assert!((w[0][1] - 0.933_333_333_333_333_3).abs() < 1e-12);
        assert!((w[1][0] - 0.952_380_952_380_952_4).abs() < 1e-12);
    }

    #[test]
    fn reweigh_independent_is_identity() {
        let d = labelled(&[(0, 0, 0.1), (0, 1, 0.2), (1, 0, 0.3), (1, 1, 0.4), (1, 0, 0.3), (1, 1, 0.4)]);
        let out = reweigh(&d).unwrap();
        assert!(out.cell_weights.iter().flatten().all(|&w| (w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reweigh_empty_cell_named() {
        let d = labelled(&[(0, 0, 0.1), (0, 1, 0.2), (1, 1, 0.4)]);
        let err = reweigh(&d).unwrap_err().to_string();
        assert!(err.contains("s=1, y=0"), "{err}");
    }

    fn feature_data(g0: &[f64], g1: &[f64]) -> Dataset {
        let records = g0
            .iter()
            .map(|&v| (Group::Zero, v))
            .chain(g1.iter().map(|&v| (Group::One, v)))
            .enumerate()
            .map(|(i, (g, v))| Record::new(g, i % 2 == 0, None).with_features(vec![v]))
            .collect();
        Dataset::new(records, vec!["x".into()]).unwrap()
    }

    fn values(d: &Dataset, g: Group) -> Vec<f64> {
        d.records().iter().filter(|r| r.s == g).map(|r| r.features[0]).collect()
    }

    #[test]
    fn repair_hand_example() {
        let d = feature_data(&[1.0, 2.0, 3.0], &[11.0, 12.0, 13.0]);
        let (out, _) = di_remove(&d, &[], 1.0).unwrap();
        assert_eq!(values(&out, Group::Zero), vec![6.0, 7.0, 8.0]);
        assert_eq!(values(&out, Group::One), vec![6.0, 7.0, 8.0]);
    }

    #[test]
    fn repair_fixed_points() {
        let d = feature_data(&[0.3, -1.0, 2.5, 7.0], &[2.5, 7.0, 0.3, -1.0]);
        let (out, _) = di_remove(&d, &[], 1.0).unwrap();
        for (a, b) in out.records().iter().zip(d.records()) {
            assert!((a.features[0] - b.features[0]).abs() < 1e-12);
        }
        let (zero, _) = di_remove(&feature_data(&[1.0, 5.0], &[2.0, 9.0, 4.0]), &[], 0.0).unwrap();
        assert_eq!(zero, feature_data(&[1.0, 5.0], &[2.0, 9.0, 4.0]));
    }

    #[test]
    fn repair_unknown_feature() {
        let d = feature_data(&[1.0], &[2.0]);
        assert!(matches!(di_remove(&d, &["z".into()], 1.0), Err(Error::MissingColumn(_))));
        assert!(di_remove(&d, &[], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn reweigh_factorizes(cells in prop::collection::vec((0u8..2, 0u8..2, 0.1f64..3.0), 4..60)) {
            let mut cells = cells;
            cells.extend([(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
            let records: Vec<Record> = cells.iter()
                .map(|&(s, y, w)| Record::new(Group::from_index(s as usize), y == 1, Some(0.5)).with_weight(w))
                .collect();
            let d = Dataset::new(records, Vec::new()).unwrap();
            let out = reweigh(&d).unwrap().dataset;
            let mut joint = [[0.0; 2]; 2];
            for r in out.records() {
                joint[r.s.index()][r.y as usize] += r.weight;
            }
            let total: f64 = joint.iter().flatten().sum();
            for s in 0..2 {
                for y in 0..2 {
                    let ps = (joint[s][0] + joint[s][1]) / total;
                    let py = (joint[0][y] + joint[1][y]) / total;
                    prop_assert!((joint[s][y] / total - ps * py).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn massage_keeps_positive_count(
            cells in prop::collection::vec((0u8..2, 0u8..2, 0.0f64..1.0), 4..80),
            eps in 0.0f64..0.3,
        ) {
            let mut cells = cells;
            cells.extend([(0, 0, 0.5), (1, 1, 0.5)]);
            let d = labelled(&cells);
            let out = massage_labels(&d, eps, Some(0.5)).unwrap();
            let pos = |d: &Dataset| d.labels().iter().filter(|&&y| y).count();
            prop_assert_eq!(pos(&out.dataset), pos(&d));
            prop_assert!(out.gap_after <= out.gap_before);
        }

        #[test]
        fn repair_preserves_order_and_aligns(
            g0 in prop::collection::vec(-50.0f64..50.0, 1..40),
            g1 in prop::collection::vec(-10.0f64..90.0, 1..40),
            amount in 0.0f64..=1.0,
        ) {
            let d = feature_data(&g0, &g1);
            let (out, plan) = di_remove(&d, &[], amount).unwrap();
            for g in Group::BOTH {
                let (before, after) = (values(&d, g), values(&out, g));
                for i in 0..before.len() {
                    for j in 0..before.len() {
                        if before[i] < before[j] {
                            prop_assert!(after[i] <= after[j] + 1e-9);
                        }
                    }
                }
            }
            for f in &plan.features {
                for w in f.sorted[0].windows(2) {
                    prop_assert!(f.target(f.level(Group::Zero, w[0])) <= f.target(f.level(Group::Zero, w[1])) + 1e-12);
                }
            }
            let full = di_remove(&d, &[], 1.0).unwrap().0;
            let ks = ks_distance(&values(&full, Group::Zero), &values(&full, Group::One));
            prop_assert!(ks <= 1.0 / g0.len().min(g1.len()) as f64 + 1e-12, "ks {}", ks);
        }
    }
}
