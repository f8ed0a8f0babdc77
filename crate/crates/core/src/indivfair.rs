//! Individual-level audits: Lipschitz consistency of predictions under a
//! Mahalanobis similarity, and whether the protected attribute can be
//! reconstructed from model inputs and outputs.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group, PredictionSet, Record};
use crate::error::{Error, Result};
use crate::mitigate::logistic::{train_logistic, PenaltySpec, TrainOptions};
use crate::rng::{derive_seed, SplitMix64};
use crate::rocstats::{auc, roc_from_scores};

/// Mahalanobis distance under the feature covariance, ridge-regularized by
/// `1e-8 · trace / dim` so that collinear features stay usable.
#[derive(Debug, Clone)]
pub struct Mahalanobis {
    covariance: DMatrix<f64>,
    /// Rows whitened by the Cholesky factor: distances become Euclidean.
    whitened: Vec<DVector<f64>>,
}

pub const RIDGE_FACTOR: f64 = 1e-8;

impl Mahalanobis {
    /// Missing values are imputed with the column mean.
    pub fn fit(d: &Dataset) -> Result<Mahalanobis> {
        let p = d.feature_names().len();
        if p == 0 {
            return Err(Error::invalid("the Lipschitz audit needs feature columns"));
        }
        let n = d.len();
        let means: Vec<f64> = (0..p)
            .map(|j| {
                let vals: Vec<f64> = d.feature_column(j).into_iter().filter(|v| !v.is_nan()).collect();
                if vals.is_empty() {
                    0.0
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect();
        let x = DMatrix::from_fn(n, p, |i, j| {
            let v = d.records()[i].features[j];
            if v.is_nan() {
                0.0
            } else {
                v - means[j]
            }
        });
        let mut covariance = x.transpose() * &x / (n.max(2) - 1) as f64;
        let ridge = RIDGE_FACTOR * covariance.trace() / p as f64;
        // A fully constant design has zero trace; any positive ridge works.
        let ridge = if ridge > 0.0 { ridge } else { RIDGE_FACTOR };
        for j in 0..p {
            covariance[(j, j)] += ridge;
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::degenerate("feature covariance is not positive definite"))?;
        let l = chol.l();
        let whitened = (0..n)
            .map(|i| {
                let row = x.row(i).transpose();
                l.solve_lower_triangular(&row).expect("Cholesky factor is invertible")
            })
            .collect();
        Ok(Mahalanobis { covariance, whitened })
    }

    /// Regularized covariance the distance is defined by.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (&self.whitened[i] - &self.whitened[j]).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMetric {
    /// `|m(x_i) − m(x_j)|`.
    Score,
    /// `|ŷ_i − ŷ_j|`, with randomized decisions as acceptance probabilities.
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOptions {
    pub metric: OutputMetric,
    /// `L` in `d_y ≤ L · d_x`.
    pub scale: f64,
    pub top_k: usize,
    /// Largest `n` for which every pair is examined.
    pub exact_limit: usize,
    /// Pairs drawn (uniformly, with replacement) above the exact limit.
    pub sampled_pairs: u64,
    pub seed: u64,
}

impl Default for LipschitzOptions {
    fn default() -> LipschitzOptions {
        LipschitzOptions {
            metric: OutputMetric::Score,
            scale: 1.0,
            top_k: 10,
            exact_limit: 2000,
            sampled_pairs: 2_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolatingPair {
    pub i: usize,
    pub j: usize,
    pub dx: f64,
    pub dy: f64,
}

impl ViolatingPair {
    fn excess(&self, scale: f64) -> f64 {
        self.dy - scale * self.dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzAuditResult {
    pub metric: OutputMetric,
    pub scale: f64,
    pub exact: bool,
    /// Seed of the pair sample; `None` for exhaustive enumeration.
    pub sample_seed: Option<u64>,
    pub pairs_examined: u64,
    pub violations: u64,
    /// Violations among pairs at distance zero (the ratio is infinite).
    pub zero_distance_violations: u64,
    /// Largest `d_y / d_x` over examined pairs with `d_x > 0`.
    pub worst_ratio: Option<f64>,
    /// Largest violations by `d_y − L·d_x`.
    pub top_pairs: Vec<ViolatingPair>,
}

impl LipschitzAuditResult {
    pub fn violation_rate(&self) -> f64 {
        if self.pairs_examined == 0 {
            0.0
        } else {
            self.violations as f64 / self.pairs_examined as f64
        }
    }

    pub fn write_pairs_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,dx,dy")?;
        for p in &self.top_pairs {
            writeln!(w, "{},{},{},{}", p.i, p.j, p.dx, p.dy)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    pairs: u64,
    violations: u64,
    zero_distance: u64,
    worst: Option<f64>,
    top: Vec<ViolatingPair>,
}

impl Tally {
    fn merge(mut self, other: Tally, scale: f64, k: usize) -> Tally {
        self.pairs += other.pairs;
        self.violations += other.violations;
        self.zero_distance += other.zero_distance;
        self.worst = match (self.worst, other.worst) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.top.extend(other.top);
        rank(&mut self.top, scale, k);
        self
    }
}

fn rank(pairs: &mut Vec<ViolatingPair>, scale: f64, k: usize) {
    pairs.sort_by(|a, b| {
        b.excess(scale)
            .total_cmp(&a.excess(scale))
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    pairs.truncate(k);
}

/// Counts pairs with `d_y > L·d_x`. A relative slack of 1e-12 keeps pairs
/// that sit exactly on the bound from flipping on rounding.
pub fn lipschitz_audit(d: &Dataset, pred: Option<&PredictionSet>, opts: &LipschitzOptions) -> Result<LipschitzAuditResult> {
    if d.len() < 2 {
        return Err(Error::invalid("the Lipschitz audit needs at least two records"));
    }
    if !(opts.scale > 0.0 && opts.scale.is_finite()) {
        return Err(Error::invalid("Lipschitz scale must be positive"));
    }
    let outputs: Vec<f64> = match opts.metric {
        OutputMetric::Score => d.scores()?,
        OutputMetric::Decision => {
            let pred = pred.ok_or_else(|| Error::invalid("decision mode needs a threshold or prediction column"))?;
            pred.check_aligned(d)?;
            pred.probs().to_vec()
        }
    };
    let metric = Mahalanobis::fit(d)?;
    let (scale, k) = (opts.scale, opts.top_k);
    let visit = |t: &mut Tally, i: usize, j: usize| {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let dx = metric.distance(i, j);
        let dy = (outputs[i] - outputs[j]).abs();
        t.pairs += 1;
        if dx > 0.0 {
            let ratio = dy / dx;
            t.worst = Some(t.worst.map_or(ratio, |w| w.max(ratio)));
        }
        if dy > scale * dx * (1.0 + 1e-12) + 1e-15 {
            t.violations += 1;
            if dx == 0.0 {
                t.zero_distance += 1;
            }
            t.top.push(ViolatingPair { i, j, dx, dy });
            if t.top.len() >= 4 * k.max(1) {
                rank(&mut t.top, scale, k);
            }
        }
    };
    let n = d.len();
    let exact = n <= opts.exact_limit;
    let tally = if exact {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut t = Tally::default();
                for j in i + 1..n {
                    visit(&mut t, i, j);
                }
                rank(&mut t.top, scale, k);
                t
            })
            .reduce(Tally::default, |a, b| a.merge(b, scale, k))
    } else {
        const CHUNK: u64 = 10_000;
        let chunks = opts.sampled_pairs.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = SplitMix64::new(derive_seed(opts.seed, c));
                let mut t = Tally::default();
                let count = CHUNK.min(opts.sampled_pairs - c * CHUNK);
                for _ in 0..count {
                    let i = rng.below(n as u64) as usize;
                    let mut j = rng.below(n as u64 - 1) as usize;
                    if j >= i {
                        j += 1;
                    }
                    visit(&mut t, i, j);
                }
                rank(&mut t.top, scale, k);
                t
            })
            .reduce(Tally::default, |a, b| a.merge(b, scale, k))
    };
    Ok(LipschitzAuditResult {
        metric: opts.metric,
        scale,
        exact,
        sample_seed: (!exact).then_some(opts.seed),
        pairs_examined: tally.pairs,
        violations: tally.violations,
        zero_distance_violations: tally.zero_distance,
        worst_ratio: tally.worst,
        top_pairs: tally.top,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOptions {
    pub folds: usize,
    pub seed: u64,
    /// Ridge weight of the attacker, which keeps it finite on separable data.
    pub l2: f64,
}

impl Default for ReconstructionOptions {
    fn default() -> ReconstructionOptions {
        ReconstructionOptions {
            folds: 5,
            seed: 0,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionAuditResult {
    /// Mean held-out AUC of the attacker predicting `s`.
    pub auc: f64,
    pub fold_aucs: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Attacker inputs.
    pub inputs: Vec<String>,
}

/// Stratified fold labels: each group is shuffled and dealt round-robin.
fn stratified_folds(groups: &[Group], folds: usize, seed: u64) -> Vec<usize> {
    let mut assignment = vec![0; groups.len()];
    for g in Group::BOTH {
        let mut idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        SplitMix64::new(derive_seed(seed, g.index() as u64)).shuffle(&mut idx);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    assignment
}

/// Cross-validated logistic attacker predicting `s` from the features, the
/// score, the decision and the outcome, whichever are available. The fold
/// count shrinks to the smaller group size when needed so every fold holds
/// both groups.
pub fn reconstruction_audit(d: &Dataset, pred: Option<&PredictionSet>, opts: &ReconstructionOptions) -> Result<ReconstructionAuditResult> {
    d.require_both_groups()?;
    if opts.folds < 2 {
        return Err(Error::invalid("reconstruction audit needs at least two folds"));
    }
    if let Some(p) = pred {
        p.check_aligned(d)?;
    }
    let folds = opts.folds.min(d.group_size(Group::Zero)).min(d.group_size(Group::One));
    if folds < 2 {
        return Err(Error::degenerate("a group has a single record; cannot cross-validate"));
    }
    let mut inputs: Vec<String> = d.feature_names().to_vec();
    let scores = if d.has_scores() { Some(d.scores()?) } else { None };
    if scores.is_some() {
        inputs.push("score".into());
    }
    if pred.is_some() {
        inputs.push("decision".into());
    }
    inputs.push("y".into());
    // Attacker data: the label is `s`; `s` itself stays in the group slot
    // only so the records remain valid, it is not an input.
    let records: Vec<Record> = d
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut x = r.features.clone();
            if let Some(m) = &scores {
                x.push(m[i]);
            }
            if let Some(p) = pred {
                x.push(p.probs()[i]);
            }
            x.push(r.y as u8 as f64);
            Record::new(r.s, r.s == Group::One, None).with_features(x).with_weight(r.weight)
        })
        .collect();
    let attack = Dataset::new(records, inputs.clone())?;
    let assignment = stratified_folds(&d.groups(), folds, opts.seed);
    let train_opts = TrainOptions {
        l2: opts.l2,
        ..TrainOptions::default()
    };
    let fold_aucs = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..d.len()).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..d.len()).filter(|&i| assignment[i] == f).collect();
            let fit = train_logistic(&attack.subset(&train)?, PenaltySpec::None, &train_opts)?;
            let held = attack.subset(&test)?;
            let m = fit.model.predict(&held)?;
            Ok(auc(&roc_from_scores(&m, &held.labels(), &held.weights())?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ReconstructionAuditResult {
        auc: fold_aucs.iter().sum::<f64>() / folds as f64,
        fold_aucs,
        folds,
        seed: opts.seed,
        inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn featured(rows: &[(u8, u8, f64, Vec<f64>)]) -> Dataset {
        let p = rows[0].3.len();
        let records = rows
            .iter()
            .map(|(s, y, m, x)| Record::new(Group::from_index(*s as usize), *y == 1, Some(*m)).with_features(x.clone()))
            .collect();
        Dataset::new(records, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
    }

    fn random_rows(n: usize, seed: u64, score: impl Fn(&[f64]) -> f64) -> Vec<(u8, u8, f64, Vec<f64>)> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| {
                let x = vec![rng.standard_normal(), 2.0 * rng.standard_normal(), rng.standard_normal() - 1.0];
                let m = score(&x);
                (rng.bernoulli(0.5) as u8, rng.bernoulli(m) as u8, m, x)
            })
            .collect()
    }

    #[test]
    fn constant_predictions_never_violate() {
        let d = featured(&random_rows(50, 1, |_| 0.4));
        let out = lipschitz_audit(&d, None, &LipschitzOptions::default()).unwrap();
        assert_eq!(out.violations, 0);
        assert_eq!(out.pairs_examined, 50 * 49 / 2);
        assert!(out.exact);
    }

    #[test]
    fn twins_with_different_decisions() {
        let d = featured(&[(0, 1, 0.9, vec![1.0, 2.0]), (1, 0, 0.1, vec![1.0, 2.0]), (0, 0, 0.5, vec![3.0, -1.0])]);
        let pred = PredictionSet::from_decisions(&[true, false, false]);
        let opts = LipschitzOptions {
            metric: OutputMetric::Decision,
            ..LipschitzOptions::default()
        };
        let out = lipschitz_audit(&d, Some(&pred), &opts).unwrap();
        assert_eq!((out.violations, out.zero_distance_violations), (1, 1));
        assert_eq!((out.top_pairs[0].i, out.top_pairs[0].j), (0, 1));
        assert_eq!(out.top_pairs[0].dy, 1.0);
    }

    #[test]
    fn smooth_score_at_its_bound() {
        let a = [0.8, -0.3, 0.5];
        let logistic = |x: &[f64]| 1.0 / (1.0 + (-x.iter().zip(&a).map(|(u, v)| u * v).sum::<f64>()).exp());
        let d = featured(&random_rows(200, 7, logistic));
        // |σ(aᵀx) − σ(aᵀx')| ≤ ¼·|aᵀ(x − x')| ≤ ¼·√(aᵀΣa)·d_x.
        let cov = Mahalanobis::fit(&d).unwrap().covariance().clone();
        let av = DVector::from_column_slice(&a);
        let bound = 0.25 * (av.transpose() * &cov * &av)[(0, 0)].sqrt();
        let opts = LipschitzOptions {
            scale: bound,
            ..LipschitzOptions::default()
        };
        assert_eq!(lipschitz_audit(&d, None, &opts).unwrap().violations, 0);
        let tight = LipschitzOptions {
            scale: bound / 20.0,
            ..LipschitzOptions::default()
        };
        assert!(lipschitz_audit(&d, None, &tight).unwrap().violations > 0);
    }

    #[test]
    fn sampling_above_exact_limit_is_seeded() {
        let d = featured(&random_rows(300, 3, |x| 1.0 / (1.0 + (-x[0]).exp())));
        let opts = LipschitzOptions {
            exact_limit: 100,
            sampled_pairs: 25_000,
            scale: 0.05,
            seed: 11,
            ..LipschitzOptions::default()
        };
        let a = lipschitz_audit(&d, None, &opts).unwrap();
        let b = lipschitz_audit(&d, None, &opts).unwrap();
        assert_eq!(a, b);
        assert!(!a.exact && a.sample_seed == Some(11) && a.pairs_examined == 25_000);
        let exact = lipschitz_audit(&d, None, &LipschitzOptions { exact_limit: 1000, ..opts }).unwrap();
        assert!((a.violation_rate() - exact.violation_rate()).abs() < 0.02);
    }

    #[test]
    fn pairs_csv_lists_top_pairs() {
        let d = featured(&[(0, 1, 0.9, vec![1.0]), (1, 0, 0.1, vec![1.0]), (0, 0, 0.5, vec![3.0])]);
        let out = lipschitz_audit(&d, None, &LipschitzOptions::default()).unwrap();
        let mut buf = Vec::new();
        out.write_pairs_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,dx,dy\n0,1,0,"));
        assert_eq!(text.lines().count(), 1 + out.top_pairs.len());
    }

    #[test]
    fn constant_inputs_give_chance_auc() {
        let rows: Vec<_> = (0..40).map(|i| ((i % 2) as u8, 1u8, 0.3, vec![2.0, -1.0])).collect();
        let d = featured(&rows);
        let pred = PredictionSet::from_decisions(&[false; 40]);
        let out = reconstruction_audit(&d, Some(&pred), &ReconstructionOptions::default()).unwrap();
        assert_eq!(out.auc, 0.5);
        assert_eq!(out.inputs, ["x0", "x1", "score", "decision", "y"]);
    }

    #[test]
    fn leaked_attribute_is_reconstructed() {
        let rows: Vec<_> = random_rows(300, 5, |_| 0.5)
            .into_iter()
            .map(|(s, y, m, mut x)| {
                x.push(s as f64);
                (s, y, m, x)
            })
            .collect();
        let out = reconstruction_audit(&featured(&rows), None, &ReconstructionOptions::default()).unwrap();
        assert!(out.auc >= 0.99, "{out:?}");
    }

    #[test]
    fn independent_inputs_near_chance_and_deterministic() {
        let d = featured(&random_rows(1000, 9, |x| 1.0 / (1.0 + (-x[0]).exp())));
        let opts = ReconstructionOptions {
            seed: 4,
            ..ReconstructionOptions::default()
        };
        let a = reconstruction_audit(&d, None, &opts).unwrap();
        assert!((0.45..=0.55).contains(&a.auc), "{}", a.auc);
        assert_eq!(a, reconstruction_audit(&d, None, &opts).unwrap());
    }

    #[test]
    fn small_group_shrinks_folds() {
        let mut rows = random_rows(30, 2, |_| 0.5);
        for (k, r) in rows.iter_mut().enumerate() {
            r.0 = (k < 3) as u8;
        }
        let out = reconstruction_audit(&featured(&rows), None, &ReconstructionOptions::default()).unwrap();
        assert_eq!(out.folds, 3);
    }

    proptest! {
        #[test]
        fn invariant_to_order_and_feature_scale(seed in 0u64..500, c in 0.01f64..100.0) {
            let rows = random_rows(40, seed, |x| 1.0 / (1.0 + (-x[1]).exp()));
            let opts = LipschitzOptions { scale: 0.1, ..LipschitzOptions::default() };
            let base = lipschitz_audit(&featured(&rows), None, &opts).unwrap().violations;
            let mut reordered = rows.clone();
            reordered.reverse();
            prop_assert_eq!(lipschitz_audit(&featured(&reordered), None, &opts).unwrap().violations, base);
            let scaled: Vec<_> = rows.iter().map(|(s, y, m, x)| (*s, *y, *m, x.iter().map(|v| c * v).collect())).collect();
            prop_assert_eq!(lipschitz_audit(&featured(&scaled), None, &opts).unwrap().violations, base);
        }
    }
}
