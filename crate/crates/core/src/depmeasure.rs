//! Dependence measures: Pearson correlation, Rényi maximal correlation
//! (exact for discrete pairs, alternating-basis estimate otherwise) and
//! mutual information.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{average_ranks, distinct_sorted};

/// Weighted product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("pearson needs two equal-length sequences of length >= 2"));
    }
    let unit = vec![1.0; x.len()];
    let w = w.unwrap_or(&unit);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += w[i] * dx * dy;
        sxx += w[i] * dx * dx;
        syy += w[i] * dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::degenerate("correlation undefined for a constant sequence"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Joint probability table of two discrete variables, rows indexed by the
/// levels of X and columns by the levels of Y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub x_levels: Vec<f64>,
    pub y_levels: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl JointTable {
    /// Table with anonymous levels `0..rows`, `0..cols`.
    pub fn new(p: Vec<Vec<f64>>) -> Result<JointTable> {
        let cols = p.first().map_or(0, Vec::len);
        if p.is_empty() || cols == 0 || p.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("joint table must be a non-empty rectangle"));
        }
        if p.iter().flatten().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("joint probabilities must be non-negative"));
        }
        let total: f64 = p.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("joint probabilities sum to {total}")));
        }
        Ok(JointTable {
            x_levels: (0..p.len()).map(|i| i as f64).collect(),
            y_levels: (0..cols).map(|j| j as f64).collect(),
            p,
        })
    }

    /// Normalizes a table of non-negative counts.
    pub fn from_counts(counts: &[Vec<f64>]) -> Result<JointTable> {
        let total: f64 = counts.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("count table is empty"));
        }
        JointTable::new(counts.iter().map(|r| r.iter().map(|c| c / total).collect()).collect())
    }

    /// Empirical (weighted) joint of paired observations.
    pub fn from_samples(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<JointTable> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::invalid("samples must be non-empty and equal in length"));
        }
        let xl = distinct_sorted(x);
        let yl = distinct_sorted(y);
        let index = |levels: &[f64], v: f64| levels.partition_point(|&l| l < v);
        let mut counts = vec![vec![0.0; yl.len()]; xl.len()];
        for i in 0..x.len() {
            counts[index(&xl, x[i])][index(&yl, y[i])] += w.map_or(1.0, |w| w[i]);
        }
        let mut t = JointTable::from_counts(&counts)?;
        t.x_levels = xl;
        t.y_levels = yl;
        Ok(t)
    }

    pub fn px(&self) -> Vec<f64> {
        self.p.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn py(&self) -> Vec<f64> {
        (0..self.y_levels.len())
            .map(|j| self.p.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// `σ₁` of `B_ij = p_ij / √(p_i p_j) − √(p_i p_j)`: the normalized table
/// with its trivial singular pair (value 1, constant functions) removed.
pub fn maximal_correlation_exact(t: &JointTable) -> f64 {
    let px = t.px();
    let py = t.py();
    let rows: Vec<usize> = (0..px.len()).filter(|&i| px[i] > 0.0).collect();
    let cols: Vec<usize> = (0..py.len()).filter(|&j| py[j] > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return 0.0;
    }
    let b = DMatrix::from_fn(rows.len(), cols.len(), |a, c| {
        let (i, j) = (rows[a], cols[c]);
        let q = (px[i] * py[j]).sqrt();
        t.p[i][j] / q - q
    });
    b.singular_values().max().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// Indicators of equal-count bins over the ranks.
    IndicatorBins,
    /// Legendre polynomials of the rescaled ranks, degrees `1..=size`.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub size: usize,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for BasisSpec {
    fn default() -> BasisSpec {
        BasisSpec {
            family: BasisFamily::IndicatorBins,
            size: 16,
            tolerance: 1e-8,
            max_iter: 500,
        }
    }
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("basis needs size >= 1, tolerance > 0, max_iter >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxCorrResult {
    pub value: f64,
    /// Closed-form discrete solution rather than the iterative estimate.
    pub exact: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Rescaled mid-ranks in `(0, 1)`; tied values share a level.
fn rank_levels(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    average_ranks(v).into_iter().map(|r| (r - 0.5) / n).collect()
}

/// Raw (uncentred) basis columns for one variable.
pub fn basis_matrix(v: &[f64], spec: &BasisSpec) -> DMatrix<f64> {
    let u = rank_levels(v);
    let n = v.len();
    match spec.family {
        BasisFamily::IndicatorBins => {
            let levels = distinct_sorted(v);
            if levels.len() <= spec.size {
                // Few levels: one indicator per level.
                let idx: Vec<usize> = v.iter().map(|x| levels.partition_point(|&l| l < *x)).collect();
                DMatrix::from_fn(n, levels.len(), |i, j| if idx[i] == j { 1.0 } else { 0.0 })
            } else {
                let k = spec.size;
                DMatrix::from_fn(n, k, |i, j| {
                    let bin = ((u[i] * k as f64) as usize).min(k - 1);
                    if bin == j {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
        }
        BasisFamily::Polynomial => {
            let mut m = DMatrix::zeros(n, spec.size);
            for i in 0..n {
                let t = 2.0 * u[i] - 1.0;
                let (mut p0, mut p1) = (1.0, t);
                m[(i, 0)] = p1;
                for j in 1..spec.size {
                    let deg = j as f64;
                    let p2 = ((2.0 * deg + 1.0) * t * p1 - deg * p0) / (deg + 1.0);
                    m[(i, j)] = p2;
                    p0 = p1;
                    p1 = p2;
                }
            }
            m
        }
    }
}

/// Weighted-centred, weighted-orthonormal columns spanning the basis:
/// `Qᵀ W Q = I`. Returned pre-multiplied by `√W` for convenience.
fn orthonormal_span(raw: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let sw: f64 = w.iter().sum();
    let (n, k) = raw.shape();
    let mut a = DMatrix::zeros(n, k);
    for j in 0..k {
        let mean = (0..n).map(|i| w[i] * raw[(i, j)]).sum::<f64>() / sw;
        for i in 0..n {
            a[(i, j)] = (w[i] / sw).sqrt() * (raw[(i, j)] - mean);
        }
    }
    // Modified Gram–Schmidt with rank detection is enough here: column
    // counts are small and dependent columns (e.g. the last indicator after
    // centring) must be dropped, not merely down-weighted.
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(k);
    let scale = (0..k).map(|j| a.column(j).norm()).fold(0.0, f64::max);
    for j in 0..k {
        let mut v = a.column(j).into_owned();
        for _ in 0..2 {
            for b in &q {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * scale.max(1e-300) {
            q.push(v / norm);
        }
    }
    if q.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&q)
    }
}

/// Alternating conditional-expectation estimate: with `f = Q_x a`,
/// `g = Q_y b`, alternately project `g` onto the span of X's basis and `f`
/// onto Y's, normalizing each time. This is power iteration on
/// `C = Q_xᵀ W Q_y` and converges to its largest singular value.
pub fn ace_maximal_correlation(x: &[f64], y: &[f64], w: Option<&[f64]>, basis: &BasisSpec) -> Result<MaxCorrResult> {
    basis.validate()?;
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("maximal correlation needs equal-length samples"));
    }
    let unit = vec![1.0; x.len()];
    let w = w.unwrap_or(&unit);
    let qx = orthonormal_span(&basis_matrix(x, basis), w);
    let qy = orthonormal_span(&basis_matrix(y, basis), w);
    if qx.ncols() == 0 || qy.ncols() == 0 {
        return Err(Error::degenerate("maximal correlation undefined for a constant variable"));
    }
    let c = qx.transpose() * &qy;
    // Deterministic, non-degenerate start.
    let mut a = DVector::from_fn(c.nrows(), |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    a /= a.norm();
    let mut value = 0.0;
    for it in 1..=basis.max_iter {
        let mut b = c.transpose() * &a;
        let nb = b.norm();
        if nb == 0.0 {
            return Ok(MaxCorrResult {
                value: 0.0,
                exact: false,
                converged: true,
                iterations: it,
            });
        }
        b /= nb;
        let mut next = &c * &b;
        let rho = next.norm();
        next /= rho;
        a = next;
        let change = (rho - value).abs();
        value = rho;
        if change <= basis.tolerance * rho.max(f64::MIN_POSITIVE) {
            return Ok(MaxCorrResult {
                value: value.clamp(0.0, 1.0),
                exact: false,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(MaxCorrResult {
        value: value.clamp(0.0, 1.0),
        exact: false,
        converged: false,
        iterations: basis.max_iter,
    })
}

/// Exact table solution when both variables have at most `basis.size`
/// distinct values; the alternating estimate otherwise.
pub fn maximal_correlation(x: &[f64], y: &[f64], basis: &BasisSpec) -> Result<MaxCorrResult> {
    basis.validate()?;
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("maximal correlation needs equal-length samples"));
    }
    let (lx, ly) = (distinct_sorted(x).len(), distinct_sorted(y).len());
    if lx < 2 || ly < 2 {
        return Err(Error::degenerate("maximal correlation undefined for a constant variable"));
    }
    if lx <= basis.size && ly <= basis.size {
        let t = JointTable::from_samples(x, y, None)?;
        return Ok(MaxCorrResult {
            value: maximal_correlation_exact(&t),
            exact: true,
            converged: true,
            iterations: 0,
        });
    }
    ace_maximal_correlation(x, y, None, basis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumValue {
    pub z: f64,
    pub size: usize,
    /// `None` when x or y is constant within the stratum.
    pub value: Option<MaxCorrResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMaxCorr {
    pub strata: Vec<StratumValue>,
    pub max: f64,
}

pub fn conditional_maximal_correlation(
    x: &[f64],
    y: &[f64],
    z: &[f64],
    basis: &BasisSpec,
) -> Result<ConditionalMaxCorr> {
    if x.len() != y.len() || x.len() != z.len() {
        return Err(Error::invalid("x, y and z differ in length"));
    }
    let mut by_z: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for (i, &zi) in z.iter().enumerate() {
        // Order strata numerically: map the float to an order-preserving key.
        let bits = zi.to_bits();
        let key = if zi.is_sign_negative() { !bits } else { bits | (1 << 63) };
        by_z.entry(key).or_insert((zi, Vec::new())).1.push(i);
    }
    let mut strata = Vec::new();
    for (_, (zv, idx)) in by_z {
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let value = match maximal_correlation(&xs, &ys, basis) {
            Ok(v) => Some(v),
            Err(Error::Degenerate(_)) | Err(Error::InvalidArgument(_)) => None,
            Err(e) => return Err(e),
        };
        strata.push(StratumValue {
            z: zv,
            size: idx.len(),
            value,
        });
    }
    let max = strata
        .iter()
        .filter_map(|s| s.value.map(|v| v.value))
        .reduce(f64::max)
        .ok_or_else(|| Error::degenerate("every stratum is degenerate"))?;
    Ok(ConditionalMaxCorr { strata, max })
}

/// Plug-in mutual information in nats, `0 log 0 = 0`.
pub fn mutual_information_table(t: &JointTable) -> f64 {
    let px = t.px();
    let py = t.py();
    let mut mi = 0.0;
    for (i, row) in t.p.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

pub fn mutual_information(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<f64> {
    Ok(mutual_information_table(&JointTable::from_samples(x, y, w)?))
}
