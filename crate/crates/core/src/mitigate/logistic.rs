//! Linear score models and (penalized) maximum-likelihood training.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::depmeasure::{BasisFamily, BasisSpec};
use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
    Probit,
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `ln Φ(x)`, with the asymptotic series far in the left tail.
fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `φ(x) / Φ(x)`.
fn mills_inverse(x: f64) -> f64 {
    if x > -30.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        let x2 = x * x;
        -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logistic => sigmoid(eta),
            Link::Probit => norm_cdf(eta),
        }
    }

    fn derivative(self, eta: f64) -> f64 {
        match self {
            Link::Logistic => {
                let m = sigmoid(eta);
                m * (1.0 - m)
            }
            Link::Probit => norm_pdf(eta),
        }
    }

    /// Negative log-likelihood of one outcome and its derivative in `eta`.
    fn loss(self, eta: f64, y: f64) -> (f64, f64) {
        match self {
            Link::Logistic => (softplus(eta) - y * eta, sigmoid(eta) - y),
            Link::Probit => {
                let pos = -log_norm_cdf(eta);
                let neg = -log_norm_cdf(-eta);
                (
                    y * pos + (1.0 - y) * neg,
                    -y * mills_inverse(eta) + (1.0 - y) * mills_inverse(-eta),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// `m(x) = link⁻¹(intercept + xᵀβ)` on the original feature scale. Missing
/// feature values are replaced by the training mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub link: Link,
    pub standardization: Standardization,
}

impl LinearModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coefficients)
                .zip(&self.standardization.means)
                .map(|((&v, b), mean)| b * if v.is_nan() { *mean } else { v })
                .sum::<f64>()
    }

    /// Score strictly inside `(0, 1)`.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.link
            .inverse(self.linear_predictor(x))
            .clamp(f64::EPSILON / 2.0, 1.0 - f64::EPSILON / 2.0)
    }

    pub fn predict(&self, d: &Dataset) -> Result<Vec<f64>> {
        if d.feature_names().len() != self.coefficients.len() {
            return Err(Error::invalid(format!(
                "model has {} coefficients but the data {} features",
                self.coefficients.len(),
                d.feature_names().len()
            )));
        }
        Ok(d.records().iter().map(|r| self.predict_row(&r.features)).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LinearModel> {
        let model: LinearModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if model.coefficients.len() != model.feature_names.len()
            || model.standardization.means.len() != model.coefficients.len()
        {
            return Err(Error::invalid("model file has inconsistent lengths"));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    None,
    /// `λ · cor(m, s)²`.
    DpCorrelation { lambda: f64 },
    /// `λ₀ · cor(m, s | y=0)² + λ₁ · cor(m, s | y=1)²`.
    EoCorrelation { lambda0: f64, lambda1: f64 },
    /// `λ · R²` of `s` regressed on polynomials of the score — the squared
    /// maximal correlation restricted to that basis.
    DpMaxCorrelation { lambda: f64, basis: BasisSpec },
}

impl PenaltySpec {
    fn validate(&self) -> Result<()> {
        let ok = |l: f64| l >= 0.0 && l.is_finite();
        let valid = match self {
            PenaltySpec::None => true,
            PenaltySpec::DpCorrelation { lambda } => ok(*lambda),
            PenaltySpec::EoCorrelation { lambda0, lambda1 } => ok(*lambda0) && ok(*lambda1),
            PenaltySpec::DpMaxCorrelation { lambda, basis } => {
                basis.validate()?;
                if basis.family != BasisFamily::Polynomial {
                    return Err(Error::invalid(
                        "the maximal-correlation penalty needs a polynomial basis (indicators are not differentiable)",
                    ));
                }
                ok(*lambda)
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::invalid("penalty weights must be finite and non-negative"))
        }
    }
}

/// Highest polynomial degree used by the maximal-correlation penalty.
pub const MAX_PENALTY_DEGREE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub link: Link,
    /// Length of the first (steepest-descent) step, relative to the
    /// largest gradient component.
    pub step: f64,
    /// Stop once the largest gradient component falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Ridge weight on the standardized slopes.
    pub l2: f64,
}

impl Default for TrainOptions {
    fn default() -> TrainOptions {
        TrainOptions {
            link: Link::Logistic,
            step: 1.0,
            tolerance: 1e-10,
            max_iter: 2_000,
            l2: 0.0,
        }
    }
}

/// Standardized training problem. Parameters are `[intercept, slopes...]`
/// on the standardized feature scale.
#[derive(Debug, Clone)]
pub struct Objective {
    z: DMatrix<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    /// Weights normalized to sum to one.
    w: Vec<f64>,
    link: Link,
    penalty: PenaltySpec,
    l2: f64,
    standardization: Standardization,
}

/// `cor²` over the masked records with its gradient in the scores.
fn cor2_with_gradient(m: &[f64], s: &[f64], w: &[f64], mask: impl Fn(usize) -> bool) -> (f64, Vec<f64>) {
    let n = m.len();
    let mut grad = vec![0.0; n];
    let sw: f64 = (0..n).filter(|&i| mask(i)).map(|i| w[i]).sum();
    if sw <= 0.0 {
        return (0.0, grad);
    }
    let (mut mm, mut ms) = (0.0, 0.0);
    for i in (0..n).filter(|&i| mask(i)) {
        mm += w[i] * m[i];
        ms += w[i] * s[i];
    }
    mm /= sw;
    ms /= sw;
    let (mut cov, mut vm, mut vs) = (0.0, 0.0, 0.0);
    for i in (0..n).filter(|&i| mask(i)) {
        let (a, b) = (m[i] - mm, s[i] - ms);
        cov += w[i] * a * b;
        vm += w[i] * a * a;
        vs += w[i] * b * b;
    }
    cov /= sw;
    vm /= sw;
    vs /= sw;
    if vm <= 1e-300 || vs <= 0.0 {
        return (0.0, grad);
    }
    let c2 = cov * cov / (vm * vs);
    for i in (0..n).filter(|&i| mask(i)) {
        let u = w[i] / sw;
        grad[i] = 2.0 * cov / (vm * vs) * u * (s[i] - ms) - c2 / vm * 2.0 * u * (m[i] - mm);
    }
    (c2, grad)
}

/// `R²` of `s` on `(2m − 1)^j`, `j = 1..=degree`, with intercept, and its
/// gradient in the scores (envelope argument: the fitted coefficients are
/// held fixed).
fn r2_with_gradient(m: &[f64], s: &[f64], w: &[f64], degree: usize) -> (f64, Vec<f64>) {
    let n = m.len();
    let mut grad = vec![0.0; n];
    let ms: f64 = (0..n).map(|i| w[i] * s[i]).sum();
    let tss: f64 = (0..n).map(|i| w[i] * (s[i] - ms).powi(2)).sum();
    if tss <= 0.0 {
        return (0.0, grad);
    }
    let mut phi = DMatrix::zeros(n, degree);
    for j in 0..degree {
        let col_mean: f64 = (0..n).map(|i| w[i] * (2.0 * m[i] - 1.0).powi(j as i32 + 1)).sum();
        for i in 0..n {
            phi[(i, j)] = w[i].sqrt() * ((2.0 * m[i] - 1.0).powi(j as i32 + 1) - col_mean);
        }
    }
    let scale = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale <= 1e-150 {
        return (0.0, grad);
    }
    let target = DVector::from_fn(n, |i, _| w[i].sqrt() * (s[i] - ms));
    let svd = phi.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let beta = match svd.solve(&target, 1e-12 * max_sv) {
        Ok(b) => b,
        Err(_) => return (0.0, grad),
    };
    let resid = &target - &phi * &beta;
    let rss = resid.norm_squared();
    for i in 0..n {
        let t = 2.0 * m[i] - 1.0;
        let slope: f64 = (0..degree)
            .map(|j| beta[j] * 2.0 * (j as f64 + 1.0) * t.powi(j as i32))
            .sum();
        // resid is √w-scaled: w_i r_i = √w_i · resid_i.
        grad[i] = 2.0 * w[i].sqrt() * resid[i] * slope / tss;
    }
    (1.0 - rss / tss, grad)
}

impl Objective {
    pub fn new(d: &Dataset, penalty: PenaltySpec, link: Link, l2: f64) -> Result<Objective> {
        penalty.validate()?;
        let p = d.feature_names().len();
        if p == 0 {
            return Err(Error::invalid("training needs at least one feature column"));
        }
        let labels = d.labels();
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            return Err(Error::SingleClass(" in training labels".into()));
        }
        let weights = d.weights();
        let total: f64 = weights.iter().sum();
        let w: Vec<f64> = weights.iter().map(|v| v / total).collect();
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        for j in 0..p {
            let col = d.feature_column(j);
            let (mut sw, mut sum) = (0.0, 0.0);
            for (v, wi) in col.iter().zip(&w) {
                if !v.is_nan() {
                    sw += wi;
                    sum += wi * v;
                }
            }
            means[j] = if sw > 0.0 { sum / sw } else { 0.0 };
            let var: f64 = col
                .iter()
                .zip(&w)
                .filter(|(v, _)| !v.is_nan())
                .map(|(v, wi)| wi * (v - means[j]).powi(2))
                .sum::<f64>()
                / sw.max(f64::MIN_POSITIVE);
            if var > 0.0 {
                scales[j] = var.sqrt();
            }
        }
        let z = DMatrix::from_fn(d.len(), p, |i, j| {
            let v = d.records()[i].features[j];
            if v.is_nan() {
                0.0
            } else {
                (v - means[j]) / scales[j]
            }
        });
        Ok(Objective {
            z,
            y: labels.iter().map(|&b| b as u8 as f64).collect(),
            s: d.groups().iter().map(|g| g.index() as f64).collect(),
            w,
            link,
            penalty,
            l2,
            standardization: Standardization { means, scales },
        })
    }

    fn with_penalty(&self, penalty: PenaltySpec) -> Objective {
        Objective { penalty, ..self.clone() }
    }

    /// Number of parameters (intercept included).
    pub fn dim(&self) -> usize {
        self.z.ncols() + 1
    }

    fn eta(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.z.nrows())
            .map(|i| theta[0] + (0..self.z.ncols()).map(|j| self.z[(i, j)] * theta[j + 1]).sum::<f64>())
            .collect()
    }

    /// Weighted mean loss, ridge term and fairness penalty.
    pub fn parts(&self, theta: &[f64]) -> (f64, f64, f64) {
        let eta = self.eta(theta);
        let loss: f64 = eta.iter().zip(&self.y).zip(&self.w).map(|((&e, &y), &w)| w * self.link.loss(e, y).0).sum();
        let ridge = 0.5 * self.l2 * theta[1..].iter().map(|b| b * b).sum::<f64>();
        let m: Vec<f64> = eta.iter().map(|&e| self.link.inverse(e)).collect();
        (loss, ridge, self.penalty_terms(&m).0)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let (a, b, c) = self.parts(theta);
        a + b + c
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.value_and_gradient(theta).1
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let eta = self.eta(theta);
        let m: Vec<f64> = eta.iter().map(|&e| self.link.inverse(e)).collect();
        let (pen, dpen) = self.penalty_terms(&m);
        let mut grad = vec![0.0; self.dim()];
        let mut loss = 0.0;
        for i in 0..eta.len() {
            let (l, dl) = self.link.loss(eta[i], self.y[i]);
            loss += self.w[i] * l;
            let coef = self.w[i] * dl + dpen[i] * self.link.derivative(eta[i]);
            grad[0] += coef;
            for j in 0..self.z.ncols() {
                grad[j + 1] += coef * self.z[(i, j)];
            }
        }
        for j in 1..grad.len() {
            grad[j] += self.l2 * theta[j];
        }
        let ridge = 0.5 * self.l2 * theta[1..].iter().map(|b| b * b).sum::<f64>();
        (loss + ridge + pen, grad)
    }

    fn penalty_terms(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let n = m.len();
        match self.penalty {
            PenaltySpec::None => (0.0, vec![0.0; n]),
            PenaltySpec::DpCorrelation { lambda } => {
                let (c2, g) = cor2_with_gradient(m, &self.s, &self.w, |_| true);
                (lambda * c2, g.into_iter().map(|v| lambda * v).collect())
            }
            PenaltySpec::EoCorrelation { lambda0, lambda1 } => {
                let (c0, g0) = cor2_with_gradient(m, &self.s, &self.w, |i| self.y[i] == 0.0);
                let (c1, g1) = cor2_with_gradient(m, &self.s, &self.w, |i| self.y[i] == 1.0);
                (
                    lambda0 * c0 + lambda1 * c1,
                    g0.iter().zip(&g1).map(|(a, b)| lambda0 * a + lambda1 * b).collect(),
                )
            }
            PenaltySpec::DpMaxCorrelation { lambda, basis } => {
                let (r2, g) = r2_with_gradient(m, &self.s, &self.w, basis.size.min(MAX_PENALTY_DEGREE));
                (lambda * r2, g.into_iter().map(|v| lambda * v).collect())
            }
        }
    }

    /// Model on the original feature scale from standardized parameters.
    pub fn model(&self, theta: &[f64], feature_names: Vec<String>) -> LinearModel {
        let st = &self.standardization;
        let coefficients: Vec<f64> = theta[1..].iter().zip(&st.scales).map(|(g, s)| g / s).collect();
        let intercept = theta[0] - coefficients.iter().zip(&st.means).map(|(b, m)| b * m).sum::<f64>();
        LinearModel {
            feature_names,
            coefficients,
            intercept,
            link: self.link,
            standardization: st.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub iterations: usize,
    pub converged: bool,
    /// The divergence guard (standardized coefficient norm 10³) fired.
    pub diverged: bool,
    pub objective: f64,
    pub loss: f64,
    pub penalty: f64,
}

/// Norm of the standardized slopes at which training stops as divergent.
pub const DIVERGENCE_NORM: f64 = 1e3;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Minimum {
    theta: Vec<f64>,
    iterations: usize,
    converged: bool,
    diverged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean loss below which the data count as separated: the likelihood has
/// no maximizer and the slopes would grow without bound.
const SEPARATION_LOSS: f64 = 1e-7;

/// Limited-memory BFGS with Armijo backtracking from `theta`.
fn minimize(obj: &Objective, mut theta: Vec<f64>, opts: &TrainOptions) -> Minimum {
    const MEMORY: usize = 10;
    let (mut f, mut g) = obj.value_and_gradient(&theta);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut out = Minimum {
        theta: Vec::new(),
        iterations: 0,
        converged: false,
        diverged: false,
    };
    while out.iterations < opts.max_iter {
        if max_abs(&g) < opts.tolerance {
            out.converged = true;
            break;
        }
        out.iterations += 1;
        // Two-loop recursion for the quasi-Newton direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (sk, yk, rho) in history.iter().rev() {
            let a = rho * dot(sk, &q);
            q.iter_mut().zip(yk).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history.back().map_or(opts.step / max_abs(&g).max(1.0), |(sk, yk, _)| dot(sk, yk) / dot(yk, yk));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((sk, yk, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yk, &q);
            q.iter_mut().zip(sk).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let (fc, gc) = obj.value_and_gradient(&cand);
            // Near the optimum the decrease drops below the resolution of
            // `f`; a flat value with a smaller gradient still counts.
            let flat = (fc - f).abs() <= 4.0 * f64::EPSILON * f.abs().max(1.0) && max_abs(&gc) < max_abs(&g);
            if fc.is_finite() && (fc <= f + 1e-4 * t * slope || flat) {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            // No representable decrease left along a descent direction.
            out.converged = max_abs(&g) < opts.tolerance.max(1e-8);
            break;
        };
        let sk: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yk: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sk, &yk);
        if sy > 1e-12 * dot(&sk, &sk).sqrt() * dot(&yk, &yk).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((sk, yk, 1.0 / sy));
        }
        theta = cand;
        f = fc;
        g = gc;
        if theta[1..].iter().map(|b| b * b).sum::<f64>().sqrt() >= DIVERGENCE_NORM {
            out.diverged = true;
            break;
        }
    }
    if !out.diverged && obj.parts(&theta).0 < SEPARATION_LOSS {
        out.diverged = true;
        out.converged = false;
    }
    out.theta = theta;
    out
}

/// Penalized maximum likelihood. The penalties are scale-free in the slopes
/// and vanish at the constant model, so the search starts from the
/// unpenalized optimum rather than from zero.
pub fn train_logistic(d: &Dataset, penalty: PenaltySpec, opts: &TrainOptions) -> Result<TrainOutcome> {
    let obj = Objective::new(d, penalty, opts.link, opts.l2)?;
    let mut start = minimize(&obj.with_penalty(PenaltySpec::None), vec![0.0; obj.dim()], opts);
    let result = if penalty == PenaltySpec::None || start.diverged {
        start
    } else {
        let iterations = start.iterations;
        start = minimize(&obj, std::mem::take(&mut start.theta), opts);
        start.iterations += iterations;
        start
    };
    let (loss, ridge, pen) = obj.parts(&result.theta);
    Ok(TrainOutcome {
        model: obj.model(&result.theta, d.feature_names().to_vec()),
        iterations: result.iterations,
        converged: result.converged,
        diverged: result.diverged,
        objective: loss + ridge + pen,
        loss,
        penalty: pen,
    })
}

/// Unpenalized logistic maximum likelihood by Newton's method — an
/// independent reference for [`train_logistic`].
pub fn fit_logistic_newton(d: &Dataset) -> Result<LinearModel> {
    let obj = Objective::new(d, PenaltySpec::None, Link::Logistic, 0.0)?;
    let (n, p) = (obj.z.nrows(), obj.dim());
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { obj.z[(i, j - 1)] });
    let mut theta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = &x * &theta;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let m = sigmoid(eta[i]);
            let row = x.row(i).transpose();
            grad += &row * (obj.w[i] * (m - obj.y[i]));
            hess += &row * row.transpose() * (obj.w[i] * m * (1.0 - m));
        }
        let Some(chol) = hess.cholesky() else {
            return Err(Error::degenerate("singular Hessian (separable data?)"));
        };
        let delta = chol.solve(&grad);
        theta -= &delta;
        if delta.amax() < 1e-14 || grad.amax() < 1e-15 {
            break;
        }
        if theta.amax() > DIVERGENCE_NORM {
            return Err(Error::degenerate("Newton iterates diverge (separable data?)"));
        }
    }
    Ok(obj.model(theta.as_slice(), d.feature_names().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Group, Record};
    use crate::depmeasure::pearson;
    use crate::rng::SplitMix64;

    fn logistic_data(n: usize, beta: &[f64], intercept: f64, seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let records = (0..n)
            .map(|_| {
                let x: Vec<f64> = beta.iter().map(|_| rng.standard_normal()).collect();
                let eta = intercept + x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
                let s = if rng.bernoulli(0.5) { Group::One } else { Group::Zero };
                Record::new(s, rng.bernoulli(sigmoid(eta)), None).with_features(x)
            })
            .collect();
        let names = (0..beta.len()).map(|j| format!("x{j}")).collect();
        Dataset::new(records, names).unwrap()
    }

    /// Features where `x0` carries the sensitive attribute.
    fn biased_data(n: usize, seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let records = (0..n)
            .map(|_| {
                let s = rng.bernoulli(0.5);
                let x0 = rng.standard_normal() + if s { 1.0 } else { 0.0 };
                let x1 = rng.standard_normal();
                let x2 = rng.standard_normal();
                let eta = x0 - 0.5 * x1 + 0.3 * x2;
                let g = if s { Group::One } else { Group::Zero };
                Record::new(g, rng.bernoulli(sigmoid(eta)), None).with_features(vec![x0, x1, x2]).with_weight(1.0 + (x2 > 0.0) as u8 as f64)
            })
            .collect();
        Dataset::new(records, vec!["x0".into(), "x1".into(), "x2".into()]).unwrap()
    }

    #[test]
    fn recovers_known_coefficients() {
        let beta = [1.0, -1.5, 2.0];
        let d = logistic_data(10_000, &beta, -0.5, 17);
        let fit = train_logistic(&d, PenaltySpec::None, &TrainOptions::default()).unwrap();
        assert!(fit.converged);
        let err: f64 = fit.model.coefficients.iter().zip(&beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(err / norm < 0.05, "{:?}", fit.model.coefficients);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = biased_data(300, 3);
        let basis = BasisSpec {
            family: BasisFamily::Polynomial,
            size: 4,
            ..BasisSpec::default()
        };
        let penalties = [
            PenaltySpec::None,
            PenaltySpec::DpCorrelation { lambda: 5.0 },
            PenaltySpec::EoCorrelation { lambda0: 2.0, lambda1: 3.0 },
            PenaltySpec::DpMaxCorrelation { lambda: 4.0, basis },
        ];
        let mut rng = SplitMix64::new(99);
        for pen in penalties {
            for link in [Link::Logistic, Link::Probit] {
                let obj = Objective::new(&d, pen, link, 0.1).unwrap();
                for _ in 0..10 {
                    let theta: Vec<f64> = (0..obj.dim()).map(|_| rng.standard_normal()).collect();
                    let g = obj.gradient(&theta);
                    for k in 0..theta.len() {
                        let h = 1e-6;
                        let mut up = theta.clone();
                        let mut dn = theta.clone();
                        up[k] += h;
                        dn[k] -= h;
                        let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
                        let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                        assert!(rel < 1e-5, "{pen:?} {link:?} k={k}: {fd} vs {}", g[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_penalty_matches_newton() {
        let d = biased_data(2_000, 5);
        let newton = fit_logistic_newton(&d).unwrap();
        for pen in [PenaltySpec::None, PenaltySpec::DpCorrelation { lambda: 0.0 }] {
            let gd = train_logistic(&d, pen, &TrainOptions::default()).unwrap();
            assert!(gd.converged);
            for (a, b) in gd.model.coefficients.iter().zip(&newton.coefficients) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
            assert!((gd.model.intercept - newton.intercept).abs() < 1e-8);
        }
    }

    #[test]
    fn strong_dp_penalty_decorrelates() {
        let d = biased_data(4_000, 11);
        let s: Vec<f64> = d.groups().iter().map(|g| g.index() as f64).collect();
        let plain = train_logistic(&d, PenaltySpec::None, &TrainOptions::default()).unwrap();
        let before = pearson(&plain.model.predict(&d).unwrap(), &s, Some(&d.weights())).unwrap();
        let fair = train_logistic(&d, PenaltySpec::DpCorrelation { lambda: 1e3 }, &TrainOptions::default()).unwrap();
        let after = pearson(&fair.model.predict(&d).unwrap(), &s, Some(&d.weights())).unwrap();
        assert!(before.abs() > 0.2, "{before}");
        assert!(after.abs() <= 0.05, "{after}");
    }

    #[test]
    fn separable_data_trips_guard() {
        let records: Vec<Record> = (0..40)
            .map(|i| {
                let x = i as f64 - 19.5;
                Record::new(Group::from_index(i % 2), x > 0.0, None).with_features(vec![x])
            })
            .collect();
        let d = Dataset::new(records, vec!["x".into()]).unwrap();
        let fit = train_logistic(&d, PenaltySpec::None, &TrainOptions::default()).unwrap();
        assert!(fit.diverged && !fit.converged);
    }

    #[test]
    fn model_json_roundtrip() {
        let d = biased_data(200, 1);
        let fit = train_logistic(&d, PenaltySpec::None, &TrainOptions::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("fairaudit-model-{}.json", std::process::id()));
        fit.model.save(&dir).unwrap();
        let back = LinearModel::load(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(back, fit.model);
        let p = back.predict(&d).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn indicator_basis_rejected_for_penalty() {
        let d = biased_data(50, 2);
        let pen = PenaltySpec::DpMaxCorrelation {
            lambda: 1.0,
            basis: BasisSpec::default(),
        };
        assert!(train_logistic(&d, pen, &TrainOptions::default()).is_err());
    }
}
