//! Seeded synthetic data: per-(y, s) Beta score laws, the truncation
//! invariance of power-law densities, and a benchmark for penalized
//! training.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::data::{Dataset, Group, Record};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::stats::{ks_critical_value, ks_distance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaCell {
    pub alpha: f64,
    pub beta: f64,
    /// `P[Y=y, S=s]`.
    pub probability: f64,
}

/// Score law `Beta(α_ys, β_ys)` in each `(y, s)` cell; `cells[y][s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub cells: [[BetaCell; 2]; 2],
}

impl BetaSpec {
    /// The same score law for both groups, with `P[Y=1] = base_rate` and
    /// `P[S=1] = group_share` independent of each other.
    pub fn symmetric(negative: (f64, f64), positive: (f64, f64), base_rate: f64, group_share: f64) -> BetaSpec {
        let cell = |(alpha, beta): (f64, f64), py: f64, ps: f64| BetaCell {
            alpha,
            beta,
            probability: py * ps,
        };
        BetaSpec {
            cells: [
                [cell(negative, 1.0 - base_rate, 1.0 - group_share), cell(negative, 1.0 - base_rate, group_share)],
                [cell(positive, base_rate, 1.0 - group_share), cell(positive, base_rate, group_share)],
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for (y, row) in self.cells.iter().enumerate() {
            for (s, c) in row.iter().enumerate() {
                if !(c.alpha > 0.0 && c.beta > 0.0 && c.alpha.is_finite() && c.beta.is_finite()) {
                    return Err(Error::invalid(format!("cell y={y}, s={s}: Beta shapes must be positive")));
                }
                if !(c.probability >= 0.0) {
                    return Err(Error::invalid(format!("cell y={y}, s={s}: negative probability")));
                }
                total += c.probability;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("cell probabilities sum to {total}")));
        }
        Ok(())
    }
}

/// Draws `(y, s)` from the cell probabilities, then the score from the
/// cell's Beta law (ratio of Gamma variates).
pub fn sample_scores(spec: &BetaSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let cells: Vec<(usize, usize, BetaCell)> =
        (0..4).map(|k| (k / 2, k % 2, spec.cells[k / 2][k % 2])).filter(|c| c.2.probability > 0.0).collect();
    let mut rng = SplitMix64::new(seed);
    let records = (0..n)
        .map(|_| {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut pick = cells[cells.len() - 1];
            for c in &cells {
                acc += c.2.probability;
                if u < acc {
                    pick = *c;
                    break;
                }
            }
            let (y, s, cell) = pick;
            let m = rng.beta(cell.alpha, cell.beta);
            Record::new(Group::from_index(s), y == 1, Some(m))
        })
        .collect();
    Dataset::new(records, Vec::new())
}

/// `P[X > t]` for `X ~ Beta(α, β)`.
pub fn beta_tail(alpha: f64, beta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - beta_reg(alpha, beta, t)
    }
}

pub fn beta_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    x.powf(alpha - 1.0) * (1.0 - x).powf(beta - 1.0) * (-ln_beta(alpha, beta)).exp()
}

/// Which shape stays fixed while the other is solved for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedShape {
    Alpha(f64),
    Beta(f64),
}

/// Solves for the free shape so that `P[X > t] = tail` by bisection on the
/// log scale; the tail is increasing in α and decreasing in β, so `f`
/// below is increasing either way.
pub fn fit_beta_tail(t: f64, tail: f64, fixed: FixedShape) -> Result<(f64, f64)> {
    if !(0.0 < t && t < 1.0 && 0.0 < tail && tail < 1.0) {
        return Err(Error::invalid("threshold and tail probability must lie in (0, 1)"));
    }
    let f = |log_free: f64| {
        let free = log_free.exp();
        match fixed {
            FixedShape::Alpha(a) => tail - beta_tail(a, free, t),
            FixedShape::Beta(b) => beta_tail(free, b, t) - tail,
        }
    };
    let (mut lo, mut hi) = ((1e-3f64).ln(), (1e3f64).ln());
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::degenerate("tail probability not reachable with shapes in [1e-3, 1e3]"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let free = (0.5 * (lo + hi)).exp();
    Ok(match fixed {
        FixedShape::Alpha(a) => (a, free),
        FixedShape::Beta(b) => (free, b),
    })
}

/// Operating point of the credit-scoring ROC illustration: at `τ = 0.6`,
/// TPR 66.3% and FPR 9.6%.
pub const CREDIT_THRESHOLD: f64 = 0.6;
pub const CREDIT_TPR: f64 = 0.663;
pub const CREDIT_FPR: f64 = 0.096;

/// Shapes solved by [`fit_beta_tail`] with the other shape fixed at 2:
/// positives `Beta(α, 2)`, negatives `Beta(2, β)`.
pub const CREDIT_POSITIVE: (f64, f64) = (3.999_667_480_274_615, 2.0);
pub const CREDIT_NEGATIVE: (f64, f64) = (2.0, 3.867_184_682_989_053_3);

/// Balanced classes and groups with identical score laws.
pub fn credit_spec() -> BetaSpec {
    BetaSpec::symmetric(CREDIT_NEGATIVE, CREDIT_POSITIVE, 0.5, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub ks: f64,
    pub retained: usize,
    pub n: usize,
    /// Two-sample KS critical value at the 1% level.
    pub critical_value: f64,
}

impl InvarianceCheck {
    pub fn invariant(&self) -> bool {
        self.ks <= self.critical_value
    }
}

/// Draws `n` values from `Beta(α, β)`, keeps those `≤ p0`, rescales them by
/// `1/p0` and compares them with the full sample. Power laws `c·x^(α−1)`
/// (`β = 1`) are the only densities left unchanged.
pub fn invariance_check(alpha: f64, beta: f64, p0: f64, n: usize, seed: u64) -> Result<InvarianceCheck> {
    if !(0.0 < p0 && p0 < 1.0) {
        return Err(Error::invalid("p0 must lie in (0, 1)"));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid("Beta shapes must be positive"));
    }
    if n < 1000 {
        return Err(Error::invalid("invariance check needs n >= 1000"));
    }
    let mut rng = SplitMix64::new(seed);
    let sample: Vec<f64> = (0..n).map(|_| rng.beta(alpha, beta)).collect();
    let rescaled: Vec<f64> = sample.iter().filter(|&&x| x <= p0).map(|x| x / p0).collect();
    if rescaled.len() < 100 {
        return Err(Error::degenerate(format!(
            "only {} of {n} draws fall below p0; use a larger n",
            rescaled.len()
        )));
    }
    Ok(InvarianceCheck {
        ks: ks_distance(&rescaled, &sample),
        retained: rescaled.len(),
        n,
        critical_value: ks_critical_value(rescaled.len(), n, 0.01),
    })
}

/// Method of moments: `α = m(m(1−m)/v − 1)`, `β = (1−m)(m(1−m)/v − 1)`.
pub fn fit_beta_moments(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if samples.iter().any(|&x| !(0.0 < x && x < 1.0)) {
        return Err(Error::invalid("samples must lie in (0, 1)"));
    }
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    if !(v > 1e-14 * m * (1.0 - m)) || v >= m * (1.0 - m) {
        return Err(Error::degenerate("sample moments admit no Beta law"));
    }
    let k = m * (1.0 - m) / v - 1.0;
    Ok((m * k, (1.0 - m) * k))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `∫₀¹ f` by composite Gauss–Legendre quadrature.
pub fn integrate_unit(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
    let nodes = gauss_legendre(16);
    let h = 1.0 / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = (k as f64 + 0.5) * h;
            nodes.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Density proportional to `x^a (1−x)^b`, normalized numerically.
pub fn power_product_density(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    let kernel = move |x: f64| x.powf(a) * (1.0 - x).powf(b);
    let c = integrate_unit(kernel, 64);
    move |x| kernel(x) / c
}

/// Logistic benchmark for penalized training: `s ~ Bernoulli(½)`, five
/// standard normal features with `x1` shifted by `s`, and
/// `y ~ Bernoulli(σ(x1 − ½x2 + ½x3 − ¼x4 + ¼x5))`.
pub fn penalty_benchmark(n: usize, seed: u64) -> Result<Dataset> {
    const BETA: [f64; 5] = [1.0, -0.5, 0.5, -0.25, 0.25];
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut rng = SplitMix64::new(seed);
    let records = (0..n)
        .map(|_| {
            let s = rng.bernoulli(0.5);
            let mut x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
            x[0] += s as u8 as f64;
            let eta: f64 = x.iter().zip(BETA).map(|(a, b)| a * b).sum();
            let y = rng.bernoulli(1.0 / (1.0 + (-eta).exp()));
            Record::new(if s { Group::One } else { Group::Zero }, y, None).with_features(x)
        })
        .collect();
    Dataset::new(records, (1..=5).map(|j| format!("x{j}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_spec() -> BetaSpec {
        BetaSpec::symmetric((1.0, 1.0), (1.0, 1.0), 0.5, 0.5)
    }

    #[test]
    fn uniform_mean() {
        let d = sample_scores(&uniform_spec(), 100_000, 1).unwrap();
        let mean = d.scores().unwrap().iter().sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn single_cell_is_constant() {
        let mut spec = uniform_spec();
        for row in spec.cells.iter_mut() {
            for c in row.iter_mut() {
                c.probability = 0.0;
            }
        }
        spec.cells[1][0].probability = 1.0;
        let d = sample_scores(&spec, 500, 3).unwrap();
        assert!(d.records().iter().all(|r| r.y && r.s == Group::Zero));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = uniform_spec();
        spec.cells[0][0].alpha = 0.0;
        assert!(sample_scores(&spec, 10, 0).is_err());
        let mut spec = uniform_spec();
        spec.cells[0][0].probability = 0.5;
        assert!(spec.validate().is_err());
        assert!(sample_scores(&uniform_spec(), 0, 0).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let a = sample_scores(&credit_spec(), 2000, 42).unwrap();
        let b = sample_scores(&credit_spec(), 2000, 42).unwrap();
        let c = sample_scores(&credit_spec(), 2000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn credit_shapes_solve_the_tails() {
        let pos = fit_beta_tail(CREDIT_THRESHOLD, CREDIT_TPR, FixedShape::Beta(2.0)).unwrap();
        let neg = fit_beta_tail(CREDIT_THRESHOLD, CREDIT_FPR, FixedShape::Alpha(2.0)).unwrap();
        assert!((pos.0 - CREDIT_POSITIVE.0).abs() < 1e-9, "{pos:?}");
        assert!((neg.1 - CREDIT_NEGATIVE.1).abs() < 1e-9, "{neg:?}");
        assert!((beta_tail(CREDIT_POSITIVE.0, CREDIT_POSITIVE.1, 0.6) - 0.663).abs() < 1e-12);
        assert!((beta_tail(CREDIT_NEGATIVE.0, CREDIT_NEGATIVE.1, 0.6) - 0.096).abs() < 1e-12);
    }

    #[test]
    fn invariance_holds_for_power_laws() {
        let uniform = invariance_check(1.0, 1.0, 0.3, 100_000, 5).unwrap();
        assert!(uniform.ks <= 0.02);
        let cubic = invariance_check(3.0, 1.0, 0.5, 100_000, 6).unwrap();
        assert!(cubic.ks <= 0.02 && cubic.invariant());
    }

    #[test]
    fn invariance_fails_off_family() {
        let out = invariance_check(2.0, 2.0, 0.5, 100_000, 7).unwrap();
        assert!(out.ks >= 0.05 && !out.invariant(), "{out:?}");
    }

    #[test]
    fn invariance_needs_retained_draws() {
        let err = invariance_check(50.0, 1.0, 0.5, 1000, 1).unwrap_err();
        assert!(err.to_string().contains("larger n"));
        assert!(invariance_check(1.0, 1.0, 1.0, 1000, 1).is_err());
    }

    #[test]
    fn moment_fits() {
        let mut rng = SplitMix64::new(8);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.beta(2.0, 5.0)).collect();
        let (a, b) = fit_beta_moments(&draws).unwrap();
        assert!((a / 2.0 - 1.0).abs() < 0.05 && (b / 5.0 - 1.0).abs() < 0.05, "{a} {b}");
        let unif: Vec<f64> = (0..100_000).map(|_| rng.next_open01()).collect();
        let (a, b) = fit_beta_moments(&unif).unwrap();
        assert!((a - 1.0).abs() < 0.05 && (b - 1.0).abs() < 0.05);
        assert!(fit_beta_moments(&[0.3; 10]).is_err());
    }

    #[test]
    fn power_product_is_beta() {
        for a in 0..=4 {
            for b in 0..=4 {
                let f = power_product_density(a as f64, b as f64);
                for k in 0..=50 {
                    let x = k as f64 / 50.0;
                    let want = beta_pdf(x, a as f64 + 1.0, b as f64 + 1.0);
                    assert!((f(x) - want).abs() < 1e-10, "a={a} b={b} x={x}");
                }
            }
        }
    }

    #[test]
    fn benchmark_shape() {
        let d = penalty_benchmark(1000, 1).unwrap();
        assert_eq!(d.feature_names().len(), 5);
        let mean = |g: Group| {
            let v: Vec<f64> = d.records().iter().filter(|r| r.s == g).map(|r| r.features[0]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(Group::One) - mean(Group::Zero) > 0.8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(9))]
        #[test]
        fn power_law_truncation_within_critical_value(a in 0usize..3, p in 0usize..3, seed in 0u64..1000) {
            let p0 = [0.25, 0.5, 0.75][p];
            let out = invariance_check(a as f64 + 1.0, 1.0, p0, 20_000, seed).unwrap();
            prop_assert!(out.ks <= 1.63 * ((out.retained + out.n) as f64 / (out.retained * out.n) as f64).sqrt());
        }
    }
}
