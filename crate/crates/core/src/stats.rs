//! Small numeric helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sample Kolmogorov–Smirnov distance between weighted samples.
///
/// Each side is a list of `(value, weight)`; ties are resolved by stepping
/// both empirical CDFs past the tied value before comparing.
pub fn ks_distance_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let wa: f64 = a.iter().map(|p| p.1).sum();
    let wb: f64 = b.iter().map(|p| p.1).sum();
    let (mut i, mut j) = (0, 0);
    let (mut ca, mut cb) = (0.0, 0.0);
    let mut sup: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 == next {
            ca += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == next {
            cb += b[j].1;
            j += 1;
        }
        sup = sup.max((ca / wa - cb / wb).abs());
    }
    sup
}

pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let wa: Vec<(f64, f64)> = a.iter().map(|&v| (v, 1.0)).collect();
    let wb: Vec<(f64, f64)> = b.iter().map(|&v| (v, 1.0)).collect();
    ks_distance_weighted(&wa, &wb)
}

/// Asymptotic two-sample KS critical value at significance `alpha`:
/// `c(alpha) * sqrt((n + m) / (n m))` with `c(alpha) = sqrt(-ln(alpha / 2) / 2)`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Linear-interpolation quantile (type 7) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mean_rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = mean_rank;
        }
        start = end;
    }
    ranks
}

/// Distinct values in ascending order.
pub fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_disjoint_and_identical() {
        assert_eq!(ks_distance(&[0.1, 0.2], &[0.8, 0.9]), 1.0);
        assert_eq!(ks_distance(&[0.1, 0.5, 0.5], &[0.5, 0.1, 0.5]), 0.0);
    }

    #[test]
    fn ks_hand_example() {
        // F_a jumps at 1,2,3; F_b at 2,3,4 -> sup gap 1/3.
        let d = ks_distance(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn critical_value_one_percent() {
        let c = ks_critical_value(1, 1, 0.01) / 2f64.sqrt();
        assert!((c - 1.6276).abs() < 1e-4, "{c}");
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert_eq!(quantile_sorted(&v, 0.75), 3.0);
    }

    #[test]
    fn ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }
}
