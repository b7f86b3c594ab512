//! Trend verdicts for metric sequences and small descriptive statistics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Decreasing,
    Flat,
    Violated,
}

/// `Decreasing`: every step satisfies `v[i+1] ≤ (1 + rel_tol)·v[i] + floor`
/// and `last ≤ final_ratio · first`. `Flat`: every value is at most `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendRule {
    pub rel_tol: f64,
    pub floor: f64,
    pub final_ratio: f64,
}

impl Default for TrendRule {
    fn default() -> Self {
        TrendRule { rel_tol: 0.1, floor: 1e-12, final_ratio: 0.5 }
    }
}

impl TrendRule {
    pub fn with_floor(floor: f64) -> Self {
        TrendRule { floor, ..Self::default() }
    }
}

pub fn trend_verdict(values: &[f64], rule: &TrendRule) -> Verdict {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Verdict::Violated;
    }
    if values.iter().all(|v| v.abs() <= rule.floor) {
        return Verdict::Flat;
    }
    let steps_ok = values.windows(2).all(|w| w[1] <= (1.0 + rule.rel_tol) * w[0] + rule.floor);
    let first = values[0];
    let last = values[values.len() - 1];
    if values.len() >= 2 && steps_ok && last <= rule.final_ratio * first {
        Verdict::Decreasing
    } else {
        Verdict::Violated
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    crate::exec::pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    crate::exec::pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len().max(1) as f64).sqrt()
}

/// Linearly interpolated empirical quantile of an unsorted sample.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    crate::sde::quantile_sorted(&v, p)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn verdict_examples() {
        let r = TrendRule::default();
        assert_eq!(trend_verdict(&[1.0, 0.5, 0.3, 0.31, 0.1], &r), Verdict::Decreasing);
        assert_eq!(trend_verdict(&[0.0, 0.0, 1e-14], &r), Verdict::Flat);
        assert_eq!(trend_verdict(&[1.0, 2.0, 0.1], &r), Verdict::Violated);
        assert_eq!(trend_verdict(&[1.0, 0.9, 0.8], &r), Verdict::Violated);
        assert_eq!(trend_verdict(&[], &r), Verdict::Violated);
        assert_eq!(trend_verdict(&[1.0, f64::NAN], &r), Verdict::Violated);
    }

    #[test]
    fn summary_statistics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    proptest! {
        #[test]
        fn geometric_sequences_decrease(a in 0.01f64..10.0, q in 0.05f64..0.8, n in 2usize..10) {
            let v: Vec<f64> = (0..n).map(|k| a * q.powi(k as i32)).collect();
            prop_assume!(v[n - 1] <= 0.5 * v[0]);
            prop_assert_eq!(trend_verdict(&v, &TrendRule::default()), Verdict::Decreasing);
        }
    }
}
