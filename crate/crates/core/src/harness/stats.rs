//! Interval estimates and goodness-of-fit tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Point estimate with a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub confidence: f64,
}

/// Two-sided standard normal quantile, `z` with `P(|Z| <= z) = confidence`.
pub fn z_value(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + confidence / 2.0)
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: u64, n: u64, confidence: f64) -> Estimate {
    if n == 0 {
        return Estimate {
            point: f64::NAN,
            ci_low: 0.0,
            ci_high: 1.0,
            n,
            confidence,
        };
    }
    let z = z_value(confidence);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Estimate {
        point: p,
        ci_low: (centre - half).max(0.0),
        ci_high: (centre + half).min(1.0),
        n,
        confidence,
    }
}

/// Sample mean with a normal-approximation interval.
pub fn mean_ci(values: &[f64], confidence: f64) -> Estimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let half = z_value(confidence) * (var / n as f64).sqrt();
    Estimate {
        point: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        n: n as u64,
        confidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Minimum expected (or pooled) count per merged bin.
pub const MIN_BIN_COUNT: f64 = 10.0;

/// Greedily merges adjacent bins left to right until each merged bin's weight
/// reaches `MIN_BIN_COUNT`; a short tail is folded into the last bin.
/// Returns the bin ranges as `start..end` indices.
fn merge_bins(weights: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut ranges = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= MIN_BIN_COUNT {
            ranges.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        match ranges.last_mut() {
            Some(last) => last.end = weights.len(),
            None => ranges.push(0..weights.len()),
        }
    }
    ranges
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    1.0 - chi.cdf(statistic)
}

/// Pearson goodness-of-fit of `observed` counts against probabilities `probs`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquareTest {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();
    let ranges = merge_bins(&expected);
    let mut statistic = 0.0;
    for r in &ranges {
        let o: u64 = observed[r.clone()].iter().sum();
        let e: f64 = expected[r.clone()].iter().sum();
        if e > 0.0 {
            statistic += (o as f64 - e).powi(2) / e;
        }
    }
    let dof = ranges.len().saturating_sub(1);
    ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Two-sample chi-square test of homogeneity on aligned histograms.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquareTest {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0);
    let pooled: Vec<f64> = (0..len).map(|i| (get(a, i) + get(b, i)) as f64).collect();
    let ranges = merge_bins(&pooled);
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let total = (na + nb) as f64;
    let mut statistic = 0.0;
    for r in &ranges {
        let oa: u64 = r.clone().map(|i| get(a, i)).sum();
        let ob: u64 = r.clone().map(|i| get(b, i)).sum();
        let col = (oa + ob) as f64;
        if col == 0.0 {
            continue;
        }
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        if ea > 0.0 {
            statistic += (oa as f64 - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            statistic += (ob as f64 - eb).powi(2) / eb;
        }
    }
    let dof = ranges.len().saturating_sub(1);
    ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_values() {
        assert!((z_value(0.95) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((z_value(0.99) - 2.575_829_303_548_901).abs() < 1e-9);
    }

    #[test]
    fn wilson_reference() {
        // 40 / 100 at 95%: (0.3094, 0.4980)
        let e = wilson(40, 100, 0.95);
        assert!((e.ci_low - 0.309_4).abs() < 1e-4, "{e:?}");
        assert!((e.ci_high - 0.498_0).abs() < 1e-4, "{e:?}");
        let e = wilson(0, 50, 0.95);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.0);
        let e = wilson(50, 50, 0.95);
        assert_eq!(e.ci_high, 1.0);
    }

    #[test]
    fn mean_interval() {
        let e = mean_ci(&[1.0, 2.0, 3.0, 4.0], 0.95);
        assert_eq!(e.point, 2.5);
        assert!(e.ci_low < 2.5 && e.ci_high > 2.5);
        assert!((e.ci_high - e.point - (e.point - e.ci_low)).abs() < 1e-12);
    }

    #[test]
    fn bins_merge_to_minimum() {
        let r = merge_bins(&[3.0, 4.0, 5.0, 20.0, 1.0]);
        assert_eq!(r, vec![0..3, 3..5]);
        let r = merge_bins(&[1.0, 1.0]);
        assert_eq!(r, vec![0..2]);
    }

    #[test]
    fn gof_perfect_fit() {
        let t = chi_square_gof(&[250, 250, 500], &[0.25, 0.25, 0.5]);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gof_detects_mismatch() {
        let t = chi_square_gof(&[400, 100, 500], &[0.25, 0.25, 0.5]);
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn homogeneity() {
        let t = chi_square_homogeneity(&[100, 200, 300], &[50, 100, 150]);
        assert!(t.statistic.abs() < 1e-12);
        assert_eq!(t.dof, 2);
        let t = chi_square_homogeneity(&[300, 200, 100], &[100, 200, 300]);
        assert!(t.p_value < 1e-10);
        // reference: 2x2 table [[20, 30], [30, 20]] gives statistic 4.0
        let t = chi_square_homogeneity(&[20, 30], &[30, 20]);
        assert!((t.statistic - 4.0).abs() < 1e-12);
        assert!((t.p_value - 0.045_500_263_896_358_4).abs() < 1e-9);
    }
}
