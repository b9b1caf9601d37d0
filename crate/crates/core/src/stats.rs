//! Goodness-of-fit and confidence helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `observed` counts against probabilities `expected`.
///
/// Cells are visited in order of decreasing expectation and pooled until
/// each pooled cell expects at least `min_expected` hits; a short tail is
/// merged into the last pool.
pub fn chi_square(observed: &[u64], expected: &[f64], min_expected: f64) -> ChiSquare {
    assert_eq!(observed.len(), expected.len());
    let total: u64 = observed.iter().sum();
    let norm: f64 = expected.iter().sum();
    let mut order: Vec<usize> = (0..observed.len()).collect();
    order.sort_by(|&i, &j| expected[j].total_cmp(&expected[i]));
    let mut pools: Vec<(f64, u64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0u64);
    for i in order {
        e += expected[i] / norm * total as f64;
        o += observed[i];
        if e >= min_expected {
            pools.push((e, o));
            e = 0.0;
            o = 0;
        }
    }
    if e > 0.0 || o > 0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += e;
                last.1 += o;
            }
            None => pools.push((e, o)),
        }
    }
    let statistic: f64 = pools.iter().map(|&(e, o)| (o as f64 - e).powi(2) / e).sum();
    let dof = pools.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
    };
    ChiSquare { statistic, dof, p_value }
}

/// One-sided Clopper–Pearson upper bound for `k` successes in `n` trials.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    Beta::new(k as f64 + 1.0, (n - k) as f64).unwrap().inverse_cdf(confidence)
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let (m, _) = mean_se(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Two-sample chi-square homogeneity test on paired category counts.
pub fn two_sample_chi_square(a: &[u64], b: &[u64]) -> ChiSquare {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let t = (x + y) as f64;
        if t == 0.0 {
            continue;
        }
        cells += 1;
        let ea = t * na / (na + nb);
        let eb = t * nb / (na + nb);
        statistic += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    let dof = cells.saturating_sub(1);
    let p_value = if dof == 0 { 1.0 } else { 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic) };
    ChiSquare { statistic, dof, p_value }
}
