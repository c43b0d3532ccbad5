//! Order-fixed reductions.
//!
//! All aggregation in the crate goes through these helpers so that a result
//! depends only on the values and their order, never on how work was split
//! across threads.

/// Pairwise (tree) summation with a fixed split point.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean via [`pairwise_sum`]; `NaN` for an empty slice.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Mean computed as `x₀ + mean(x - x₀)`, which returns `x₀` exactly when all
/// entries are equal.
pub fn shifted_mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return f64::NAN;
    };
    let deviations: Vec<f64> = values.iter().map(|v| v - first).collect();
    first + pairwise_sum(&deviations) / values.len() as f64
}

/// Sample standard deviation with the `N - 1` denominator; zero for `N = 1`.
pub fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (pairwise_sum(&sq) / (values.len() - 1) as f64).sqrt()
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|k| {
                    if k + 1 == count {
                        hi
                    } else {
                        lo + step * k as f64
                    }
                })
                .collect()
        }
    }
}
