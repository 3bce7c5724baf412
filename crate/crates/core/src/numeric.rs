//! Summation and moment helpers shared by the statistics modules.
//!
//! Every reduction goes through [`pairwise_sum`], a fixed-shape recursive
//! split at the midpoint. The tree shape depends only on the slice length, so
//! results are bitwise reproducible whatever order or thread the inputs were
//! produced on.

/// Sum with a fixed binary tree: split at `len / 2` until single elements.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Arithmetic mean. Empty input yields NaN.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample variance with the `n - 1` divisor, computed on centered values.
///
/// Returns exactly 0 when all values are identical. Requires `xs.len() >= 2`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    debug_assert!(xs.len() >= 2);
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Sample covariance of two equally long series, `n - 1` divisor.
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(xs.len() >= 2);
    let mx = mean(xs);
    let my = mean(ys);
    let prod: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x - mx) * (y - my))
        .collect();
    pairwise_sum(&prod) / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_small_cases() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[3.5]), 3.5);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    #[test]
    fn doubled_slice_sums_to_exactly_twice() {
        let xs: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut doubled = xs.clone();
        doubled.extend_from_slice(&xs);
        assert_eq!(pairwise_sum(&doubled), 2.0 * pairwise_sum(&xs));
    }

    #[test]
    fn constant_series_has_zero_variance() {
        assert_eq!(sample_variance(&[0.1, 0.1, 0.1]), 0.0);
    }

    #[test]
    fn variance_matches_hand_value() {
        // (0.1^2 + 0.1^2) / 1
        assert!((sample_variance(&[0.4, 0.6]) - 0.02).abs() < 1e-15);
        assert!((sample_covariance(&[1.0, 0.0], &[0.0, 1.0]) + 0.5).abs() < 1e-15);
    }
}
