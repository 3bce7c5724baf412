//! Accuracy, trajectory bands, variance decomposition and size-normalized
//! deviations.
//!
//! All second moments use the `S - 1` divisor so that
//! `total_var = idp_var + cov_term` holds exactly in-sample.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum, sample_std, sample_variance};
use crate::store::{CheckpointIndex, FinalSlice, PredictionTensor};

/// Mean score of one row.
pub fn accuracy(scores: &[f64]) -> f64 {
    mean(scores)
}

/// Per-run accuracy at every checkpoint, `[run][checkpoint]`.
pub fn accuracy_grid(t: &PredictionTensor) -> Vec<Vec<f64>> {
    (0..t.n_runs())
        .map(|r| {
            (0..t.n_checkpoints())
                .map(|c| accuracy(t.row(r, c)))
                .collect()
        })
        .collect()
}

/// Per-checkpoint mean and sample std of per-run accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub checkpoints: Vec<CheckpointIndex>,
    pub mean_acc: Vec<f64>,
    pub std_acc: Vec<f64>,
}

pub fn trajectory(t: &PredictionTensor) -> Result<TrajectoryStats> {
    if t.n_runs() < 2 {
        return Err(Error::InsufficientRuns(t.n_runs()));
    }
    let grid = accuracy_grid(t);
    let (mean_acc, std_acc) = (0..t.n_checkpoints())
        .map(|c| {
            let accs: Vec<f64> = grid.iter().map(|run| run[c]).collect();
            (mean(&accs), sample_std(&accs))
        })
        .unzip();
    Ok(TrajectoryStats {
        checkpoints: t.checkpoints().to_vec(),
        mean_acc,
        std_acc,
    })
}

/// Split of `Var(Acc)` into per-example variance and pairwise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    pub total_var: f64,
    pub idp_var: f64,
    /// May be negative.
    pub cov_term: f64,
    pub sqrt_total: f64,
    pub sqrt_idp: f64,
    pub sqrt_abs_cov: f64,
}

impl VarianceDecomposition {
    pub fn from_terms(total_var: f64, idp_var: f64, cov_term: f64) -> Self {
        Self {
            total_var,
            idp_var,
            cov_term,
            sqrt_total: total_var.max(0.0).sqrt(),
            sqrt_idp: idp_var.max(0.0).sqrt(),
            sqrt_abs_cov: cov_term.abs().sqrt(),
        }
    }
}

/// How the covariance term is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariancePath {
    /// `total_var - idp_var`, O(S·N).
    #[default]
    Fast,
    /// Explicit sum over all example pairs, O(S·N²). Oracle for the fast path.
    Pairwise,
}

pub fn decompose_variance(f: &FinalSlice, path: CovariancePath) -> Result<VarianceDecomposition> {
    let s = f.n_runs();
    if s < 2 {
        return Err(Error::InsufficientRuns(s));
    }
    let n = f.n_examples();
    let nn = (n as f64) * (n as f64);

    let accs: Vec<f64> = (0..s).map(|r| accuracy(f.row(r))).collect();
    let total_var = sample_variance(&accs);

    let columns: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| f.column(i)).collect();
    let per_example: Vec<f64> = columns.par_iter().map(|c| sample_variance(c)).collect();
    let idp_var = pairwise_sum(&per_example) / nn;

    let cov_term = match path {
        CovariancePath::Fast => total_var - idp_var,
        CovariancePath::Pairwise => {
            let denom = (s - 1) as f64;
            let centered: Vec<Vec<f64>> = columns
                .par_iter()
                .map(|c| {
                    let m = mean(c);
                    c.iter().map(|v| v - m).collect()
                })
                .collect();
            let row_sums: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let covs: Vec<f64> = (i + 1..n)
                        .map(|j| {
                            let prods: Vec<f64> = centered[i]
                                .iter()
                                .zip(&centered[j])
                                .map(|(a, b)| a * b)
                                .collect();
                            pairwise_sum(&prods) / denom
                        })
                        .collect();
                    pairwise_sum(&covs)
                })
                .collect();
            2.0 * pairwise_sum(&row_sums) / nn
        }
    };
    Ok(VarianceDecomposition::from_terms(
        total_var, idp_var, cov_term,
    ))
}

/// One row of the decomposition table, square roots in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub dataset: String,
    pub checkpoint: CheckpointIndex,
    pub decomposition: VarianceDecomposition,
    pub sqrt_total_pts: f64,
    pub sqrt_idp_pts: f64,
    pub sqrt_abs_cov_pts: f64,
}

/// Decomposes each tensor's slice at `at` (default: last checkpoint), in input order.
pub fn decomposition_table(
    tensors: &[PredictionTensor],
    at: Option<CheckpointIndex>,
    path: CovariancePath,
) -> Result<Vec<DecompositionRow>> {
    tensors
        .iter()
        .map(|t| {
            let f = t.final_slice(at)?;
            let d = decompose_variance(&f, path)?;
            Ok(DecompositionRow {
                dataset: t.name().to_string(),
                checkpoint: f.checkpoint,
                decomposition: d,
                sqrt_total_pts: 100.0 * d.sqrt_total,
                sqrt_idp_pts: 100.0 * d.sqrt_idp,
                sqrt_abs_cov_pts: 100.0 * d.sqrt_abs_cov,
            })
        })
        .collect()
}

/// `(std_d / std_ref) · sqrt(n_d / n_ref)`.
pub fn normalized_deviation(std_d: f64, n_d: usize, std_ref: f64, n_ref: usize) -> Result<f64> {
    if std_ref.is_nan() || std_ref <= 0.0 {
        return Err(Error::ZeroReferenceStd(std_ref));
    }
    if n_d == 0 || n_ref == 0 {
        return Err(Error::InvalidParameter(
            "dataset sizes must be positive".into(),
        ));
    }
    if std_d.is_nan() || std_d < 0.0 {
        return Err(Error::InvalidParameter(format!("invalid std {std_d}")));
    }
    Ok((std_d / std_ref) * (n_d as f64 / n_ref as f64).sqrt())
}

/// Mean and sample std (in percentage points) of per-run accuracy at one checkpoint.
pub fn final_accuracy_summary(f: &FinalSlice) -> Result<(f64, f64)> {
    if f.n_runs() < 2 {
        return Err(Error::InsufficientRuns(f.n_runs()));
    }
    let accs: Vec<f64> = (0..f.n_runs())
        .map(|r| 100.0 * accuracy(f.row(r)))
        .collect();
    Ok((mean(&accs), sample_std(&accs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::test_support::tensor;
    use proptest::prelude::*;

    fn slice(rows: &[&[f64]]) -> FinalSlice {
        FinalSlice::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1.0, 1.0, 1.0, 1.0]), 1.0);
        assert_eq!(accuracy(&[1.0, 0.0, 1.0, 0.0]), 0.5);
        assert_eq!(accuracy(&[0.5, 1.0, 0.0]), 0.5);
    }

    #[test]
    fn trajectory_identical_runs_has_zero_std() {
        let run = vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
        let t = tensor("d", &[run.clone(), run]);
        let tr = trajectory(&t).unwrap();
        assert_eq!(tr.std_acc, vec![0.0, 0.0]);
        assert_eq!(tr.mean_acc.len(), 2);
    }

    #[test]
    fn trajectory_two_run_band() {
        // per-run accuracies 0.4 and 0.6 over five examples
        let t = tensor(
            "d",
            &[
                vec![vec![1.0, 1.0, 0.0, 0.0, 0.0]],
                vec![vec![1.0, 1.0, 1.0, 0.0, 0.0]],
            ],
        );
        let tr = trajectory(&t).unwrap();
        assert!((tr.mean_acc[0] - 0.5).abs() < 1e-15);
        assert!((tr.std_acc[0] - 0.141421).abs() < 1e-6);
    }

    #[test]
    fn trajectory_requires_two_runs() {
        let t = tensor("d", &[vec![vec![1.0]]]);
        assert!(matches!(trajectory(&t), Err(Error::InsufficientRuns(1))));
    }

    #[test]
    fn decomposition_anticorrelated_pair() {
        let f = slice(&[&[1.0, 0.0], &[0.0, 1.0]]);
        for path in [CovariancePath::Fast, CovariancePath::Pairwise] {
            let d = decompose_variance(&f, path).unwrap();
            assert_eq!(d.total_var, 0.0);
            assert!((d.idp_var - 0.25).abs() < 1e-15);
            assert!((d.cov_term + 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn decomposition_correlated_pair() {
        let f = slice(&[&[1.0, 1.0], &[0.0, 0.0]]);
        for path in [CovariancePath::Fast, CovariancePath::Pairwise] {
            let d = decompose_variance(&f, path).unwrap();
            assert!((d.total_var - 0.5).abs() < 1e-15);
            assert!((d.idp_var - 0.25).abs() < 1e-15);
            assert!((d.cov_term - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_example_has_no_covariance() {
        let f = slice(&[&[1.0], &[0.0], &[0.3]]);
        let fast = decompose_variance(&f, CovariancePath::Fast).unwrap();
        assert_eq!(fast.cov_term, 0.0);
        assert_eq!(fast.total_var, fast.idp_var);
        let slow = decompose_variance(&f, CovariancePath::Pairwise).unwrap();
        assert_eq!(slow.cov_term, 0.0);
    }

    #[test]
    fn decomposition_needs_two_runs() {
        let f = slice(&[&[1.0, 0.0]]);
        assert!(matches!(
            decompose_variance(&f, CovariancePath::Fast),
            Err(Error::InsufficientRuns(1))
        ));
    }

    #[test]
    fn table_rows_in_points() {
        let a = tensor("a", &[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]);
        let b = tensor("b", &[vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]]);
        let rows = decomposition_table(&[a, b], None, CovariancePath::Fast).unwrap();
        assert_eq!(rows[0].dataset, "a");
        assert!(rows[0].sqrt_total_pts.abs() < 1e-12);
        assert!((rows[0].sqrt_idp_pts - 50.0).abs() < 1e-12);
        assert!((rows[0].sqrt_abs_cov_pts - 50.0).abs() < 1e-12);
        assert_eq!(rows[1].dataset, "b");
        assert_eq!(
            (
                rows[1].sqrt_total_pts,
                rows[1].sqrt_idp_pts,
                rows[1].sqrt_abs_cov_pts
            ),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn normalized_deviation_examples() {
        let hans = normalized_deviation(1.51, 30000, 0.24, 9815).unwrap();
        assert!((hans - 10.9996).abs() < 1e-3, "{hans}");
        // published value, computed from 2-decimal inputs
        assert!((hans - 10.95).abs() < 0.3);
        let nu = normalized_deviation(3.76, 7596, 0.24, 9815).unwrap();
        assert!((nu - 13.782).abs() < 1e-3, "{nu}");
        assert!((nu - 13.65).abs() < 0.3);
        assert_eq!(normalized_deviation(0.24, 9815, 0.24, 9815).unwrap(), 1.0);
        assert!(matches!(
            normalized_deviation(1.0, 10, 0.0, 10),
            Err(Error::ZeroReferenceStd(_))
        ));
    }

    fn score_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..8, 1usize..25).prop_flat_map(|(s, n)| {
            prop::collection::vec(
                prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], n),
                s,
            )
        })
    }

    proptest! {
        #[test]
        fn decomposition_identity_and_bounds(rows in score_matrix()) {
            let f = FinalSlice::from_rows(&rows).unwrap();
            let fast = decompose_variance(&f, CovariancePath::Fast).unwrap();
            let slow = decompose_variance(&f, CovariancePath::Pairwise).unwrap();
            prop_assert!((fast.total_var - fast.idp_var - fast.cov_term).abs() <= 1e-12);
            prop_assert!((slow.cov_term - fast.cov_term).abs() <= 1e-12);
            prop_assert!(fast.total_var >= 0.0 && fast.idp_var >= 0.0);
            prop_assert!(fast.cov_term >= -fast.idp_var - 1e-12);
        }

        #[test]
        fn example_permutation_invariance(rows in score_matrix(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = rows[0].len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<Vec<f64>> =
                rows.iter().map(|r| perm.iter().map(|&i| r[i]).collect()).collect();
            let a = decompose_variance(&FinalSlice::from_rows(&rows).unwrap(), CovariancePath::Fast).unwrap();
            let b = decompose_variance(&FinalSlice::from_rows(&shuffled).unwrap(), CovariancePath::Fast).unwrap();
            prop_assert!((a.total_var - b.total_var).abs() <= 1e-12);
            prop_assert!((a.idp_var - b.idp_var).abs() <= 1e-12);
            prop_assert!((a.cov_term - b.cov_term).abs() <= 1e-12);
        }

        #[test]
        fn scaling_is_quadratic(rows in score_matrix(), k in 0.01f64..=1.0) {
            let scaled: Vec<Vec<f64>> =
                rows.iter().map(|r| r.iter().map(|v| v * k).collect()).collect();
            let a = decompose_variance(&FinalSlice::from_rows(&rows).unwrap(), CovariancePath::Fast).unwrap();
            let b = decompose_variance(&FinalSlice::from_rows(&scaled).unwrap(), CovariancePath::Fast).unwrap();
            prop_assert!((b.total_var - k * k * a.total_var).abs() <= 1e-12);
            prop_assert!((b.idp_var - k * k * a.idp_var).abs() <= 1e-12);
            prop_assert!((b.cov_term - k * k * a.cov_term).abs() <= 1e-12);
        }

        #[test]
        fn duplicating_examples_halves_idp(rows in score_matrix()) {
            let doubled: Vec<Vec<f64>> = rows.iter().map(|r| [r.as_slice(), r.as_slice()].concat()).collect();
            let a = decompose_variance(&FinalSlice::from_rows(&rows).unwrap(), CovariancePath::Fast).unwrap();
            let b = decompose_variance(&FinalSlice::from_rows(&doubled).unwrap(), CovariancePath::Fast).unwrap();
            prop_assert_eq!(b.idp_var, a.idp_var / 2.0);
            prop_assert!((b.total_var - a.total_var).abs() <= 1e-12);
        }
    }
}
