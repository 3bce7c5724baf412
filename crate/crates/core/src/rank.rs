//! Spearman rank correlation with fractional ranks for ties, and the
//! seed-averaged dataset-level correlation of accuracy trajectories.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::stats::accuracy_grid;
use crate::store::{CheckpointRange, PredictionTensor};

/// A rank correlation, undefined when either series is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RankCorrelation {
    Defined(f64),
    Undefined,
}

impl RankCorrelation {
    pub fn value(self) -> Option<f64> {
        match self {
            RankCorrelation::Defined(v) => Some(v),
            RankCorrelation::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, RankCorrelation::Defined(_))
    }
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Ranks centered on their mean. `None` when the ranks have zero spread.
pub(crate) fn centered_ranks(xs: &[f64]) -> (Vec<f64>, f64) {
    let ranks = average_ranks(xs);
    let mid = (xs.len() + 1) as f64 / 2.0;
    let centered: Vec<f64> = ranks.into_iter().map(|r| r - mid).collect();
    let sq: Vec<f64> = centered.iter().map(|c| c * c).collect();
    let ss = pairwise_sum(&sq);
    (centered, ss)
}

/// Pearson correlation of two centered series with known sums of squares.
pub(crate) fn centered_correlation(a: &[f64], ssa: f64, b: &[f64], ssb: f64) -> RankCorrelation {
    if ssa == 0.0 || ssb == 0.0 {
        return RankCorrelation::Undefined;
    }
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let r = pairwise_sum(&prods) / (ssa * ssb).sqrt();
    RankCorrelation::Defined(r.clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<RankCorrelation> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::SeriesTooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "series contain non-finite values".into(),
        ));
    }
    let (cx, sx) = centered_ranks(x);
    let (cy, sy) = centered_ranks(y);
    Ok(centered_correlation(&cx, sx, &cy, sy))
}

/// Seed-averaged Spearman correlations between dataset trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetCorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major `D × D`; `None` where every seed was undefined.
    pub values: Vec<Option<f64>>,
    /// Row-major `D × D`; seeds excluded from each cell's average.
    pub undefined_count: Vec<usize>,
}

impl DatasetCorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.dim() + j]
    }

    pub fn undefined(&self, i: usize, j: usize) -> usize {
        self.undefined_count[i * self.dim() + j]
    }
}

pub fn dataset_correlation(
    tensors: &[PredictionTensor],
    checkpoint_range: Option<CheckpointRange>,
) -> Result<DatasetCorrelationMatrix> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::InvalidParameter("no datasets given".into()))?;
    for t in &tensors[1..] {
        if t.runs() != first.runs() {
            return Err(Error::AxisMismatch(format!(
                "runs of {:?} differ from {:?}",
                t.name(),
                first.name()
            )));
        }
        if t.checkpoints() != first.checkpoints() {
            return Err(Error::AxisMismatch(format!(
                "checkpoints of {:?} differ from {:?}",
                t.name(),
                first.name()
            )));
        }
    }
    let keep: Vec<usize> = (0..first.n_checkpoints())
        .filter(|&c| checkpoint_range.is_none_or(|r| r.contains(first.checkpoints()[c])))
        .collect();
    if keep.len() < 2 {
        return Err(Error::SeriesTooShort(keep.len()));
    }

    // [dataset][seed] -> (centered ranks, sum of squares)
    let ranked: Vec<Vec<(Vec<f64>, f64)>> = tensors
        .par_iter()
        .map(|t| {
            accuracy_grid(t)
                .iter()
                .map(|run| {
                    let series: Vec<f64> = keep.iter().map(|&c| run[c]).collect();
                    centered_ranks(&series)
                })
                .collect()
        })
        .collect();

    let d = tensors.len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let cells: Vec<(Option<f64>, usize)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let per_seed: Vec<RankCorrelation> = ranked[i]
                .iter()
                .zip(&ranked[j])
                .map(|((a, sa), (b, sb))| centered_correlation(a, *sa, b, *sb))
                .collect();
            let defined: Vec<f64> = per_seed.iter().filter_map(|r| r.value()).collect();
            let undefined = per_seed.len() - defined.len();
            let value =
                (!defined.is_empty()).then(|| pairwise_sum(&defined) / defined.len() as f64);
            (value, undefined)
        })
        .collect();

    let mut values = vec![None; d * d];
    let mut undefined_count = vec![0; d * d];
    for (&(i, j), &(v, u)) in pairs.iter().zip(&cells) {
        values[i * d + j] = v;
        values[j * d + i] = v;
        undefined_count[i * d + j] = u;
        undefined_count[j * d + i] = u;
    }
    Ok(DatasetCorrelationMatrix {
        names: tensors.iter().map(|t| t.name().to_string()).collect(),
        values,
        undefined_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::test_support::tensor;

    fn rho(x: &[f64], y: &[f64]) -> Option<f64> {
        spearman(x, y).unwrap().value()
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(rho(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0]), Some(0.0));
        assert_eq!(rho(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn average_ranks_for_ties() {
        assert_eq!(
            average_ranks(&[1.0, 1.0, 0.0, 0.0]),
            vec![3.5, 3.5, 1.5, 1.5]
        );
        assert_eq!(
            average_ranks(&[2.0, 9.0, 2.0, 2.0]),
            vec![2.0, 4.0, 2.0, 2.0]
        );
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0], &[1.0]),
            Err(Error::SeriesTooShort(1))
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(spearman(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    /// Single example per dataset so accuracy equals the score.
    fn trajectories(name: &str, runs: &[&[f64]]) -> PredictionTensor {
        let grid: Vec<Vec<Vec<f64>>> = runs
            .iter()
            .map(|r| r.iter().map(|&v| vec![v]).collect())
            .collect();
        tensor(name, &grid)
    }

    #[test]
    fn identical_trajectories_correlate_fully() {
        let a = trajectories("a", &[&[0.1, 0.5, 0.3], &[0.2, 0.1, 0.9]]);
        let b = trajectories("b", &[&[0.1, 0.5, 0.3], &[0.2, 0.1, 0.9]]);
        let m = dataset_correlation(&[a, b], None).unwrap();
        assert_eq!(m.get(0, 1), Some(1.0));
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.undefined(0, 1), 0);
    }

    #[test]
    fn concordant_and_discordant_seeds_average_to_zero() {
        let a = trajectories("a", &[&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]]);
        let b = trajectories("b", &[&[0.4, 0.5, 0.6], &[0.6, 0.5, 0.4]]);
        let m = dataset_correlation(&[a, b], None).unwrap();
        assert_eq!(m.get(0, 1), Some(0.0));
        assert_eq!(m.get(1, 0), Some(0.0));
    }

    #[test]
    fn constant_trajectory_is_undefined() {
        let a = trajectories("a", &[&[0.1, 0.2, 0.3], &[0.3, 0.2, 0.1]]);
        let b = trajectories("b", &[&[0.5, 0.5, 0.5], &[0.7, 0.7, 0.7]]);
        let m = dataset_correlation(&[a, b], None).unwrap();
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.undefined(0, 1), 2);
        assert_eq!(m.get(1, 1), None);
        assert_eq!(m.get(0, 0), Some(1.0));
    }

    #[test]
    fn axis_mismatch_and_short_series() {
        let a = trajectories("a", &[&[0.1, 0.2], &[0.3, 0.2]]);
        let b = trajectories("b", &[&[0.1, 0.2, 0.3], &[0.3, 0.2, 0.1]]);
        assert!(matches!(
            dataset_correlation(&[a.clone(), b], None),
            Err(Error::AxisMismatch(_))
        ));
        let range = CheckpointRange {
            start: 1,
            end: None,
        };
        assert!(matches!(
            dataset_correlation(&[a], Some(range)),
            Err(Error::SeriesTooShort(1))
        ));
    }

    #[test]
    fn checkpoint_range_drops_warmup() {
        // the first checkpoint reverses the order; excluding it makes the series concordant
        let a = trajectories("a", &[&[0.9, 0.1, 0.2, 0.3]]);
        let b = trajectories("b", &[&[0.0, 0.4, 0.5, 0.6]]);
        let all = dataset_correlation(&[a.clone(), b.clone()], None).unwrap();
        assert!(all.get(0, 1).unwrap() < 1.0);
        let tail = dataset_correlation(
            &[a, b],
            Some(CheckpointRange {
                start: 1,
                end: None,
            }),
        )
        .unwrap();
        assert_eq!(tail.get(0, 1), Some(1.0));
    }
}
