//! Re-split model selection: split an evaluation set into dev/test parts,
//! pick each run's checkpoint on a selector set, score it on the test part.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum, sample_std};
use crate::stats::accuracy;
use crate::store::{CheckpointIndex, PredictionTensor, RunId};

pub const DEFAULT_DEV_FRACTION: f64 = 0.8;
const MIN_SPLIT_EXAMPLES: usize = 5;

/// Disjoint dev/test partition of a dataset's example ids, each in tensor order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSpec {
    pub dev_fraction: f64,
    pub rng_seed: u64,
    pub dev_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

pub fn make_split(t: &PredictionTensor, dev_fraction: f64, rng_seed: u64) -> Result<SplitSpec> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dev fraction must be in (0, 1), got {dev_fraction}"
        )));
    }
    let n = t.n_examples();
    if n < MIN_SPLIT_EXAMPLES {
        return Err(Error::DatasetTooSmall {
            min: MIN_SPLIT_EXAMPLES,
            got: n,
        });
    }
    let n_dev = (dev_fraction * n as f64).round() as usize;
    if n_dev >= n {
        return Err(Error::EmptyTestSet(dev_fraction));
    }
    if n_dev == 0 {
        return Err(Error::EmptyDevSet(dev_fraction));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let (dev, test) = order.split_at_mut(n_dev);
    dev.sort_unstable();
    test.sort_unstable();
    let ids = t.example_ids();
    Ok(SplitSpec {
        dev_fraction,
        rng_seed,
        dev_ids: dev.iter().map(|&i| ids[i].clone()).collect(),
        test_ids: test.iter().map(|&i| ids[i].clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Selector<'a> {
    /// Select on the target's own dev part.
    SelfDev,
    /// Select on the full accuracy of another dataset.
    External(&'a PredictionTensor),
}

impl Selector<'_> {
    pub fn name(&self) -> String {
        match self {
            Selector::SelfDev => "self-dev".to_string(),
            Selector::External(t) => t.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResplitReport {
    pub target: String,
    pub selector_name: String,
    /// In the target's run order.
    pub per_run_selected_checkpoint: Vec<(RunId, CheckpointIndex)>,
    /// Per-run test-part accuracy at the selected checkpoint.
    pub per_run_test_accuracy: Vec<f64>,
    pub test_mean: f64,
    pub test_std: f64,
}

fn resolve(t: &PredictionTensor, ids: &[String]) -> Result<Vec<usize>> {
    let pos: HashMap<&str, usize> = t
        .example_ids()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    ids.iter()
        .map(|id| {
            pos.get(id.as_str()).copied().ok_or_else(|| {
                Error::AxisMismatch(format!("split id {id:?} not in dataset {:?}", t.name()))
            })
        })
        .collect()
}

fn subset_accuracy(row: &[f64], idx: &[usize]) -> f64 {
    let vals: Vec<f64> = idx.iter().map(|&i| row[i]).collect();
    pairwise_sum(&vals) / vals.len() as f64
}

/// Earliest index of the maximum.
fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn select_and_evaluate(
    target: &PredictionTensor,
    split: &SplitSpec,
    selector: Selector<'_>,
) -> Result<ResplitReport> {
    if target.n_runs() < 2 {
        return Err(Error::InsufficientRuns(target.n_runs()));
    }
    if let Selector::External(ext) = selector {
        if ext.runs() != target.runs() || ext.checkpoints() != target.checkpoints() {
            return Err(Error::AxisMismatch(format!(
                "selector {:?} does not share run/checkpoint axes with {:?}",
                ext.name(),
                target.name()
            )));
        }
    }
    let test = resolve(target, &split.test_ids)?;
    let dev = match selector {
        Selector::SelfDev => resolve(target, &split.dev_ids)?,
        Selector::External(_) => Vec::new(),
    };
    if test.is_empty() {
        return Err(Error::EmptyTestSet(split.dev_fraction));
    }
    if matches!(selector, Selector::SelfDev) && dev.is_empty() {
        return Err(Error::EmptyDevSet(split.dev_fraction));
    }

    let mut selected = Vec::with_capacity(target.n_runs());
    let mut test_acc = Vec::with_capacity(target.n_runs());
    for r in 0..target.n_runs() {
        let scores: Vec<f64> = (0..target.n_checkpoints())
            .map(|c| match selector {
                Selector::SelfDev => subset_accuracy(target.row(r, c), &dev),
                Selector::External(ext) => accuracy(ext.row(r, c)),
            })
            .collect();
        let best = argmax_first(&scores);
        selected.push((target.runs()[r].clone(), target.checkpoints()[best]));
        test_acc.push(subset_accuracy(target.row(r, best), &test));
    }
    Ok(ResplitReport {
        target: target.name().to_string(),
        selector_name: selector.name(),
        per_run_selected_checkpoint: selected,
        test_mean: mean(&test_acc),
        test_std: sample_std(&test_acc),
        per_run_test_accuracy: test_acc,
    })
}

/// Splits once per seed and evaluates every selector on each split.
pub fn resplit_repeated(
    target: &PredictionTensor,
    selectors: &[Selector<'_>],
    dev_fraction: f64,
    seeds: &[u64],
) -> Result<Vec<(SplitSpec, Vec<ResplitReport>)>> {
    seeds
        .iter()
        .map(|&seed| {
            let split = make_split(target, dev_fraction, seed)?;
            let reports = selectors
                .iter()
                .map(|&sel| select_and_evaluate(target, &split, sel))
                .collect::<Result<Vec<_>>>()?;
            Ok((split, reports))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::test_support::tensor;
    use crate::store::{DatasetKind, DatasetMeta};

    fn ten_examples(
        runs: usize,
        checkpoints: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> PredictionTensor {
        let grid: Vec<Vec<Vec<f64>>> = (0..runs)
            .map(|r| {
                (0..checkpoints)
                    .map(|c| (0..10).map(|e| f(r, c, e)).collect())
                    .collect()
            })
            .collect();
        tensor("target", &grid)
    }

    #[test]
    fn split_sizes_and_determinism() {
        let t = ten_examples(2, 1, |_, _, _| 1.0);
        let a = make_split(&t, 0.8, 42).unwrap();
        assert_eq!((a.dev_ids.len(), a.test_ids.len()), (8, 2));
        assert!(a.test_ids.iter().all(|id| !a.dev_ids.contains(id)));
        assert_eq!(a, make_split(&t, 0.8, 42).unwrap());
        let mut all = [a.dev_ids.clone(), a.test_ids.clone()].concat();
        all.sort();
        assert_eq!(all, t.example_ids());
    }

    #[test]
    fn degenerate_fractions() {
        let t = ten_examples(2, 1, |_, _, _| 1.0);
        assert!(matches!(
            make_split(&t, 0.999, 0),
            Err(Error::EmptyTestSet(_))
        ));
        assert!(matches!(
            make_split(&t, 0.01, 0),
            Err(Error::EmptyDevSet(_))
        ));
        assert!(matches!(
            make_split(&t, 1.0, 0),
            Err(Error::InvalidParameter(_))
        ));
        let small = tensor("s", &[vec![vec![1.0; 4]], vec![vec![0.0; 4]]]);
        assert!(matches!(
            make_split(&small, 0.8, 0),
            Err(Error::DatasetTooSmall { min: 5, got: 4 })
        ));
    }

    #[test]
    fn dominant_checkpoint_is_selected() {
        // checkpoint 1 is all-correct; the others are all wrong
        let t = ten_examples(3, 3, |_, c, _| if c == 1 { 1.0 } else { 0.0 });
        let split = make_split(&t, 0.8, 1).unwrap();
        let rep = select_and_evaluate(&t, &split, Selector::SelfDev).unwrap();
        assert!(rep
            .per_run_selected_checkpoint
            .iter()
            .all(|(_, c)| *c == CheckpointIndex(1)));
        assert_eq!(rep.test_mean, 1.0);
        assert_eq!(rep.test_std, 0.0);
    }

    #[test]
    fn ties_pick_earliest_checkpoint() {
        let t = ten_examples(2, 4, |_, _, e| (e % 2) as f64);
        let split = make_split(&t, 0.8, 5).unwrap();
        let rep = select_and_evaluate(&t, &split, Selector::SelfDev).unwrap();
        assert!(rep
            .per_run_selected_checkpoint
            .iter()
            .all(|(_, c)| *c == CheckpointIndex(0)));
    }

    #[test]
    fn external_selector_must_share_axes() {
        let t = ten_examples(2, 3, |_, _, _| 1.0);
        let other = ten_examples(2, 2, |_, _, _| 1.0);
        let split = make_split(&t, 0.8, 0).unwrap();
        assert!(matches!(
            select_and_evaluate(&t, &split, Selector::External(&other)),
            Err(Error::AxisMismatch(_))
        ));
    }

    #[test]
    fn external_selector_drives_choice() {
        // external favors checkpoint 2 for run 0 and checkpoint 0 for run 1
        let ext = ten_examples(2, 3, |r, c, _| {
            if (r == 0 && c == 2) || (r == 1 && c == 0) {
                1.0
            } else {
                0.0
            }
        });
        let t = ten_examples(2, 3, |_, c, e| if e < 2 * c { 1.0 } else { 0.0 });
        let split = make_split(&t, 0.8, 9).unwrap();
        let rep = select_and_evaluate(&t, &split, Selector::External(&ext)).unwrap();
        let chosen: Vec<u64> = rep
            .per_run_selected_checkpoint
            .iter()
            .map(|(_, c)| c.0)
            .collect();
        assert_eq!(chosen, vec![2, 0]);
        assert_eq!(rep.selector_name, "target");
    }

    /// Dev == test, bypassing the split guardrail.
    #[test]
    fn self_dev_on_full_set_reaches_best_mean() {
        let t = ten_examples(4, 5, |r, c, e| {
            ((r * 7 + c * 3 + e * 5) % 4 == 0) as u8 as f64
        });
        let all = t.example_ids().to_vec();
        let split = SplitSpec {
            dev_fraction: 1.0,
            rng_seed: 0,
            dev_ids: all.clone(),
            test_ids: all,
        };
        let rep = select_and_evaluate(&t, &split, Selector::SelfDev).unwrap();
        let best: Vec<f64> = (0..4)
            .map(|r| {
                (0..5)
                    .map(|c| accuracy(t.row(r, c)))
                    .fold(f64::MIN, f64::max)
            })
            .collect();
        assert!((rep.test_mean - mean(&best)).abs() < 1e-15);
    }

    #[test]
    fn run_permutation_permutes_selection() {
        let f = |r: usize, c: usize, e: usize| ((r * 5 + c * 11 + e * 3) % 7 < 3) as u8 as f64;
        let t = ten_examples(3, 4, f);
        let perm = [2usize, 0, 1];
        let scores: Vec<f64> = perm
            .iter()
            .flat_map(|&r| (0..4).flat_map(move |c| (0..10).map(move |e| f(r, c, e))))
            .collect();
        let permuted = PredictionTensor::new(
            DatasetMeta {
                name: "target".into(),
                size: 10,
                kind: DatasetKind::Analysis,
            },
            perm.iter().map(|&r| RunId(format!("r{r}"))).collect(),
            t.checkpoints().to_vec(),
            t.example_ids().to_vec(),
            scores,
        )
        .unwrap();
        let split = make_split(&t, 0.8, 3).unwrap();
        let a = select_and_evaluate(&t, &split, Selector::SelfDev).unwrap();
        let b = select_and_evaluate(&permuted, &split, Selector::SelfDev).unwrap();
        for (k, &r) in perm.iter().enumerate() {
            assert_eq!(
                b.per_run_selected_checkpoint[k],
                a.per_run_selected_checkpoint[r]
            );
        }
    }

    #[test]
    fn repeated_splits() {
        let t = ten_examples(3, 3, |r, c, e| ((r + c + e) % 3 == 0) as u8 as f64);
        let out = resplit_repeated(&t, &[Selector::SelfDev], 0.8, &[1, 2, 3]).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[1].0.rng_seed, 2);
    }
}
