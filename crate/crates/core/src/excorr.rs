//! Inter-example correlation: the example-by-example Spearman matrix,
//! highest-covariance pairs, and threshold blocks.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum};
use crate::rank::{centered_correlation, centered_ranks, RankCorrelation};
use crate::store::{FinalSlice, PredictionTensor};

/// Default cap on the number of examples in a correlation matrix.
pub const DEFAULT_SUBSAMPLE_CAP: usize = 2000;

const TILE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationAxis {
    /// One series of `S·T` observations per example.
    #[default]
    PooledSeedCheckpoint,
    /// Spearman over checkpoints per seed, averaged over seeds.
    PerSeedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subsample {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleCorrelationMatrix {
    pub example_ids: Vec<String>,
    /// Positions of the kept examples in the source tensor.
    pub source_indices: Vec<usize>,
    pub observation_axis: ObservationAxis,
    // NaN marks undefined
    values: Vec<f64>,
}

impl ExampleCorrelationMatrix {
    /// Builds a matrix from explicit values; `None` is undefined.
    pub fn from_values(example_ids: Vec<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let n = example_ids.len();
        if values.len() != n * n {
            return Err(Error::LengthMismatch {
                left: n * n,
                right: values.len(),
            });
        }
        Ok(Self {
            source_indices: (0..n).collect(),
            example_ids,
            observation_axis: ObservationAxis::PooledSeedCheckpoint,
            values: values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.example_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.len() + j];
        (!v.is_nan()).then_some(v)
    }
}

/// Uniform subset without replacement, returned in ascending (input) order.
pub fn subsample_indices(n: usize, sub: Option<Subsample>) -> Vec<usize> {
    match sub {
        Some(Subsample { count, seed }) if count < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, n, count).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..n).collect(),
    }
}

pub fn example_correlation_matrix(
    t: &PredictionTensor,
    subsample: Option<Subsample>,
    axis: ObservationAxis,
) -> Result<ExampleCorrelationMatrix> {
    let (s, tc) = (t.n_runs(), t.n_checkpoints());
    match axis {
        ObservationAxis::PooledSeedCheckpoint if s * tc < 2 => {
            return Err(Error::TooFewObservations(s * tc))
        }
        ObservationAxis::PerSeedMean if tc < 2 => return Err(Error::TooFewObservations(tc)),
        _ => {}
    }
    let kept = subsample_indices(t.n_examples(), subsample);
    let n = kept.len();

    // One or S rank series per kept example.
    let series: Vec<Vec<(Vec<f64>, f64)>> = kept
        .par_iter()
        .map(|&e| match axis {
            ObservationAxis::PooledSeedCheckpoint => {
                let obs: Vec<f64> = (0..s)
                    .flat_map(|r| (0..tc).map(move |c| (r, c)))
                    .map(|(r, c)| t.score(r, c, e))
                    .collect();
                vec![centered_ranks(&obs)]
            }
            ObservationAxis::PerSeedMean => (0..s)
                .map(|r| {
                    let obs: Vec<f64> = (0..tc).map(|c| t.score(r, c, e)).collect();
                    centered_ranks(&obs)
                })
                .collect(),
        })
        .collect();

    let cell = |i: usize, j: usize| -> f64 {
        let per: Vec<f64> = series[i]
            .iter()
            .zip(&series[j])
            .filter_map(|((a, sa), (b, sb))| centered_correlation(a, *sa, b, *sb).value())
            .collect();
        if per.is_empty() {
            f64::NAN
        } else {
            pairwise_sum(&per) / per.len() as f64
        }
    };

    let tiles = n.div_ceil(TILE);
    let tile_pairs: Vec<(usize, usize)> = (0..tiles)
        .flat_map(|a| (a..tiles).map(move |b| (a, b)))
        .collect();
    let computed: Vec<((usize, usize), Vec<f64>)> = tile_pairs
        .par_iter()
        .map(|&(a, b)| {
            let rows = a * TILE..((a + 1) * TILE).min(n);
            let cols = b * TILE..((b + 1) * TILE).min(n);
            let mut out = Vec::with_capacity(rows.len() * cols.len());
            for i in rows {
                for j in cols.clone() {
                    out.push(if j < i { f64::NAN } else { cell(i, j) });
                }
            }
            ((a, b), out)
        })
        .collect();

    let mut values = vec![f64::NAN; n * n];
    for ((a, b), block) in computed {
        let width = ((b + 1) * TILE).min(n) - b * TILE;
        for (k, v) in block.into_iter().enumerate() {
            let (i, j) = (a * TILE + k / width, b * TILE + k % width);
            if j >= i {
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
    }
    Ok(ExampleCorrelationMatrix {
        example_ids: kept.iter().map(|&e| t.example_ids()[e].clone()).collect(),
        source_indices: kept,
        observation_axis: axis,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatedPair {
    pub example_a: String,
    pub example_b: String,
    pub covariance: f64,
    /// Spearman over the runs of the same slice.
    pub correlation: RankCorrelation,
}

fn pair_order(a: &(f64, usize, usize), b: &(f64, usize, usize), ids: &[String]) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| ids[a.1].cmp(&ids[b.1]))
        .then_with(|| ids[a.2].cmp(&ids[b.2]))
}

/// The `k` example pairs with the largest sample covariance across runs.
pub fn top_covariance_pairs(f: &FinalSlice, k: usize) -> Result<Vec<CorrelatedPair>> {
    let s = f.n_runs();
    if s < 2 {
        return Err(Error::InsufficientRuns(s));
    }
    let ids = f.example_ids();
    let n = f.n_examples();
    let denom = (s - 1) as f64;
    let centered: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = f.column(i);
            let m = mean(&c);
            c.into_iter().map(|v| v - m).collect()
        })
        .collect();

    let top_k = |mut v: Vec<(f64, usize, usize)>| {
        if v.len() > k {
            v.select_nth_unstable_by(k, |a, b| pair_order(a, b, ids));
            v.truncate(k);
        }
        v
    };

    let candidates: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let row: Vec<(f64, usize, usize)> = (i + 1..n)
                .map(|j| {
                    let prods: Vec<f64> = centered[i]
                        .iter()
                        .zip(&centered[j])
                        .map(|(a, b)| a * b)
                        .collect();
                    let (a, b) = if ids[i] <= ids[j] { (i, j) } else { (j, i) };
                    (pairwise_sum(&prods) / denom, a, b)
                })
                .collect();
            top_k(row)
        })
        .collect();
    let mut best = top_k(candidates);
    best.sort_by(|a, b| pair_order(a, b, ids));

    Ok(best
        .into_iter()
        .map(|(cov, a, b)| {
            let (ca, sa) = centered_ranks(&f.column(a));
            let (cb, sb) = centered_ranks(&f.column(b));
            CorrelatedPair {
                example_a: ids[a].clone(),
                example_b: ids[b].clone(),
                covariance: cov,
                correlation: centered_correlation(&ca, sa, &cb, sb),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationBlock {
    /// In matrix order.
    pub member_ids: Vec<String>,
    pub mean_internal_correlation: f64,
    pub size: usize,
}

/// Connected components of the graph with an edge wherever correlation ≥ `tau`.
///
/// Singletons are dropped. Blocks are sorted by size (descending), then by
/// their smallest member id. `tau` must lie in `(0, 1]`.
pub fn correlation_blocks(m: &ExampleCorrelationMatrix, tau: f64) -> Vec<CorrelationBlock> {
    assert!(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1], got {tau}");
    let n = m.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if m.get(i, j).is_some_and(|v| v >= tau) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut blocks: Vec<CorrelationBlock> = groups
        .into_values()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let internal: Vec<f64> = g
                .iter()
                .enumerate()
                .flat_map(|(a, &i)| g[a + 1..].iter().map(move |&j| (i, j)))
                .filter_map(|(i, j)| m.get(i, j))
                .collect();
            CorrelationBlock {
                size: g.len(),
                member_ids: g.iter().map(|&i| m.example_ids[i].clone()).collect(),
                mean_internal_correlation: mean(&internal),
            }
        })
        .collect();
    let smallest = |b: &CorrelationBlock| b.member_ids.iter().min().cloned().unwrap_or_default();
    blocks.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then_with(|| smallest(a).cmp(&smallest(b)))
    });
    blocks
}
