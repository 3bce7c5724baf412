//! Block-latent Bernoulli generator of correlated prediction tensors.
//!
//! For every `(run, checkpoint, block)` a latent `b ~ Bernoulli(q)` is drawn
//! and each member example scores `b`, flipped independently with probability
//! `eps`. With `p = q(1-eps) + (1-q)eps`:
//!
//! * `Var(C_i) = p(1-p)`
//! * `Cov(C_i, C_j) = q(1-q)(1-2eps)^2` within a block, 0 across blocks.
//!
//! An optional persistence `rho` keeps a block's latent from the previous
//! checkpoint with probability `rho`; marginal moments per checkpoint are
//! unchanged.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::VarianceDecomposition;
use crate::store::{
    CheckpointIndex, DatasetKind, DatasetMeta, PredictionRecord, PredictionTensor, RunId,
};

fn default_dataset() -> String {
    "synthetic".to_string()
}

fn default_kind() -> DatasetKind {
    DatasetKind::Analysis
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockModelSpec {
    #[serde(default = "default_dataset")]
    pub dataset: String,
    #[serde(default = "default_kind")]
    pub kind: DatasetKind,
    pub n_examples: usize,
    /// Empty means every example is its own block.
    #[serde(default)]
    pub block_sizes: Vec<usize>,
    pub n_runs: usize,
    pub n_checkpoints: usize,
    pub block_base_rate: f64,
    pub flip_noise: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub persistence: f64,
}

impl BlockModelSpec {
    /// `n` singleton blocks.
    pub fn independent(
        n: usize,
        runs: usize,
        checkpoints: usize,
        q: f64,
        eps: f64,
        seed: u64,
    ) -> Self {
        Self::blocks(vec![1; n], runs, checkpoints, q, eps, seed)
    }

    pub fn blocks(
        block_sizes: Vec<usize>,
        runs: usize,
        checkpoints: usize,
        q: f64,
        eps: f64,
        seed: u64,
    ) -> Self {
        Self {
            dataset: default_dataset(),
            kind: default_kind(),
            n_examples: block_sizes.iter().sum(),
            block_sizes,
            n_runs: runs,
            n_checkpoints: checkpoints,
            block_base_rate: q,
            flip_noise: eps,
            rng_seed: seed,
            persistence: 0.0,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_examples == 0 || self.n_runs == 0 || self.n_checkpoints == 0 {
            return bad("n_examples, n_runs and n_checkpoints must be positive".into());
        }
        if self.block_sizes.contains(&0) {
            return bad("block sizes must be positive".into());
        }
        let total: usize = self.block_sizes.iter().sum();
        if !self.block_sizes.is_empty() && total != self.n_examples {
            return bad(format!(
                "block sizes sum to {total}, expected {}",
                self.n_examples
            ));
        }
        if !(self.block_base_rate > 0.0 && self.block_base_rate < 1.0) {
            return bad(format!(
                "block_base_rate must be in (0, 1), got {}",
                self.block_base_rate
            ));
        }
        if !(self.flip_noise >= 0.0 && self.flip_noise < 0.5) {
            return bad(format!(
                "flip_noise must be in [0, 0.5), got {}",
                self.flip_noise
            ));
        }
        if !(self.persistence >= 0.0 && self.persistence < 1.0) {
            return bad(format!(
                "persistence must be in [0, 1), got {}",
                self.persistence
            ));
        }
        Ok(())
    }

    /// Marginal correctness probability of one example.
    pub fn marginal_rate(&self) -> f64 {
        let (q, e) = (self.block_base_rate, self.flip_noise);
        q * (1.0 - e) + (1.0 - q) * e
    }

    /// Block sizes with the empty shorthand expanded.
    pub fn effective_block_sizes(&self) -> Vec<usize> {
        if self.block_sizes.is_empty() {
            vec![1; self.n_examples]
        } else {
            self.block_sizes.clone()
        }
    }

    pub fn within_block_covariance(&self) -> f64 {
        let (q, e) = (self.block_base_rate, self.flip_noise);
        q * (1.0 - q) * (1.0 - 2.0 * e).powi(2)
    }
}

fn padded(prefix: &str, i: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

pub fn generate(spec: &BlockModelSpec) -> Result<PredictionTensor> {
    spec.validate()?;
    let (s, t, n) = (spec.n_runs, spec.n_checkpoints, spec.n_examples);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut scores = Vec::with_capacity(s * t * n);
    let sizes = spec.effective_block_sizes();
    let mut latent = vec![false; sizes.len()];
    for _run in 0..s {
        for ck in 0..t {
            for (b, &size) in sizes.iter().enumerate() {
                let keep = ck > 0 && spec.persistence > 0.0 && rng.gen::<f64>() < spec.persistence;
                if !keep {
                    latent[b] = rng.gen::<f64>() < spec.block_base_rate;
                }
                for _ in 0..size {
                    let flip = rng.gen::<f64>() < spec.flip_noise;
                    scores.push(if latent[b] != flip { 1.0 } else { 0.0 });
                }
            }
        }
    }
    PredictionTensor::new(
        DatasetMeta {
            name: spec.dataset.clone(),
            size: n,
            kind: spec.kind,
        },
        (0..s).map(|r| RunId(padded("seed", r, s))).collect(),
        (0..t as u64).map(CheckpointIndex).collect(),
        (0..n).map(|i| padded("ex", i, n)).collect(),
        scores,
    )
}

/// Population values of the decomposition under the block model.
pub fn predicted_decomposition(spec: &BlockModelSpec) -> VarianceDecomposition {
    let n = spec.n_examples as f64;
    let p = spec.marginal_rate();
    let idp = p * (1.0 - p) / n;
    let pairs: f64 = spec
        .effective_block_sizes()
        .iter()
        .map(|&k| (k * k.saturating_sub(1) / 2) as f64)
        .sum();
    let cov = 2.0 / (n * n) * pairs * spec.within_block_covariance();
    VarianceDecomposition::from_terms(idp + cov, idp, cov)
}

/// Records in the prediction-log layout, ordered run, checkpoint, example.
pub fn to_records(t: &PredictionTensor) -> impl Iterator<Item = PredictionRecord> + '_ {
    (0..t.n_runs()).flat_map(move |r| {
        (0..t.n_checkpoints()).flat_map(move |c| {
            (0..t.n_examples()).map(move |e| PredictionRecord {
                run_id: t.runs()[r].0.clone(),
                checkpoint: t.checkpoints()[c].0,
                dataset: t.name().to_string(),
                example_id: t.example_ids()[e].clone(),
                score: t.score(r, c, e),
            })
        })
    })
}
