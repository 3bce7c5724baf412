//! Prediction logs: the dense `[run × checkpoint × example]` score tensor,
//! JSONL ingestion and the binary container format.

mod ingest;
mod persist;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest_jsonl, ingest_jsonl_reader, PredictionRecord};
pub use persist::{decode_tensor, encode_tensor, load_tensor, save_tensor, MAGIC};

/// A per-example score in `[0, 1]`: 0/1 correctness, or a soft score such as F1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExampleScore(f64);

impl ExampleScore {
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && (0.0..=1.0).contains(&value)).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Label of one training run (one random seed).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunId(pub String);

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordinal position of a checkpoint in training order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CheckpointIndex(pub u64);

impl fmt::Display for CheckpointIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Standard,
    Analysis,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Standard => "standard",
            DatasetKind::Analysis => "analysis",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(DatasetKind::Standard),
            "analysis" => Ok(DatasetKind::Analysis),
            other => Err(Error::InvalidParameter(format!(
                "unknown dataset kind {other:?} (expected standard or analysis)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub size: usize,
    pub kind: DatasetKind,
}

/// Half-open range over checkpoint values: `start..end`, `end` open when `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointRange {
    pub start: u64,
    pub end: Option<u64>,
}

impl CheckpointRange {
    pub fn contains(&self, c: CheckpointIndex) -> bool {
        c.0 >= self.start && self.end.is_none_or(|e| c.0 < e)
    }
}

impl fmt::Display for CheckpointRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.end {
            Some(e) => write!(f, "{}..{}", self.start, e),
            None => write!(f, "{}..", self.start),
        }
    }
}

impl FromStr for CheckpointRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad checkpoint range {s:?} (expected A..B)"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let start = if a.is_empty() {
            0
        } else {
            a.parse().map_err(|_| bad())?
        };
        let end = if b.is_empty() {
            None
        } else {
            Some(b.parse().map_err(|_| bad())?)
        };
        if end.is_some_and(|e| e <= start) {
            return Err(bad());
        }
        Ok(CheckpointRange { start, end })
    }
}

/// Dense score tensor for one evaluation set.
///
/// Scores are stored row-major as `[run][checkpoint][example]`. Instances are
/// immutable once built; every constructor validates the full invariant set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    meta: DatasetMeta,
    runs: Vec<RunId>,
    checkpoints: Vec<CheckpointIndex>,
    example_ids: Vec<String>,
    scores: Vec<f64>,
}

impl PredictionTensor {
    pub fn new(
        meta: DatasetMeta,
        runs: Vec<RunId>,
        checkpoints: Vec<CheckpointIndex>,
        example_ids: Vec<String>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        let (s, t, n) = (runs.len(), checkpoints.len(), example_ids.len());
        if s == 0 || t == 0 || n == 0 {
            return Err(Error::InvalidTensor(format!(
                "every axis must be non-empty (runs {s}, checkpoints {t}, examples {n})"
            )));
        }
        if meta.size != n {
            return Err(Error::MetaMismatch(format!(
                "dataset {:?} declares {} examples but the tensor has {n}",
                meta.name, meta.size
            )));
        }
        if scores.len() != s * t * n {
            return Err(Error::InvalidTensor(format!(
                "expected {} scores for shape [{s} x {t} x {n}], got {}",
                s * t * n,
                scores.len()
            )));
        }
        let mut seen = HashSet::with_capacity(s);
        if let Some(dup) = runs.iter().find(|r| !seen.insert(*r)) {
            return Err(Error::InvalidTensor(format!("duplicate run id {dup}")));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = example_ids.iter().find(|e| !seen.insert(e.as_str())) {
            return Err(Error::InvalidTensor(format!(
                "duplicate example id {dup:?}"
            )));
        }
        if let Some(w) = checkpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTensor(format!(
                "checkpoints must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(pos) = scores.iter().position(|&v| ExampleScore::new(v).is_none()) {
            let (r, rest) = (pos / (t * n), pos % (t * n));
            return Err(Error::ScoreOutOfRange {
                value: scores[pos],
                run: runs[r].0.clone(),
                checkpoint: checkpoints[rest / n].0,
                example: example_ids[rest % n].clone(),
            });
        }
        Ok(Self {
            meta,
            runs,
            checkpoints,
            example_ids,
            scores,
        })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn runs(&self) -> &[RunId] {
        &self.runs
    }

    pub fn checkpoints(&self) -> &[CheckpointIndex] {
        &self.checkpoints
    }

    pub fn example_ids(&self) -> &[String] {
        &self.example_ids
    }

    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn n_checkpoints(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn n_examples(&self) -> usize {
        self.example_ids.len()
    }

    /// All scores, row-major `[run][checkpoint][example]`.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, run: usize, checkpoint: usize, example: usize) -> f64 {
        self.scores[self.offset(run, checkpoint) + example]
    }

    /// Scores of every example for one `(run, checkpoint)` cell.
    pub fn row(&self, run: usize, checkpoint: usize) -> &[f64] {
        let start = self.offset(run, checkpoint);
        &self.scores[start..start + self.n_examples()]
    }

    fn offset(&self, run: usize, checkpoint: usize) -> usize {
        (run * self.n_checkpoints() + checkpoint) * self.n_examples()
    }

    pub fn checkpoint_position(&self, c: CheckpointIndex) -> Option<usize> {
        self.checkpoints.binary_search(&c).ok()
    }

    /// Copy keeping only checkpoints inside `range`.
    pub fn select_checkpoints(&self, range: CheckpointRange) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n_checkpoints())
            .filter(|&i| range.contains(self.checkpoints[i]))
            .collect();
        if keep.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "checkpoint range {range} selects nothing from dataset {:?}",
                self.meta.name
            )));
        }
        let mut scores = Vec::with_capacity(self.n_runs() * keep.len() * self.n_examples());
        for r in 0..self.n_runs() {
            for &c in &keep {
                scores.extend_from_slice(self.row(r, c));
            }
        }
        Ok(Self {
            meta: self.meta.clone(),
            runs: self.runs.clone(),
            checkpoints: keep.iter().map(|&i| self.checkpoints[i]).collect(),
            example_ids: self.example_ids.clone(),
            scores,
        })
    }

    /// The rectangle of runs at the given checkpoint, or the last one.
    pub fn final_slice(&self, at: Option<CheckpointIndex>) -> Result<FinalSlice> {
        let pos = match at {
            Some(c) => self
                .checkpoint_position(c)
                .ok_or(Error::UnknownCheckpoint(c.0))?,
            None => self.n_checkpoints() - 1,
        };
        let mut scores = Vec::with_capacity(self.n_runs() * self.n_examples());
        for r in 0..self.n_runs() {
            scores.extend_from_slice(self.row(r, pos));
        }
        Ok(FinalSlice {
            checkpoint: self.checkpoints[pos],
            example_ids: self.example_ids.clone(),
            n_runs: self.n_runs(),
            scores,
        })
    }
}

/// `[run × example]` scores at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSlice {
    pub checkpoint: CheckpointIndex,
    example_ids: Vec<String>,
    n_runs: usize,
    scores: Vec<f64>,
}

impl FinalSlice {
    /// Build directly from rows (one per run). Example ids default to `e1..eN`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n == 0 {
            return Err(Error::InvalidTensor(
                "slice needs at least one run and one example".into(),
            ));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                left: n,
                right: bad.len(),
            });
        }
        if let Some(&v) = rows
            .iter()
            .flatten()
            .find(|&&v| ExampleScore::new(v).is_none())
        {
            return Err(Error::ScoreOutOfRange {
                value: v,
                run: String::new(),
                checkpoint: 0,
                example: String::new(),
            });
        }
        Ok(Self {
            checkpoint: CheckpointIndex(0),
            example_ids: (1..=n).map(|i| format!("e{i}")).collect(),
            n_runs: rows.len(),
            scores: rows.concat(),
        })
    }

    pub fn with_example_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_examples() {
            return Err(Error::LengthMismatch {
                left: self.n_examples(),
                right: ids.len(),
            });
        }
        self.example_ids = ids;
        Ok(self)
    }

    pub fn n_runs(&self) -> usize {
        self.n_runs
    }

    pub fn n_examples(&self) -> usize {
        self.example_ids.len()
    }

    pub fn example_ids(&self) -> &[String] {
        &self.example_ids
    }

    pub fn row(&self, run: usize) -> &[f64] {
        let n = self.n_examples();
        &self.scores[run * n..(run + 1) * n]
    }

    /// Scores of one example across runs.
    pub fn column(&self, example: usize) -> Vec<f64> {
        (0..self.n_runs).map(|r| self.row(r)[example]).collect()
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::tensor;
    use super::*;

    fn three_checkpoints() -> PredictionTensor {
        tensor(
            "d",
            &[
                vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![0.5, 1.0]],
            ],
        )
    }

    #[test]
    fn final_slice_defaults_to_last_checkpoint() {
        let t = three_checkpoints();
        let f = t.final_slice(None).unwrap();
        assert_eq!(f.checkpoint, CheckpointIndex(2));
        assert_eq!(f.row(0), &[1.0, 1.0]);
        assert_eq!(f.row(1), &[0.5, 1.0]);
    }

    #[test]
    fn final_slice_at_first_checkpoint() {
        let f = three_checkpoints()
            .final_slice(Some(CheckpointIndex(0)))
            .unwrap();
        assert_eq!(f.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn final_slice_unknown_checkpoint() {
        let err = three_checkpoints()
            .final_slice(Some(CheckpointIndex(99)))
            .unwrap_err();
        assert!(matches!(err, Error::UnknownCheckpoint(99)));
    }

    #[test]
    fn empty_example_axis_is_rejected() {
        let err = PredictionTensor::new(
            DatasetMeta {
                name: "x".into(),
                size: 0,
                kind: DatasetKind::Standard,
            },
            vec![RunId("a".into())],
            vec![CheckpointIndex(0)],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidTensor(_)));
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let err = PredictionTensor::new(
            DatasetMeta {
                name: "x".into(),
                size: 1,
                kind: DatasetKind::Standard,
            },
            vec![RunId("a".into())],
            vec![CheckpointIndex(0)],
            vec!["e".into()],
            vec![1.2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ScoreOutOfRange { .. }));
    }

    #[test]
    fn checkpoint_range_parsing_and_selection() {
        let r: CheckpointRange = "1..3".parse().unwrap();
        assert_eq!(
            r,
            CheckpointRange {
                start: 1,
                end: Some(3)
            }
        );
        let open: CheckpointRange = "2..".parse().unwrap();
        assert_eq!(open.end, None);
        assert!("3..1".parse::<CheckpointRange>().is_err());
        assert!("abc".parse::<CheckpointRange>().is_err());

        let t = three_checkpoints().select_checkpoints(r).unwrap();
        assert_eq!(t.checkpoints(), &[CheckpointIndex(1), CheckpointIndex(2)]);
        assert_eq!(t.row(1, 0), &[0.0, 0.0]);
        assert!(three_checkpoints()
            .select_checkpoints("10..".parse().unwrap())
            .is_err());
    }
}
