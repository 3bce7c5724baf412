use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckpointIndex, DatasetKind, DatasetMeta, ExampleScore, PredictionTensor, RunId};
use crate::error::{Error, Result};

/// One line of a prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub run_id: String,
    pub checkpoint: u64,
    pub dataset: String,
    pub example_id: String,
    pub score: f64,
}

pub fn ingest_jsonl(path: &Path, expected: Option<&DatasetMeta>) -> Result<PredictionTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_jsonl_reader(BufReader::new(file), expected)
}

struct Cell {
    run: u32,
    example: u32,
    checkpoint: u64,
    score: f64,
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, s: String) -> u32 {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.clone());
        self.ids.insert(s, id);
        id
    }

    /// Maps interned ids to positions in lexicographic order.
    fn sorted(self) -> (Vec<String>, Vec<usize>) {
        let mut order: Vec<u32> = (0..self.names.len() as u32).collect();
        order.sort_by(|&a, &b| self.names[a as usize].cmp(&self.names[b as usize]));
        let mut position = vec![0; order.len()];
        for (pos, &id) in order.iter().enumerate() {
            position[id as usize] = pos;
        }
        let mut names = self.names;
        let sorted = order
            .iter()
            .map(|&id| std::mem::take(&mut names[id as usize]))
            .collect();
        (sorted, position)
    }
}

/// Reads JSONL records in any order into a dense, axis-sorted tensor.
pub fn ingest_jsonl_reader<R: BufRead>(
    reader: R,
    expected: Option<&DatasetMeta>,
) -> Result<PredictionTensor> {
    let mut runs = Interner::default();
    let mut examples = Interner::default();
    let mut cells = Vec::new();
    let mut dataset: Option<String> = None;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        match &dataset {
            None => dataset = Some(rec.dataset.clone()),
            Some(d) if *d != rec.dataset => {
                return Err(Error::MetaMismatch(format!(
                    "line {line_no}: dataset {:?} differs from {d:?}",
                    rec.dataset
                )))
            }
            Some(_) => {}
        }
        if ExampleScore::new(rec.score).is_none() {
            return Err(Error::ScoreOutOfRange {
                value: rec.score,
                run: rec.run_id,
                checkpoint: rec.checkpoint,
                example: rec.example_id,
            });
        }
        cells.push(Cell {
            run: runs.intern(rec.run_id),
            example: examples.intern(rec.example_id),
            checkpoint: rec.checkpoint,
            score: rec.score,
        });
    }

    let name =
        dataset.ok_or_else(|| Error::InvalidTensor("prediction log has no records".into()))?;
    if let Some(exp) = expected {
        if exp.name != name {
            return Err(Error::MetaMismatch(format!(
                "expected dataset {:?}, log contains {name:?}",
                exp.name
            )));
        }
    }

    let mut per_run: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); runs.names.len()];
    for c in &cells {
        per_run[c.run as usize].insert(c.checkpoint);
    }
    let all: BTreeSet<u64> = per_run.iter().flatten().copied().collect();
    let (run_names, run_pos) = runs.sorted();
    if let Some((r, _)) = per_run.iter().enumerate().find(|(_, set)| **set != all) {
        return Err(Error::MetaMismatch(format!(
            "run {:?} has a checkpoint sequence different from the other runs",
            run_names[run_pos[r]]
        )));
    }
    let checkpoints: Vec<u64> = all.into_iter().collect();
    let (example_ids, example_pos) = examples.sorted();

    let (s, t, n) = (run_names.len(), checkpoints.len(), example_ids.len());
    let mut scores = vec![0.0; s * t * n];
    let mut filled = vec![false; s * t * n];
    for c in &cells {
        let ck = checkpoints
            .binary_search(&c.checkpoint)
            .expect("checkpoint is in axis");
        let idx = (run_pos[c.run as usize] * t + ck) * n + example_pos[c.example as usize];
        if filled[idx] {
            return Err(Error::DuplicateCell {
                run: run_names[run_pos[c.run as usize]].clone(),
                checkpoint: c.checkpoint,
                example: example_ids[example_pos[c.example as usize]].clone(),
            });
        }
        filled[idx] = true;
        scores[idx] = c.score;
    }
    if let Some(idx) = filled.iter().position(|f| !f) {
        return Err(Error::MissingCell {
            run: run_names[idx / (t * n)].clone(),
            checkpoint: checkpoints[(idx / n) % t],
            example: example_ids[idx % n].clone(),
        });
    }

    if let Some(exp) = expected {
        if exp.size != n {
            return Err(Error::MetaMismatch(format!(
                "expected {} examples for {name:?}, log contains {n}",
                exp.size
            )));
        }
    }
    let meta = DatasetMeta {
        name,
        size: n,
        kind: expected.map_or(DatasetKind::Analysis, |e| e.kind),
    };
    PredictionTensor::new(
        meta,
        run_names.into_iter().map(RunId).collect(),
        checkpoints.into_iter().map(CheckpointIndex).collect(),
        example_ids,
        scores,
    )
}
