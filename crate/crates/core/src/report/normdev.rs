use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, Table};
use crate::error::{Error, Result};
use crate::stats::normalized_deviation;
use crate::store::DatasetKind;

/// A published `(mean, std, size)` summary of final performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub model: String,
    pub dataset: String,
    pub mean: f64,
    pub std: f64,
    pub size: usize,
    pub kind: DatasetKind,
}

pub fn read_published_csv(path: &Path) -> Result<Vec<PublishedRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidParameter(format!("{}: {other:?}", path.display())),
    }
}

/// Size-normalized deviations relative to one reference dataset, per model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormDevTable {
    pub reference: String,
    /// First-appearance order.
    pub models: Vec<String>,
    /// First-appearance order.
    pub datasets: Vec<String>,
    /// `[model][dataset]`; `None` where the model has no row for that dataset.
    pub values: Vec<Vec<Option<f64>>>,
}

impl NormDevTable {
    pub fn compute(rows: &[PublishedRow], reference: &str) -> Result<Self> {
        let mut models: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        for r in rows {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
            if !datasets.contains(&r.dataset) {
                datasets.push(r.dataset.clone());
            }
        }
        let values = models
            .iter()
            .map(|m| {
                let of_model: Vec<&PublishedRow> = rows.iter().filter(|r| &r.model == m).collect();
                let reference_row = of_model
                    .iter()
                    .find(|r| r.dataset == reference)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "model {m:?} has no row for reference dataset {reference:?}"
                        ))
                    })?;
                datasets
                    .iter()
                    .map(|d| {
                        of_model
                            .iter()
                            .find(|r| &r.dataset == d)
                            .map(|r| {
                                normalized_deviation(
                                    r.std,
                                    r.size,
                                    reference_row.std,
                                    reference_row.size,
                                )
                            })
                            .transpose()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            reference: reference.to_string(),
            models,
            datasets,
            values,
        })
    }

    pub fn get(&self, model: &str, dataset: &str) -> Option<f64> {
        let m = self.models.iter().position(|x| x == model)?;
        let d = self.datasets.iter().position(|x| x == dataset)?;
        self.values[m][d]
    }

    pub fn to_table(&self) -> Table {
        let mut t =
            Table::new(std::iter::once("model".to_string()).chain(self.datasets.iter().cloned()));
        for (m, row) in self.models.iter().zip(&self.values) {
            let mut cells = vec![Cell::Text(m.clone())];
            cells.extend(row.iter().map(|&v| Cell::from(v)));
            t.push(cells);
        }
        t
    }
}
