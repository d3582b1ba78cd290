use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Coordinates closer than this on every axis count as the same point.
pub const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub x: Vec<f64>,
    pub y: f64,
    pub gen: usize,
    pub eval_index: usize,
}

/// Append-only store of every true evaluation of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    dim: usize,
    entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    /// Appends a pair and returns its eval index.
    ///
    /// Panics if `y` is not finite or `x` has the wrong dimension; the
    /// optimizers reject such evaluations before they get here.
    pub fn push(&mut self, x: Vec<f64>, y: f64, gen: usize) -> usize {
        assert_eq!(x.len(), self.dim, "archive dimension mismatch");
        assert!(y.is_finite(), "archive values must be finite");
        let eval_index = self.entries.len();
        self.entries.push(ArchiveEntry {
            x,
            y,
            gen,
            eval_index,
        });
        eval_index
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        header.extend(["y", "gen", "eval_index"].map(String::from));
        w.write_record(&header)?;
        for e in &self.entries {
            let mut rec: Vec<String> = e.x.iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{:e}", e.y));
            rec.push(e.gen.to_string());
            rec.push(e.eval_index.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        if width < 4 {
            return Err(Error::InvalidConfig(format!(
                "archive csv needs at least 4 columns, found {width}"
            )));
        }
        let dim = width - 3;
        let mut archive = Self::new(dim);
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("row {row}, column {i}: {e}")))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidConfig(format!("row {row}, column {i}: {e}")))
            };
            let x = (0..dim).map(num).collect::<Result<Vec<_>>>()?;
            let y = num(dim)?;
            if !y.is_finite() {
                return Err(Error::NonFiniteEvaluation { x, value: y });
            }
            let gen = int(dim + 1)?;
            let eval_index = int(dim + 2)?;
            if eval_index != archive.entries.len() {
                return Err(Error::InvalidConfig(format!(
                    "row {row}: eval_index {eval_index} out of sequence"
                )));
            }
            archive.entries.push(ArchiveEntry {
                x,
                y,
                gen,
                eval_index,
            });
        }
        Ok(archive)
    }
}

/// Number of most recent archive points used to train the surrogate,
/// `floor(40 + 3 N^1.7)`.
pub fn training_set_size(dim: usize) -> usize {
    (40.0 + 3.0 * (dim as f64).powf(1.7)).floor() as usize
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= DEDUP_TOL)
}

/// The newest `training_set_size(dim)` entries in insertion order, with
/// duplicate points reduced to their newest occurrence.
pub fn select_training_set(archive: &Archive, dim: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if archive.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let take = training_set_size(dim).min(archive.len());
    let recent = &archive.entries()[archive.len() - take..];
    let mut kept: Vec<&ArchiveEntry> = Vec::with_capacity(take);
    for e in recent.iter().rev() {
        if !kept.iter().any(|k| same_point(&k.x, &e.x)) {
            kept.push(e);
        }
    }
    kept.reverse();
    Ok(kept.into_iter().map(|e| (e.x.clone(), e.y)).collect())
}
