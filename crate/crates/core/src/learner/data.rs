//! Labelled datasets, per-client shards, the synthetic blob generator and the CSV loader.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub inputs: Vec<S>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
}

/// Rows owned by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard<S> {
    pub owner: usize,
    pub inputs: Vec<S>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl<S: Scalar> DataShard<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut h = vec![0; num_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}

impl<S: Scalar> Dataset<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, owner: usize, rows: &[usize]) -> DataShard<S> {
        let mut inputs = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
        }
        DataShard {
            owner,
            inputs,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dim: self.dim,
        }
    }

    /// Loads header-less rows `label, f1, ..., fd`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)?;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let line = line + 1;
            if record.len() < 2 {
                return Err(Error::Dataset(format!(
                    "line {line}: need a label and at least one feature"
                )));
            }
            match dim {
                None => dim = Some(record.len() - 1),
                Some(d) if d != record.len() - 1 => {
                    return Err(Error::Dataset(format!(
                        "line {line}: expected {d} features, found {}",
                        record.len() - 1
                    )))
                }
                _ => {}
            }
            let label: usize = record[0]
                .parse()
                .map_err(|_| Error::Dataset(format!("line {line}: bad label {:?}", &record[0])))?;
            labels.push(label);
            for field in record.iter().skip(1) {
                let x: f64 = field
                    .parse()
                    .map_err(|_| Error::Dataset(format!("line {line}: bad feature {field:?}")))?;
                inputs.push(S::of(x));
            }
        }
        let dim = dim.ok_or_else(|| Error::Dataset(format!("{} holds no rows", path.display())))?;
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            inputs,
            labels,
            dim,
            num_classes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    pub blob_sigma: f64,
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
}

fn default_center_scale() -> f64 {
    1.0
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 32,
            samples: 20_000,
            blob_sigma: 1.0,
            center_scale: 1.0,
        }
    }
}

/// Gaussian blobs: one center per class drawn from `N(0, center_scale^2 I)`, samples at
/// `center + blob_sigma * N(0, I)`. Labels cycle through the classes so class counts differ
/// by at most one; row order is shuffled.
pub fn synthetic_blobs<S: Scalar, R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Dataset<S> {
    let centers: Vec<f64> = (0..spec.classes * spec.dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            spec.center_scale * z
        })
        .collect();
    let mut labels: Vec<usize> = (0..spec.samples).map(|i| i % spec.classes).collect();
    labels.shuffle(rng);
    let mut inputs = Vec::with_capacity(spec.samples * spec.dim);
    for &y in &labels {
        for j in 0..spec.dim {
            let noise: f64 = StandardNormal.sample(rng);
            inputs.push(S::of(centers[y * spec.dim + j] + spec.blob_sigma * noise));
        }
    }
    Dataset {
        inputs,
        labels,
        dim: spec.dim,
        num_classes: spec.classes,
    }
}

/// Splits a shard's rows into (train, test) with `round(fraction * n)` test rows.
///
/// A shard with a single row keeps it in both halves; a zero fraction evaluates on train.
pub fn holdout_split<R: Rng + ?Sized>(rows: &[usize], fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut rows = rows.to_vec();
    rows.shuffle(rng);
    let n = rows.len();
    if n < 2 || fraction <= 0.0 {
        return (rows.clone(), rows);
    }
    let test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train = rows.split_off(test);
    (train, rows)
}
