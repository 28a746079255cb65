//! Multi-label evaluation measures, timing, and the per-run report schema.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

/// Column order of the experiment CSV. Downstream scripts rely on it.
pub const CSV_HEADER: &str = "dataset,method,m,k,seed,hamming,example_f1,fit_s,predict_s";

fn check_shapes(truth: &LabelMatrix, pred: &LabelMatrix) -> Result<()> {
    if truth.shape() != pred.shape() {
        return Err(Error::DimensionMismatch {
            op: "label metric",
            left: truth.shape(),
            right: pred.shape(),
        });
    }
    if truth.rows() == 0 || truth.cols() == 0 {
        return Err(Error::invalid("label metrics need a non-empty matrix"));
    }
    Ok(())
}

/// Fraction of (example, label) slots where prediction and truth differ.
pub fn hamming_loss(truth: &LabelMatrix, pred: &LabelMatrix) -> Result<f64> {
    check_shapes(truth, pred)?;
    let mismatches = truth
        .data()
        .iter()
        .zip(pred.data())
        .filter(|(a, b)| a != b)
        .count();
    Ok(mismatches as f64 / truth.data().len() as f64)
}

/// Mean over examples of `2|y ∩ ŷ| / (|y| + |ŷ|)`; an example whose true and
/// predicted label sets are both empty scores 1.
pub fn example_f1(truth: &LabelMatrix, pred: &LabelMatrix) -> Result<f64> {
    example_f1_with(truth, pred, 1.0)
}

/// [`example_f1`] with a caller-chosen score for empty-vs-empty examples.
pub fn example_f1_with(truth: &LabelMatrix, pred: &LabelMatrix, empty_score: f64) -> Result<f64> {
    check_shapes(truth, pred)?;
    let mut total = 0.0;
    for i in 0..truth.rows() {
        let (mut both, mut t, mut p) = (0usize, 0usize, 0usize);
        for (a, b) in truth.row(i).iter().zip(pred.row(i)) {
            both += (*a & *b) as usize;
            t += *a as usize;
            p += *b as usize;
        }
        total += if t + p == 0 {
            empty_score
        } else {
            2.0 * both as f64 / (t + p) as f64
        };
    }
    Ok(total / truth.rows() as f64)
}

/// Empirical per-label misclassification rate.
pub fn zero_one_per_label_error(truth: &LabelMatrix, pred: &LabelMatrix) -> Result<Vec<f64>> {
    check_shapes(truth, pred)?;
    let q = truth.cols();
    let mut counts = vec![0usize; q];
    for i in 0..truth.rows() {
        for (j, (a, b)) in truth.row(i).iter().zip(pred.row(i)).enumerate() {
            counts[j] += (a != b) as usize;
        }
    }
    let n = truth.rows() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Runs `f` and returns its value with the elapsed wall-clock seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let value = f();
    (value, start.elapsed().as_secs_f64())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hamming_loss: f64,
    pub example_f1: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub n_test: usize,
    pub q: usize,
}

impl MetricsReport {
    pub fn evaluate(
        truth: &LabelMatrix,
        pred: &LabelMatrix,
        fit_seconds: f64,
        predict_seconds: f64,
    ) -> Result<Self> {
        Ok(Self {
            hamming_loss: hamming_loss(truth, pred)?,
            example_f1: example_f1(truth, pred)?,
            fit_seconds,
            predict_seconds,
            n_test: truth.rows(),
            q: truth.cols(),
        })
    }
}

/// One completed grid cell; serializes to one CSV line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    /// Absent for the exact solver.
    pub m: Option<usize>,
    pub k: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Time spent building the sketch, also included in `fit_seconds`.
    pub sketch_seconds: f64,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6}",
            csv_field(&self.dataset),
            csv_field(&self.method),
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            self.k,
            self.seed,
            self.metrics.hamming_loss,
            self.metrics.example_f1,
            self.metrics.fit_seconds,
            self.metrics.predict_seconds,
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
