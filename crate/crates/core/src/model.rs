//! Binary-relevance least squares (exact or sketched) with kNN prediction in
//! the learned embedding `z = V̂ᵀx`.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;
use crate::linalg::{least_squares, DenseMatrix};
use crate::metrics::timed;
use crate::sketch::{SketchMeta, SketchOperator};

/// How neighbor votes become label predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub k: usize,
    /// Label `i` is predicted iff more than `theta * k` neighbors carry it.
    pub theta: f64,
    /// Force at least one positive label per example.
    pub nonempty: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            k: 10,
            theta: 0.5,
            nonempty: false,
        }
    }
}

impl PredictOptions {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    fn validate(&self, n_train: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.k > n_train {
            return Err(Error::invalid(format!(
                "k = {} exceeds the {n_train} training examples",
                self.k
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::invalid(format!("theta = {} outside (0, 1]", self.theta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SketchedModel {
    weights: DenseMatrix,
    embedding: DenseMatrix,
    labels: LabelMatrix,
    options: PredictOptions,
    sketch: Option<SketchMeta>,
    fit_seconds: f64,
    warnings: Vec<String>,
}

fn check_training_shapes(x: &DenseMatrix, y: &LabelMatrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::DimensionMismatch {
            op: "fit",
            left: x.shape(),
            right: y.shape(),
        });
    }
    Ok(())
}

impl SketchedModel {
    /// Solves `min_V ‖XV − Y‖²_F` exactly.
    pub fn fit_exact(x: &DenseMatrix, y: &LabelMatrix, options: PredictOptions) -> Result<Self> {
        check_training_shapes(x, y)?;
        options.validate(x.rows())?;
        let (fitted, seconds) = timed(|| -> Result<_> {
            let weights = least_squares(x, &y.to_dense())?;
            let embedding = x.matmul(&weights)?;
            Ok((weights, embedding))
        });
        let (weights, embedding) = fitted?;
        Ok(Self {
            weights,
            embedding,
            labels: y.clone(),
            options,
            sketch: None,
            fit_seconds: seconds,
            warnings: Vec::new(),
        })
    }

    /// Solves `min_V ‖SXV − SY‖²_F`; the training embedding still uses the
    /// unsketched `X`. The recorded time covers sketch application, the
    /// solve, and the embedding, but not building `S`.
    pub fn fit_sketched(
        x: &DenseMatrix,
        y: &LabelMatrix,
        sketch: &SketchOperator,
        options: PredictOptions,
    ) -> Result<Self> {
        check_training_shapes(x, y)?;
        options.validate(x.rows())?;
        if sketch.n() != x.rows() {
            return Err(Error::DimensionMismatch {
                op: "fit_sketched",
                left: (sketch.m(), sketch.n()),
                right: x.shape(),
            });
        }
        let mut warnings = Vec::new();
        if sketch.m() < x.cols() {
            warnings.push(format!(
                "sketch size m = {} is below p = {}; the sketched system is rank deficient",
                sketch.m(),
                x.cols()
            ));
        }
        let (fitted, seconds) = timed(|| -> Result<_> {
            let sx = sketch.apply(x)?;
            let sy = sketch.apply(&y.to_dense())?;
            let weights = least_squares(&sx, &sy)?;
            let embedding = x.matmul(&weights)?;
            Ok((weights, embedding))
        });
        let (weights, embedding) = fitted?;
        Ok(Self {
            weights,
            embedding,
            labels: y.clone(),
            options,
            sketch: Some(sketch.meta()),
            fit_seconds: seconds,
            warnings,
        })
    }

    /// `V̂`, shape `p x q`.
    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    /// Training embedding `Z = X V̂`.
    pub fn embedding(&self) -> &DenseMatrix {
        &self.embedding
    }

    pub fn train_labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn options(&self) -> PredictOptions {
        self.options
    }

    pub fn set_options(&mut self, options: PredictOptions) -> Result<()> {
        options.validate(self.labels.rows())?;
        self.options = options;
        Ok(())
    }

    pub fn sketch(&self) -> Option<SketchMeta> {
        self.sketch
    }

    pub fn fit_seconds(&self) -> f64 {
        self.fit_seconds
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Maps queries into the embedding space, `X_query V̂`.
    pub fn embed(&self, queries: &DenseMatrix) -> Result<DenseMatrix> {
        if queries.cols() != self.weights.rows() {
            return Err(Error::DimensionMismatch {
                op: "embed",
                left: queries.shape(),
                right: self.weights.shape(),
            });
        }
        queries.matmul(&self.weights)
    }

    /// The `k` training rows nearest to an embedded point, as
    /// `(index, distance)` sorted by distance then index.
    pub fn neighbors(&self, point: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        let n = self.embedding.rows();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("k = {k} not in 1..={n}")));
        }
        if point.len() != self.embedding.cols() {
            return Err(Error::invalid("embedded point has the wrong dimension"));
        }
        Ok(nearest(&self.embedding, point, k)
            .into_iter()
            .map(|(d2, i)| (i, d2.sqrt()))
            .collect())
    }

    pub fn predict(&self, queries: &DenseMatrix) -> Result<LabelMatrix> {
        self.predict_with(queries, self.options)
    }

    /// 1-nearest-neighbor prediction: the nearest training row's labels, copied.
    pub fn predict_1nn(&self, queries: &DenseMatrix) -> Result<LabelMatrix> {
        if self.labels.rows() == 0 {
            return Err(Error::invalid("empty training set"));
        }
        self.predict_with(
            queries,
            PredictOptions {
                k: 1,
                theta: 0.5,
                nonempty: false,
            },
        )
    }

    pub fn predict_with(&self, queries: &DenseMatrix, options: PredictOptions) -> Result<LabelMatrix> {
        options.validate(self.labels.rows())?;
        let z = self.embed(queries)?;
        let q = self.labels.cols();
        let threshold = options.theta * options.k as f64;
        let rows: Vec<Vec<u8>> = (0..z.rows())
            .into_par_iter()
            .map(|t| {
                let hits = nearest(&self.embedding, z.row(t), options.k);
                let mut counts = vec![0usize; q];
                for &(_, i) in &hits {
                    for (c, &b) in counts.iter_mut().zip(self.labels.row(i)) {
                        *c += b as usize;
                    }
                }
                let mut row: Vec<u8> = counts.iter().map(|&c| (c as f64 > threshold) as u8).collect();
                if options.nonempty && q > 0 && row.iter().all(|&b| b == 0) {
                    let mut best = 0;
                    for (j, &c) in counts.iter().enumerate() {
                        if c > counts[best] {
                            best = j;
                        }
                    }
                    row[best] = 1;
                }
                row
            })
            .collect();
        let mut out = LabelMatrix::zeros(rows.len(), q);
        for (t, row) in rows.iter().enumerate() {
            for (j, &b) in row.iter().enumerate() {
                out.set(t, j, b == 1);
            }
        }
        Ok(out)
    }

    pub fn to_saved(&self) -> SavedModel {
        SavedModel {
            format: SavedModel::FORMAT.to_string(),
            version: SavedModel::VERSION,
            p: self.weights.rows(),
            q: self.weights.cols(),
            n_train: self.labels.rows(),
            options: self.options,
            sketch: self.sketch,
            label_hash: self.labels.content_hash(),
            fit_seconds: self.fit_seconds,
            weights: self.weights.clone(),
        }
    }

    /// Rebuilds a model from its saved weights plus the training data it
    /// was fitted on. The labels must hash to the recorded digest.
    pub fn from_saved(saved: SavedModel, x: &DenseMatrix, y: &LabelMatrix) -> Result<Self> {
        saved.check_header()?;
        check_training_shapes(x, y)?;
        if x.cols() != saved.p || y.cols() != saved.q || y.rows() != saved.n_train {
            return Err(Error::invalid(format!(
                "training data {}x{} / {} labels does not match saved model (n={}, p={}, q={})",
                x.rows(),
                x.cols(),
                y.cols(),
                saved.n_train,
                saved.p,
                saved.q
            )));
        }
        let hash = y.content_hash();
        if hash != saved.label_hash {
            return Err(Error::invalid("training labels do not match the saved label hash"));
        }
        if saved.weights.shape() != (saved.p, saved.q) {
            return Err(Error::invalid("saved weights have the wrong shape"));
        }
        saved.options.validate(y.rows())?;
        let embedding = x.matmul(&saved.weights)?;
        Ok(Self {
            weights: saved.weights,
            embedding,
            labels: y.clone(),
            options: saved.options,
            sketch: saved.sketch,
            fit_seconds: saved.fit_seconds,
            warnings: Vec::new(),
        })
    }
}

/// On-disk model: a single JSON object.
///
/// The training embedding and labels are not stored; reloading needs the
/// original training set, checked against `label_hash` (hex SHA-256 of the
/// label matrix shape and entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub q: usize,
    pub n_train: usize,
    pub options: PredictOptions,
    pub sketch: Option<SketchMeta>,
    pub label_hash: String,
    pub fit_seconds: f64,
    pub weights: DenseMatrix,
}

impl SavedModel {
    pub const FORMAT: &'static str = "sketchknn-model";
    pub const VERSION: u32 = 1;

    fn check_header(&self) -> Result<()> {
        if self.format != Self::FORMAT || self.version != Self::VERSION {
            return Err(Error::invalid(format!(
                "unsupported model file {} v{}",
                self.format, self.version
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let saved: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        saved.check_header()?;
        Ok(saved)
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Brute-force search; returns `(squared distance, index)` sorted.
fn nearest(points: &DenseMatrix, query: &[f64], k: usize) -> Vec<(f64, usize)> {
    let dist = |i: usize| -> f64 {
        points
            .row(i)
            .iter()
            .zip(query)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let n = points.rows();
    if k == 1 {
        let mut best = (dist(0), 0);
        for i in 1..n {
            let d = dist(i);
            if d < best.0 {
                best = (d, i);
            }
        }
        return vec![best];
    }
    let mut all: Vec<(f64, usize)> = (0..n).map(|i| (dist(i), i)).collect();
    if k < n {
        all.select_nth_unstable_by(k - 1, by_distance_then_index);
        all.truncate(k);
    }
    all.sort_unstable_by(by_distance_then_index);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::RngState;
    use crate::sketch::SketchKind;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::new(rows, cols, RngState::new(seed, 7).gaussian(rows * cols)).unwrap()
    }

    fn random_labels(n: usize, q: usize, seed: u64) -> LabelMatrix {
        let mut rng = RngState::new(seed, 8);
        LabelMatrix::new(n, q, (0..n * q).map(|_| rng.below(2) as u8).collect()).unwrap()
    }

    #[test]
    fn identity_design_reproduces_labels() {
        let x = DenseMatrix::identity(2);
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let model = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(1)).unwrap();
        assert!(model.weights().sub(&x).unwrap().max_abs() < 1e-15);
        assert!(model.embedding().sub(&x).unwrap().max_abs() < 1e-15);
        assert!(model.fit_seconds() > 0.0);
        assert!(model.sketch().is_none());
    }

    #[test]
    fn exact_fit_beats_random_probes() {
        let x = gaussian(60, 10, 1);
        let y = random_labels(60, 4, 2);
        let model = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(3)).unwrap();
        let yd = y.to_dense();
        let best = crate::linalg::frobenius_objective(&x, model.weights(), &yd).unwrap();
        for s in 0..50 {
            let v = gaussian(10, 4, 100 + s);
            let f = crate::linalg::frobenius_objective(&x, &v, &yd).unwrap();
            assert!(best <= f + 1e-10);
        }
    }

    #[test]
    fn full_walsh_hadamard_sketch_matches_exact() {
        let x = gaussian(64, 5, 3);
        let y = random_labels(64, 3, 4);
        let exact = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(3)).unwrap();
        let s = SketchOperator::walsh_hadamard(64, 64, 5).unwrap();
        let sk = SketchedModel::fit_sketched(&x, &y, &s, PredictOptions::with_k(3)).unwrap();
        assert!(sk.weights().sub(exact.weights()).unwrap().max_abs() <= 1e-8);
        assert_eq!(sk.sketch().unwrap().m, 64);
    }

    #[test]
    fn consistent_system_is_recovered_exactly() {
        let x = gaussian(200, 6, 6);
        let w = gaussian(6, 2, 7);
        let target = x.matmul(&w).unwrap();
        let s = SketchOperator::subgaussian(SketchKind::Gaussian, 20, 200, 8).unwrap();
        let v = least_squares(&s.apply(&x).unwrap(), &s.apply(&target).unwrap()).unwrap();
        let resid = crate::linalg::frobenius_objective(&x, &v, &target).unwrap();
        assert!(resid <= 1e-8, "{resid}");
    }

    #[test]
    fn sketched_fit_is_deterministic_and_warns_when_small() {
        let x = gaussian(128, 10, 9);
        let y = random_labels(128, 3, 10);
        let s = SketchOperator::build(SketchKind::Gaussian, 8, 128, 11).unwrap();
        let a = SketchedModel::fit_sketched(&x, &y, &s, PredictOptions::with_k(2)).unwrap();
        let b = SketchedModel::fit_sketched(&x, &y, &s, PredictOptions::with_k(2)).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.warnings().len(), 1);
        let wrong = SketchOperator::build(SketchKind::Gaussian, 8, 127, 11).unwrap();
        assert!(SketchedModel::fit_sketched(&x, &y, &wrong, PredictOptions::with_k(2)).is_err());
    }

    #[test]
    fn query_at_training_point_returns_its_labels() {
        let x = gaussian(30, 4, 12);
        let y = random_labels(30, 5, 13);
        let model = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(1)).unwrap();
        let q = x.select_rows(&[17]);
        assert_eq!(model.predict(&q).unwrap().row(0), y.row(17));
        assert_eq!(model.predict_1nn(&q).unwrap().row(0), y.row(17));
    }

    #[test]
    fn equidistant_query_takes_lower_index() {
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let model = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(1)).unwrap();
        let q = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(model.predict_1nn(&q).unwrap().row(0), &[1, 0]);
    }

    #[test]
    fn majority_threshold() {
        // three identical neighbors at distance 0 .. 2 with label column (1, 1, 0)
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![5.0]]).unwrap();
        let y = LabelMatrix::from_rows(&[vec![1, 0], vec![1, 0], vec![0, 1], vec![0, 1]]).unwrap();
        let mut model = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(3)).unwrap();
        let q = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(model.predict(&q).unwrap().row(0), &[1, 0]);
        // with theta = 1 nothing clears 3 votes; nonempty falls back to the top label
        model
            .set_options(PredictOptions { k: 3, theta: 1.0, nonempty: false })
            .unwrap();
        assert_eq!(model.predict(&q).unwrap().row(0), &[0, 0]);
        model
            .set_options(PredictOptions { k: 3, theta: 1.0, nonempty: true })
            .unwrap();
        assert_eq!(model.predict(&q).unwrap().row(0), &[1, 0]);
    }

    #[test]
    fn k_larger_than_training_set_is_rejected() {
        let x = gaussian(5, 2, 14);
        let y = random_labels(5, 2, 15);
        assert!(SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(6)).is_err());
        let model = SketchedModel::fit_exact(&x, &y, PredictOptions::with_k(5)).unwrap();
        assert!(model
            .predict_with(&x, PredictOptions::with_k(6))
            .is_err());
        assert!(model.predict(&gaussian(2, 3, 1)).is_err());
    }

    #[test]
    fn one_nn_equals_k1_prediction() {
        let x = gaussian(80, 6, 16);
        let y = random_labels(80, 4, 17);
        let model = SketchedModel::fit_exact(&x, &y, PredictOptions::default()).unwrap();
        let q = gaussian(25, 6, 18);
        assert_eq!(
            model.predict_1nn(&q).unwrap(),
            model.predict_with(&q, PredictOptions { k: 1, theta: 0.5, nonempty: false }).unwrap()
        );
    }

    #[test]
    fn saved_model_round_trip() {
        let x = gaussian(40, 5, 19);
        let y = random_labels(40, 3, 20);
        let s = SketchOperator::walsh_hadamard(16, 40, 21).unwrap();
        let model = SketchedModel::fit_sketched(&x, &y, &s, PredictOptions::with_k(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.to_saved().save(&path).unwrap();
        let saved = SavedModel::load(&path).unwrap();
        assert_eq!(saved, model.to_saved());
        let back = SketchedModel::from_saved(saved.clone(), &x, &y).unwrap();
        let q = gaussian(10, 5, 22);
        assert_eq!(back.predict(&q).unwrap(), model.predict(&q).unwrap());

        let other = random_labels(40, 3, 99);
        assert!(SketchedModel::from_saved(saved, &x, &other).is_err());
    }
}
