//! Multi-label datasets: the text file format, splitting, and synthetic
//! generators with known ground truth.
//!
//! # File format
//!
//! UTF-8 text. The first line is `n p q`. Each of the next `n` lines is
//!
//! ```text
//! <labels> <idx:val> <idx:val> ...
//! ```
//!
//! where `<labels>` is a comma-separated list of 0-based label indices (an
//! empty field, i.e. a line starting with a space or an empty line, means no
//! labels) and features are 0-based `index:value` pairs. Feature indices may
//! appear in any order but not twice.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;
use crate::linalg::DenseMatrix;
use crate::random::{streams, RngState};

/// Sparse feature row: `(index, value)` pairs with strictly increasing indices.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelDataset {
    name: String,
    p: usize,
    features: Vec<SparseRow>,
    labels: LabelMatrix,
}

impl MultiLabelDataset {
    pub fn new(name: impl Into<String>, p: usize, features: Vec<SparseRow>, labels: LabelMatrix) -> Result<Self> {
        if features.len() != labels.rows() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} label rows",
                features.len(),
                labels.rows()
            )));
        }
        if labels.cols() == 0 {
            return Err(Error::invalid("datasets need at least one label"));
        }
        for (i, row) in features.iter().enumerate() {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::invalid(format!("row {i}: feature indices not strictly increasing")));
            }
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= p) {
                return Err(Error::invalid(format!("row {i}: feature index {j} >= p = {p}")));
            }
            if row.iter().any(|(_, v)| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i}: non-finite feature value")));
            }
        }
        Ok(Self {
            name: name.into(),
            p,
            features,
            labels,
        })
    }

    /// Keeps the nonzero entries of a dense feature matrix.
    pub fn from_dense(name: impl Into<String>, x: &DenseMatrix, labels: LabelMatrix) -> Result<Self> {
        let features = (0..x.rows())
            .map(|i| {
                x.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::new(name, x.cols(), features, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.labels.cols()
    }

    pub fn features(&self) -> &[SparseRow] {
        &self.features
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.n() * self.p];
        for (i, row) in self.features.iter().enumerate() {
            for &(j, v) in row {
                data[i * self.p + j] = v;
            }
        }
        DenseMatrix::new(self.n(), self.p, data).expect("validated finite entries")
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            p: self.p,
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: self.labels.select_rows(idx),
        }
    }

    pub fn parse(text: &str, name: impl Into<String>) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: format!("bad header: {e}"),
            })?;
        let [n, p, q] = dims[..] else {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header needs `n p q`, got {header:?}"),
            });
        };
        if q == 0 {
            return Err(Error::Parse {
                line: 1,
                msg: "q must be at least 1".into(),
            });
        }

        let mut features = Vec::with_capacity(n);
        let mut labels = LabelMatrix::zeros(n, q);
        for i in 0..n {
            let line_no = i + 2;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = lines
                .next()
                .ok_or_else(|| err(format!("expected {n} examples, file ends after {i}")))?;
            let line = line.strip_suffix('\r').unwrap_or(line);
            let (label_field, rest) = line.split_once(' ').unwrap_or((line, ""));
            if label_field.contains(':') {
                return Err(err("label field contains ':' (use a leading space for no labels)".into()));
            }
            if !label_field.is_empty() {
                for tok in label_field.split(',') {
                    let j: usize = tok.parse().map_err(|_| err(format!("bad label index {tok:?}")))?;
                    if j >= q {
                        return Err(err(format!("label index {j} >= q = {q}")));
                    }
                    if labels.get(i, j) == 1 {
                        return Err(err(format!("duplicate label index {j}")));
                    }
                    labels.set(i, j, true);
                }
            }
            let mut row: SparseRow = Vec::new();
            for tok in rest.split_whitespace() {
                let (idx, val) = tok
                    .split_once(':')
                    .ok_or_else(|| err(format!("feature {tok:?} is not index:value")))?;
                let idx: usize = idx.parse().map_err(|_| err(format!("bad feature index {idx:?}")))?;
                let val: f64 = val.parse().map_err(|_| err(format!("bad feature value {val:?}")))?;
                if idx >= p {
                    return Err(err(format!("feature index {idx} >= p = {p}")));
                }
                if !val.is_finite() {
                    return Err(err(format!("non-finite feature value {val}")));
                }
                row.push((idx, val));
            }
            row.sort_by_key(|&(j, _)| j);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(err(format!("duplicate feature index {}", w[0].0)));
            }
            features.push(row);
        }
        for (extra, line) in lines.enumerate() {
            if !line.trim().is_empty() {
                return Err(Error::Parse {
                    line: n + 2 + extra,
                    msg: format!("more than the {n} examples declared in the header"),
                });
            }
        }
        Self::new(name, p, features, labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::parse(&std::fs::read_to_string(path)?, name)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{} {} {}", self.n(), self.p, self.q())?;
        for (i, row) in self.features.iter().enumerate() {
            let labels: Vec<String> = (0..self.q())
                .filter(|&j| self.labels.get(i, j) == 1)
                .map(|j| j.to_string())
                .collect();
            let mut line = labels.join(",");
            for &(j, v) in row {
                line.push(' ');
                line.push_str(&format!("{j}:{v}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Seeded shuffle, then the first `⌊n·test_fraction⌋` shuffled examples form
/// the test set. Each part keeps the original relative order.
pub fn train_test_split(
    ds: &MultiLabelDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(MultiLabelDataset, MultiLabelDataset)> {
    let (train, test) = split_indices(ds.n(), test_fraction, seed)?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Index form of [`train_test_split`]: `(train, test)`, both sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_test = (n as f64 * test_fraction).floor() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::invalid(format!(
            "split of {n} examples at fraction {test_fraction} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(seed, streams::SPLIT).shuffle(&mut order);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    PlantedLinear,
    SmoothBayes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Standard deviation of the additive score noise (planted linear).
    pub noise_sigma: f64,
    /// Slope multiplier of the label probabilities (smooth Bayes).
    pub lipschitz_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn planted(n: usize, p: usize, q: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::PlantedLinear,
            n,
            p,
            q,
            noise_sigma,
            lipschitz_scale: 0.0,
            seed,
        }
    }

    pub fn smooth(n: usize, q: usize, lipschitz_scale: f64, seed: u64) -> Self {
        Self {
            kind: SyntheticKind::SmoothBayes,
            n,
            p: 2,
            q,
            noise_sigma: 0.0,
            lipschitz_scale,
            seed,
        }
    }

    fn validate(&self, kind: SyntheticKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!("expected a {kind:?} spec, got {:?}", self.kind)));
        }
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::invalid("synthetic dimensions must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be a non-negative number"));
        }
        if !self.lipschitz_scale.is_finite() {
            return Err(Error::invalid("lipschitz_scale must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PlantedData {
    pub dataset: MultiLabelDataset,
    /// Ground-truth `W`, shape `p x q`.
    pub weights: DenseMatrix,
    /// Real-valued scores `XW + σ·noise` before thresholding.
    pub scores: DenseMatrix,
}

/// `X ~ N(0,1)`, `W ~ N(0, 1/p)` entrywise, label `= [XW + σ ε > 0]`.
pub fn gen_planted_linear(spec: &SyntheticSpec) -> Result<PlantedData> {
    spec.validate(SyntheticKind::PlantedLinear)?;
    let (n, p, q) = (spec.n, spec.p, spec.q);
    let x = DenseMatrix::new(n, p, RngState::new(spec.seed, streams::DATA_FEATURES).gaussian(n * p))?;
    let w_scale = 1.0 / (p as f64).sqrt();
    let w: Vec<f64> = RngState::new(spec.seed, streams::DATA_WEIGHTS)
        .gaussian(p * q)
        .into_iter()
        .map(|v| v * w_scale)
        .collect();
    let weights = DenseMatrix::new(p, q, w)?;
    let noise = RngState::new(spec.seed, streams::DATA_NOISE).gaussian(n * q);
    let clean = x.matmul(&weights)?;
    let scores = DenseMatrix::new(
        n,
        q,
        clean
            .data()
            .iter()
            .zip(&noise)
            .map(|(s, e)| s + spec.noise_sigma * e)
            .collect(),
    )?;
    let labels = LabelMatrix::new(n, q, scores.data().iter().map(|&s| (s > 0.0) as u8).collect())?;
    let dataset = MultiLabelDataset::from_dense(format!("planted-n{n}-p{p}-q{q}"), &x, labels)?;
    Ok(PlantedData {
        dataset,
        weights,
        scores,
    })
}

/// `ν(x) = clamp(0.5 + s·(aᵀx + b), 0.05, 0.95)`: probability that a label is on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFunction {
    pub a: [f64; 2],
    pub b: f64,
    pub scale: f64,
}

impl LabelFunction {
    pub const FLOOR: f64 = 0.05;
    pub const CEIL: f64 = 0.95;

    pub fn nu(&self, x: &[f64]) -> f64 {
        let t = self.a[0] * x[0] + self.a[1] * x[1] + self.b;
        (0.5 + self.scale * t).clamp(Self::FLOOR, Self::CEIL)
    }

    /// Euclidean Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.scale.abs() * (self.a[0] * self.a[0] + self.a[1] * self.a[1]).sqrt()
    }
}

impl fmt::Display for LabelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "clamp(0.5 + {} * ({} * x0 + {} * x1 + {}), {}, {})",
            self.scale,
            self.a[0],
            self.a[1],
            self.b,
            Self::FLOOR,
            Self::CEIL
        )
    }
}

#[derive(Clone, Debug)]
pub struct SmoothBayesData {
    pub dataset: MultiLabelDataset,
    pub label_functions: Vec<LabelFunction>,
    /// Per-label `E[min(ν, 1 − ν)]` over the uniform input distribution.
    pub bayes_errors: Vec<f64>,
    /// Largest per-label Lipschitz constant.
    pub lipschitz: f64,
}

/// Monte-Carlo sample count for the Bayes error estimate.
pub const BAYES_SAMPLES: usize = 1_000_000;

/// Inputs uniform on `[0,1]²`; each label is Bernoulli with a clamped linear
/// probability whose 0.5 level set crosses the middle of the square.
pub fn gen_smooth_bayes(spec: &SyntheticSpec) -> Result<SmoothBayesData> {
    spec.validate(SyntheticKind::SmoothBayes)?;
    if spec.p != 2 {
        return Err(Error::invalid(format!("smooth Bayes data is two-dimensional, got p = {}", spec.p)));
    }
    let mut params = RngState::new(spec.seed, streams::DATA_PARAMS);
    let label_functions: Vec<LabelFunction> = (0..spec.q)
        .map(|_| {
            let g = params.gaussian(2);
            let a = [g[0], g[1]];
            let c = [params.uniform_range(0.25, 0.75), params.uniform_range(0.25, 0.75)];
            LabelFunction {
                a,
                b: -(a[0] * c[0] + a[1] * c[1]),
                scale: spec.lipschitz_scale,
            }
        })
        .collect();
    let lipschitz = label_functions.iter().map(LabelFunction::lipschitz).fold(0.0, f64::max);
    let mut data = SmoothBayesData {
        dataset: MultiLabelDataset::new("smooth", 2, Vec::new(), LabelMatrix::zeros(0, spec.q))?,
        label_functions,
        bayes_errors: Vec::new(),
        lipschitz,
    };
    data.bayes_errors = data.estimate_bayes_errors(BAYES_SAMPLES, spec.seed);
    data.dataset = data.sample(spec.n, spec.seed)?;
    Ok(data)
}

impl SmoothBayesData {
    pub fn nu(&self, label: usize, x: &[f64]) -> f64 {
        self.label_functions[label].nu(x)
    }

    /// Fresh examples from the same distribution.
    pub fn sample(&self, n: usize, seed: u64) -> Result<MultiLabelDataset> {
        let q = self.label_functions.len();
        let mut xs = RngState::new(seed, streams::DATA_FEATURES);
        let mut ys = RngState::new(seed, streams::DATA_LABELS);
        let mut features = Vec::with_capacity(n);
        let mut labels = LabelMatrix::zeros(n, q);
        for i in 0..n {
            let x = [xs.uniform(), xs.uniform()];
            for (j, f) in self.label_functions.iter().enumerate() {
                labels.set(i, j, ys.uniform() < f.nu(&x));
            }
            features.push(vec![(0, x[0]), (1, x[1])]);
        }
        MultiLabelDataset::new(format!("smooth-n{n}-q{q}"), 2, features, labels)
    }

    pub fn estimate_bayes_errors(&self, samples: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngState::new(seed, streams::BAYES_ESTIMATE);
        let mut sums = vec![0.0; self.label_functions.len()];
        for _ in 0..samples {
            let x = [rng.uniform(), rng.uniform()];
            for (s, f) in sums.iter_mut().zip(&self.label_functions) {
                let v = f.nu(&x);
                *s += v.min(1.0 - v);
            }
        }
        sums.into_iter().map(|s| s / samples as f64).collect()
    }

    /// Expected per-label error `P(y_i ≠ ŷ_i | x)` of predictions at the
    /// given inputs, averaged over the inputs.
    pub fn expected_error(&self, x: &DenseMatrix, pred: &LabelMatrix) -> Result<Vec<f64>> {
        if x.rows() != pred.rows() || x.cols() != 2 || pred.cols() != self.label_functions.len() {
            return Err(Error::invalid("inputs and predictions do not match this problem"));
        }
        let mut sums = vec![0.0; pred.cols()];
        for i in 0..x.rows() {
            for (j, f) in self.label_functions.iter().enumerate() {
                let v = f.nu(x.row(i));
                sums[j] += if pred.get(i, j) == 1 { 1.0 - v } else { v };
            }
        }
        Ok(sums.into_iter().map(|s| s / x.rows() as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let ds = MultiLabelDataset::parse("2 3 2\n0,1 0:1.0 2:0.5\n1 1:2.0\n", "toy").unwrap();
        assert_eq!((ds.n(), ds.p(), ds.q()), (2, 3, 2));
        assert_eq!(ds.labels(), &LabelMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap());
        assert_eq!(ds.features()[0], vec![(0, 1.0), (2, 0.5)]);
    }

    #[test]
    fn empty_label_field() {
        let ds = MultiLabelDataset::parse("2 2 3\n 0:1\n\n", "e").unwrap();
        assert_eq!(ds.labels().row(0), &[0, 0, 0]);
        assert_eq!(ds.labels().row(1), &[0, 0, 0]);
        assert!(ds.features()[1].is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("2 3 2\n0 0:1\n1 5:1\n", 3),
            ("1 3 2\n0 1:1 1:2\n", 2),
            ("1 3 2\n0 1:x\n", 2),
            ("1 3 2\n7 1:1\n", 2),
            ("2 3 2\n0 1:1\n", 3),
            ("1 3 2\n0 1:1\n1 1:1\n", 3),
            ("1 3\n", 1),
        ];
        for (text, line) in cases {
            match MultiLabelDataset::parse(text, "bad") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn unsorted_features_are_sorted() {
        let ds = MultiLabelDataset::parse("1 4 1\n0 3:1 1:2\n", "u").unwrap();
        assert_eq!(ds.features()[0], vec![(1, 2.0), (3, 1.0)]);
    }

    #[test]
    fn write_then_read_is_identity() {
        let planted = gen_planted_linear(&SyntheticSpec::planted(30, 4, 3, 0.5, 1)).unwrap();
        let mut buf = Vec::new();
        planted.dataset.write_to(&mut buf).unwrap();
        let back = MultiLabelDataset::parse(std::str::from_utf8(&buf).unwrap(), planted.dataset.name()).unwrap();
        assert_eq!(back, planted.dataset);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (train, test) = split_indices(10, 0.3, 4).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        assert_eq!(split_indices(10, 0.3, 4).unwrap(), (train.clone(), test.clone()));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(split_indices(10, 0.0, 4).is_err());
        assert!(split_indices(10, 1.0, 4).is_err());
        assert!(split_indices(3, 0.2, 4).is_err());
    }

    #[test]
    fn planted_noiseless_scores_recover_weights() {
        let planted = gen_planted_linear(&SyntheticSpec::planted(200, 8, 3, 0.0, 2)).unwrap();
        let x = planted.dataset.to_dense();
        let w = crate::linalg::least_squares(&x, &planted.scores).unwrap();
        assert!(w.sub(&planted.weights).unwrap().max_abs() <= 1e-6);
    }

    #[test]
    fn planted_labels_are_balanced() {
        let planted = gen_planted_linear(&SyntheticSpec::planted(10_000, 8, 4, 0.5, 3)).unwrap();
        let y = planted.dataset.labels();
        for j in 0..4 {
            let rate = (0..y.rows()).filter(|&i| y.get(i, j) == 1).count() as f64 / y.rows() as f64;
            assert!((0.4..=0.6).contains(&rate), "label {j}: {rate}");
        }
        let again = gen_planted_linear(&SyntheticSpec::planted(10_000, 8, 4, 0.5, 3)).unwrap();
        assert_eq!(again.dataset, planted.dataset);
    }

    #[test]
    fn coin_flip_labels_when_flat() {
        let data = gen_smooth_bayes(&SyntheticSpec::smooth(100, 3, 0.0, 4)).unwrap();
        assert!(data.bayes_errors.iter().all(|&b| b == 0.5));
    }

    #[test]
    fn bayes_errors_in_codomain_and_stable() {
        let data = gen_smooth_bayes(&SyntheticSpec::smooth(100, 4, 2.0, 5)).unwrap();
        assert!(data.bayes_errors.iter().all(|b| (0.05..=0.5).contains(b)));
        let other = data.estimate_bayes_errors(BAYES_SAMPLES, 999);
        for (a, b) in data.bayes_errors.iter().zip(&other) {
            assert!((a - b).abs() <= 0.002);
        }
        assert!(gen_smooth_bayes(&SyntheticSpec { p: 3, ..SyntheticSpec::smooth(10, 2, 1.0, 1) }).is_err());
    }

    #[test]
    fn smooth_lipschitz_holds_empirically() {
        let data = gen_smooth_bayes(&SyntheticSpec::smooth(10, 3, 3.0, 6)).unwrap();
        let mut rng = RngState::new(7, 0);
        for _ in 0..2000 {
            let x = [rng.uniform(), rng.uniform()];
            let y = [rng.uniform(), rng.uniform()];
            let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            for j in 0..3 {
                assert!((data.nu(j, &x) - data.nu(j, &y)).abs() <= data.lipschitz * d + 1e-12);
            }
        }
    }
}
