//! Experiment orchestration: the method × sketch-size × seed grid, the
//! δ-optimality sweep, width reports and covering diagnostics.
//!
//! Everything is driven by an [`ExperimentConfig`], which deserializes from
//! the same JSON object the command-line config file uses.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    gen_planted_linear, gen_smooth_bayes, split_indices, MultiLabelDataset, SmoothBayesData, SyntheticKind,
    SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::geom::{
    bound_rhs_1nn, bound_rhs_knn, covering_curve, diameter, doubling_dim_estimate, normalize_diameter, BoundInputs,
    CoverMetric, DoublingEstimate,
};
use crate::labels::LabelMatrix;
use crate::linalg::{orthonormal_basis, DenseMatrix};
use crate::metrics::{timed, MetricsReport, RunRecord, CSV_HEADER};
use crate::model::{PredictOptions, SketchedModel};
use crate::sketch::{SketchKind, SketchOperator};
use crate::theory::{
    gaussian_width_mc, median, rademacher_width_mc, recommend_sketch_size, recommend_sketch_size_wh,
    s_gaussian_width_mc, DeltaChecker, DeltaReport, WidthEstimate,
};

/// A training method: the exact solver or one of the sketches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Exact,
    Sketch(SketchKind),
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Exact,
        Method::Sketch(SketchKind::Gaussian),
        Method::Sketch(SketchKind::Rademacher),
        Method::Sketch(SketchKind::WalshHadamard),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Sketch(kind) => kind.method_name(),
        }
    }

    pub fn sketch_kind(self) -> Option<SketchKind> {
        match self {
            Method::Exact => None,
            Method::Sketch(kind) => Some(kind),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(Method::Exact);
        }
        SketchKind::from_method_name(s)
            .map(Method::Sketch)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?} (expected exact, gauss, rademacher or wh)")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticChoice {
    #[serde(alias = "planted_linear")]
    Planted,
    #[serde(alias = "smooth_bayes")]
    Smooth,
}

impl FromStr for SyntheticChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted" | "planted_linear" => Ok(Self::Planted),
            "smooth" | "smooth_bayes" => Ok(Self::Smooth),
            _ => Err(Error::invalid(format!("unknown synthetic kind {s:?} (expected planted or smooth)"))),
        }
    }
}

/// All knobs of a run. Keys mirror the command-line flags, with `-`
/// replaced by `_`; missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub synthetic: Option<SyntheticChoice>,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub noise: f64,
    /// Slope multiplier of the smooth generator's label probabilities.
    pub scale: f64,
    #[serde(alias = "methods")]
    pub method: Vec<Method>,
    /// Single sketch size; replaces `m_grid` when set.
    pub m: Option<usize>,
    pub m_grid: Vec<usize>,
    pub k: usize,
    pub theta: f64,
    pub nonempty: bool,
    /// Seed for data generation and the train/test split.
    pub seed: u64,
    /// Sketch seeds, one grid cell each; empty means `[seed]`.
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub out_json: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub c1: f64,
    pub delta: f64,
    /// Lipschitz constant of the label probabilities, for bound evaluation.
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    /// Monte-Carlo samples for the width estimators.
    pub samples: usize,
    /// Cover radii for `diagnose`, strictly descending.
    pub epsilons: Vec<f64>,
    /// Run grid cells concurrently. Timings are then not comparable.
    pub parallel_cells: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: None,
            n: 2000,
            p: 64,
            q: 8,
            noise: 0.5,
            scale: 1.0,
            method: Method::ALL.to_vec(),
            m: None,
            m_grid: vec![64, 128, 256, 512, 1024],
            k: 10,
            theta: 0.5,
            nonempty: false,
            seed: 42,
            seeds: Vec::new(),
            test_fraction: 0.2,
            out_json: None,
            out_csv: None,
            c1: 1.0,
            delta: 0.5,
            lipschitz: None,
            samples: 1000,
            epsilons: vec![0.5, 0.25, 0.125, 0.0625, 0.03125],
            parallel_cells: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sizes(&self) -> Vec<usize> {
        match self.m {
            Some(m) => vec![m],
            None => self.m_grid.clone(),
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn predict_options(&self) -> PredictOptions {
        PredictOptions {
            k: self.k,
            theta: self.theta,
            nonempty: self.nonempty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_empty() {
            return Err(Error::invalid("no methods selected"));
        }
        if self.data.is_some() == self.synthetic.is_some() {
            return Err(Error::invalid("give exactly one of a data file or a synthetic generator"));
        }
        if self.sizes().contains(&0) {
            return Err(Error::invalid("sketch sizes must be positive"));
        }
        if self.method.iter().any(|m| *m != Method::Exact) && self.sizes().is_empty() {
            return Err(Error::invalid("sketched methods need at least one sketch size"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::invalid(format!("theta = {} outside (0, 1]", self.theta)));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta = {} outside (0, 1)", self.delta)));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::invalid("c1 must be positive"));
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::invalid("L must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        self.synthetic.map(|choice| match choice {
            SyntheticChoice::Planted => SyntheticSpec::planted(self.n, self.p, self.q, self.noise, self.seed),
            // Always two-dimensional; `p` is ignored.
            SyntheticChoice::Smooth => SyntheticSpec::smooth(self.n, self.q, self.scale, self.seed),
        })
    }
}

/// A loaded dataset plus, for the smooth generator, its ground truth.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub dataset: MultiLabelDataset,
    pub smooth: Option<SmoothBayesData>,
}

pub fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    if let Some(path) = &config.data {
        return Ok(LoadedData {
            dataset: MultiLabelDataset::load(path)?,
            smooth: None,
        });
    }
    let spec = config
        .synthetic_spec()
        .ok_or_else(|| Error::invalid("no data file or synthetic generator given"))?;
    match spec.kind {
        SyntheticKind::PlantedLinear => Ok(LoadedData {
            dataset: gen_planted_linear(&spec)?.dataset,
            smooth: None,
        }),
        SyntheticKind::SmoothBayes => {
            let smooth = gen_smooth_bayes(&spec)?;
            Ok(LoadedData {
                dataset: smooth.dataset.clone(),
                smooth: Some(smooth),
            })
        }
    }
}

/// Dense train/test matrices for one split.
#[derive(Clone, Debug)]
pub struct Split {
    pub x_train: DenseMatrix,
    pub y_train: LabelMatrix,
    pub x_test: DenseMatrix,
    pub y_test: LabelMatrix,
}

impl Split {
    pub fn new(ds: &MultiLabelDataset, test_fraction: f64, seed: u64) -> Result<Self> {
        let (train, test) = split_indices(ds.n(), test_fraction, seed)?;
        let x = ds.to_dense();
        Ok(Self {
            x_train: x.select_rows(&train),
            y_train: ds.labels().select_rows(&train),
            x_test: x.select_rows(&test),
            y_test: ds.labels().select_rows(&test),
        })
    }
}

/// Fits one model. Returns it with the sketch build time (zero for exact).
pub fn fit_method(
    split: &Split,
    method: Method,
    m: usize,
    seed: u64,
    options: PredictOptions,
) -> Result<(SketchedModel, f64)> {
    match method {
        Method::Exact => Ok((SketchedModel::fit_exact(&split.x_train, &split.y_train, options)?, 0.0)),
        Method::Sketch(kind) => {
            let (sketch, build) = timed(|| SketchOperator::build(kind, m, split.x_train.rows(), seed));
            let model = SketchedModel::fit_sketched(&split.x_train, &split.y_train, &sketch?, options)?;
            Ok((model, build))
        }
    }
}

/// Fits, predicts the test part, and scores one grid cell. `fit_s` in the
/// result includes the sketch build time.
pub fn run_cell(
    dataset: &str,
    split: &Split,
    method: Method,
    m: Option<usize>,
    seed: u64,
    options: PredictOptions,
) -> Result<RunRecord> {
    let (model, build) = fit_method(split, method, m.unwrap_or(0), seed, options)?;
    let (pred, predict_seconds) = timed(|| model.predict(&split.x_test));
    let metrics = MetricsReport::evaluate(&split.y_test, &pred?, build + model.fit_seconds(), predict_seconds)?;
    Ok(RunRecord {
        dataset: dataset.to_string(),
        method: method.name().to_string(),
        m,
        k: options.k,
        seed,
        metrics,
        sketch_seconds: build,
        warnings: model.warnings().to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub method: String,
    pub m: Option<usize>,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailedCell>,
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Grid cells in run order: methods as given, sizes ascending as given,
/// seeds innermost. The exact solver gets one cell per seed.
pub fn grid_cells(config: &ExperimentConfig) -> Vec<(Method, Option<usize>, u64)> {
    let seeds = config.seed_list();
    let mut cells = Vec::new();
    for &method in &config.method {
        let sizes: Vec<Option<usize>> = match method {
            Method::Exact => vec![None],
            Method::Sketch(_) => config.sizes().into_iter().map(Some).collect(),
        };
        for m in sizes {
            for &seed in &seeds {
                cells.push((method, m, seed));
            }
        }
    }
    cells
}

/// Opens the CSV for appending and writes the header if the file is new
/// or empty.
fn open_csv(path: &Path) -> Result<std::fs::File> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{CSV_HEADER}")?;
    }
    Ok(file)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Runs the full grid on one train/test split. A failing cell is recorded
/// in `failures` and the run continues; each completed cell appends one
/// CSV row.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let loaded = load_data(config)?;
    let split = Split::new(&loaded.dataset, config.test_fraction, config.seed)?;
    let name = loaded.dataset.name().to_string();
    let options = config.predict_options();
    let cells = grid_cells(config);
    let mut csv = config.out_csv.as_deref().map(open_csv).transpose()?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut record = |result: Result<RunRecord>, (method, m, seed): (Method, Option<usize>, u64)| -> Result<()> {
        match result {
            Ok(rec) => {
                if let Some(file) = csv.as_mut() {
                    writeln!(file, "{}", rec.csv_line())?;
                    file.flush()?;
                }
                records.push(rec);
            }
            Err(e) => failures.push(FailedCell {
                method: method.name().to_string(),
                m,
                seed,
                error: e.to_string(),
            }),
        }
        Ok(())
    };

    if config.parallel_cells {
        let results: Vec<Result<RunRecord>> = cells
            .par_iter()
            .map(|&(method, m, seed)| {
                run_cell(&name, &split, method, m, seed, options).map(|mut rec| {
                    rec.warnings.push("cells ran concurrently; timings are not comparable".into());
                    rec
                })
            })
            .collect();
        for (result, cell) in results.into_iter().zip(cells.iter().copied()) {
            record(result, cell)?;
        }
    } else {
        for &(method, m, seed) in &cells {
            record(run_cell(&name, &split, method, m, seed, options), (method, m, seed))?;
        }
    }

    let outcome = ExperimentOutcome {
        dataset: name,
        n_train: split.x_train.rows(),
        n_test: split.x_test.rows(),
        records,
        failures,
    };
    if let Some(path) = &config.out_json {
        write_json(path, &outcome)?;
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub method: String,
    pub m: usize,
    pub median_delta: Option<f64>,
    /// Fraction of seeds whose sketch satisfies the δ-sandwich.
    pub fraction_within: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub dataset: String,
    pub delta: f64,
    pub f_star: f64,
    pub zero_residual: bool,
    pub reports: Vec<DeltaReport>,
    /// Per-report sandwich flag at `delta`, absent for zero-residual data.
    pub within: Vec<Option<bool>>,
    pub summary: Vec<DeltaSummary>,
    pub failures: Vec<FailedCell>,
}

/// Measures `|g − f*| / f*` for every sketched method, size and seed on
/// the full dataset (no split).
pub fn run_delta_sweep(config: &ExperimentConfig) -> Result<DeltaSweep> {
    config.validate()?;
    let loaded = load_data(config)?;
    let x = loaded.dataset.to_dense();
    let checker = DeltaChecker::new(&x, loaded.dataset.labels())?;
    let mut sweep = DeltaSweep {
        dataset: loaded.dataset.name().to_string(),
        delta: config.delta,
        f_star: checker.f_star(),
        zero_residual: false,
        reports: Vec::new(),
        within: Vec::new(),
        summary: Vec::new(),
        failures: Vec::new(),
    };
    for &method in &config.method {
        let Some(kind) = method.sketch_kind() else { continue };
        for m in config.sizes() {
            let mut deltas = Vec::new();
            let mut hits = 0usize;
            let mut counted = 0usize;
            for seed in config.seed_list() {
                let report = SketchOperator::build(kind, m, x.rows(), seed).and_then(|s| checker.check(&s));
                match report {
                    Ok(r) => {
                        sweep.zero_residual |= r.zero_residual;
                        let within = r.within(config.delta);
                        if let Some(w) = within {
                            counted += 1;
                            hits += w as usize;
                        }
                        if let Some(d) = r.delta_emp {
                            deltas.push(d);
                        }
                        sweep.within.push(within);
                        sweep.reports.push(r);
                    }
                    Err(e) => sweep.failures.push(FailedCell {
                        method: method.name().to_string(),
                        m: Some(m),
                        seed,
                        error: e.to_string(),
                    }),
                }
            }
            sweep.summary.push(DeltaSummary {
                method: method.name().to_string(),
                m,
                median_delta: (!deltas.is_empty()).then(|| median(&mut deltas)),
                fraction_within: (counted > 0).then(|| hits as f64 / counted as f64),
            });
        }
    }
    if let Some(path) = &config.out_json {
        write_json(path, &sweep)?;
    }
    Ok(sweep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRecommendation {
    pub delta: f64,
    /// For the Gaussian and Rademacher sketches.
    pub subgaussian_m: usize,
    pub wh_m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub dataset: String,
    pub n: usize,
    pub p: usize,
    /// Dimension of `range(X)`.
    pub rank: usize,
    pub c1: f64,
    pub gaussian: WidthEstimate,
    pub rademacher: WidthEstimate,
    /// S-Gaussian width under a Walsh-Hadamard sketch of size `m`.
    pub s_gaussian_wh: WidthEstimate,
    pub m: usize,
    pub recommendations: Vec<SizeRecommendation>,
}

/// δ values the width report recommends sizes for, besides the configured one.
pub const REPORT_DELTAS: [f64; 3] = [0.1, 0.25, 0.5];

pub fn run_widths(config: &ExperimentConfig) -> Result<WidthReport> {
    config.validate()?;
    let loaded = load_data(config)?;
    let x = loaded.dataset.to_dense();
    let n = x.rows();
    let basis = orthonormal_basis(&x)?;
    let samples = config.samples.max(2);
    let gaussian = gaussian_width_mc(&basis, samples, config.seed)?;
    let rademacher = rademacher_width_mc(&basis, samples, config.seed)?;
    let m = config.sizes().into_iter().filter(|&m| m <= n).max().unwrap_or(n);
    let s_gaussian_wh = s_gaussian_width_mc(&basis, SketchKind::WalshHadamard, m, samples, config.seed)?;

    let mut deltas: Vec<f64> = REPORT_DELTAS.to_vec();
    if !deltas.contains(&config.delta) {
        deltas.push(config.delta);
    }
    deltas.sort_by(|a, b| b.total_cmp(a));
    let recommendations = deltas
        .into_iter()
        .map(|delta| {
            Ok(SizeRecommendation {
                delta,
                subgaussian_m: recommend_sketch_size(gaussian.mean, delta, config.c1)?,
                wh_m: recommend_sketch_size_wh(s_gaussian_wh.mean, rademacher.mean, n, delta, config.c1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = WidthReport {
        dataset: loaded.dataset.name().to_string(),
        n,
        p: x.cols(),
        rank: basis.cols(),
        c1: config.c1,
        gaussian,
        rademacher,
        s_gaussian_wh,
        m,
        recommendations,
    };
    if let Some(path) = &config.out_json {
        write_json(path, &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lipschitz: f64,
    pub weights_frobenius: f64,
    pub doubling_dim: f64,
    pub bayes_errors: Vec<f64>,
    pub rhs_1nn: f64,
    pub rhs_knn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub dataset: String,
    pub method: String,
    pub m: Option<usize>,
    pub metric: CoverMetric,
    /// Diameter of the training inputs before rescaling to unit diameter.
    pub raw_diameter: f64,
    pub epsilon: Vec<f64>,
    pub size: Vec<usize>,
    pub doubling: DoublingEstimate,
    /// Absent when the Lipschitz constant or Bayes errors are unknown.
    pub bounds: Option<BoundReport>,
    pub notes: Vec<String>,
}

/// Greedy covering curve of the (unit-diameter) training inputs, the
/// doubling-dimension proxy, and the bound right-hand sides.
///
/// Bayes errors are only known for the smooth generator; `L` defaults to
/// the generator's constant there and must be supplied otherwise.
pub fn diagnose(config: &ExperimentConfig) -> Result<Diagnosis> {
    config.validate()?;
    let loaded = load_data(config)?;
    let split = Split::new(&loaded.dataset, config.test_fraction, config.seed)?;
    let (unit, raw_diameter) = normalize_diameter(&split.x_train)?;
    let curve = covering_curve(&unit, &config.epsilons, CoverMetric::Euclidean, None)?;
    for cover in &curve {
        cover.verify(&unit, None)?;
    }
    let points: Vec<(f64, usize)> = curve.iter().map(|c| (c.epsilon, c.size)).collect();
    let doubling = doubling_dim_estimate(&points)?;

    let method = config.method[0];
    let m = method.sketch_kind().map(|_| {
        config
            .sizes()
            .into_iter()
            .filter(|&m| m <= unit.rows())
            .max()
            .unwrap_or(unit.rows())
    });
    let unit_split = Split {
        x_train: unit,
        ..split
    };
    let (model, _) = fit_method(&unit_split, method, m.unwrap_or(0), config.seed, config.predict_options())?;
    let weights_frobenius = model.weights().frobenius_norm();

    let mut notes = Vec::new();
    let lipschitz = config.lipschitz.or(loaded.smooth.as_ref().map(|s| s.lipschitz));
    let bayes = loaded.smooth.as_ref().map(|s| s.bayes_errors.clone());
    if lipschitz.is_none() {
        notes.push("bounds skipped: no Lipschitz constant (pass --L)".into());
    }
    if bayes.is_none() {
        notes.push("bounds skipped: Bayes errors are only known for the smooth generator".into());
    }
    if doubling.slope <= 0.0 {
        notes.push("bounds skipped: non-positive doubling-dimension estimate".into());
    }
    let bounds = match (lipschitz, bayes) {
        (Some(lipschitz), Some(bayes_errors)) if doubling.slope > 0.0 => {
            let inputs = BoundInputs {
                q: loaded.dataset.q(),
                n: unit_split.x_train.rows(),
                lipschitz,
                weights_frobenius,
                doubling_dim: doubling.slope,
                k: config.k,
                bayes_errors,
            };
            Some(BoundReport {
                rhs_1nn: bound_rhs_1nn(&inputs)?,
                rhs_knn: bound_rhs_knn(&inputs)?,
                lipschitz,
                weights_frobenius,
                doubling_dim: doubling.slope,
                bayes_errors: inputs.bayes_errors,
            })
        }
        _ => None,
    };
    debug_assert!((diameter(&unit_split.x_train) - 1.0).abs() < 1e-9);
    let report = Diagnosis {
        dataset: loaded.dataset.name().to_string(),
        method: method.name().to_string(),
        m,
        metric: CoverMetric::Euclidean,
        raw_diameter,
        epsilon: points.iter().map(|p| p.0).collect(),
        size: points.iter().map(|p| p.1).collect(),
        doubling,
        bounds,
        notes,
    };
    if let Some(path) = &config.out_json {
        write_json(path, &report)?;
    }
    Ok(report)
}

/// Parses `1,2,5` or a half-open range `0..10`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::invalid(format!("bad seed list {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    parse_list(text)
}

/// Parses a comma-separated list.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::invalid(format!("bad list entry {t:?} in {text:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(n: usize) -> ExperimentConfig {
        ExperimentConfig {
            synthetic: Some(SyntheticChoice::Planted),
            n,
            p: 8,
            q: 3,
            m_grid: vec![32, 64],
            k: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("svd".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_and_aliases() {
        let cfg = ExperimentConfig::from_json(r#"{"synthetic": "planted", "methods": ["exact", "wh"], "L": 2.0}"#)
            .unwrap();
        assert_eq!(cfg.method, vec![Method::Exact, Method::Sketch(SketchKind::WalshHadamard)]);
        assert_eq!(cfg.m_grid, vec![64, 128, 256, 512, 1024]);
        assert_eq!(cfg.lipschitz, Some(2.0));
        assert_eq!(cfg.seed, 42);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn exact_only_gives_one_row_per_seed() {
        let cfg = ExperimentConfig {
            method: vec![Method::Exact],
            seeds: vec![1, 2, 3],
            ..planted(500)
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.records.iter().all(|r| r.m.is_none()));
        assert!(out.records[0].csv_line().contains(",exact,,5,1,"));
    }

    #[test]
    fn oversized_cell_fails_alone() {
        let cfg = ExperimentConfig {
            method: vec![Method::Sketch(SketchKind::WalshHadamard)],
            m_grid: vec![32, 4096],
            ..planted(300)
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].m, Some(4096));
    }

    #[test]
    fn delta_sweep_full_size_walsh_hadamard_is_exact() {
        let cfg = ExperimentConfig {
            method: vec![Method::Sketch(SketchKind::WalshHadamard)],
            m: Some(256),
            ..planted(256)
        };
        let sweep = run_delta_sweep(&cfg).unwrap();
        assert!(sweep.reports[0].delta_emp.unwrap() <= 1e-8);
        assert_eq!(sweep.within, vec![Some(true)]);
    }

    #[test]
    fn widths_of_identity_design() {
        let ds = MultiLabelDataset::from_dense(
            "eye",
            &DenseMatrix::identity(16),
            LabelMatrix::from_rows(&(0..16).map(|i| vec![(i % 2) as u8]).collect::<Vec<_>>()).unwrap(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eye.txt");
        ds.save(&path).unwrap();
        let cfg = ExperimentConfig {
            data: Some(path),
            m: Some(8),
            samples: 20_000,
            ..ExperimentConfig::default()
        };
        let report = run_widths(&cfg).unwrap();
        // E[chi_16] = √2 Γ(8.5) / Γ(8)
        assert!((report.gaussian.mean - 3.9692).abs() < 0.03, "{}", report.gaussian.mean);
        assert_eq!(report.rank, 16);
        let ms: Vec<usize> = report.recommendations.iter().map(|r| r.subgaussian_m).collect();
        assert!(ms.windows(2).all(|w| w[0] <= w[1]));
        let text = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<WidthReport>(&text).unwrap(), report);
    }

    #[test]
    fn diagnose_smooth_reports_bounds() {
        let cfg = ExperimentConfig {
            synthetic: Some(SyntheticChoice::Smooth),
            n: 600,
            q: 2,
            method: vec![Method::Exact],
            ..ExperimentConfig::default()
        };
        let d = diagnose(&cfg).unwrap();
        assert!(d.size.windows(2).all(|w| w[0] <= w[1]));
        let b = d.bounds.expect("smooth data has known Bayes errors");
        assert!(b.rhs_knn > 0.0 && b.rhs_1nn > 0.0);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seed_list("4,9").unwrap(), vec![4, 9]);
        assert!(parse_seed_list("3..3").is_err());
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
