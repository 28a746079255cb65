//! Empirical counterparts of the sketching guarantees.
//!
//! For the unconstrained problem the tangent cone at the optimum is all of
//! `ℝ^p`, so the set whose width governs the sketch size is
//! `𝒴 = range(X) ∩ 𝕊^{n−1}`. Given an orthonormal basis `B` of `range(X)`,
//! `sup_{z∈𝒴} |⟨w, z⟩| = ‖Bᵀw‖₂`, which turns every width into a plain
//! Monte-Carlo average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;
use crate::linalg::{frobenius_objective, least_squares, DenseMatrix};
use crate::random::{derive_seed, streams, RngState};
use crate::sketch::{SketchKind, SketchOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthKind {
    Gaussian,
    Rademacher,
    SGaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub kind: WidthKind,
    pub mean: f64,
    /// Sample standard deviation over `√samples`.
    pub std_error: f64,
    pub samples: usize,
}

impl WidthEstimate {
    fn from_values(kind: WidthKind, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            kind,
            mean,
            std_error: (var / n).sqrt(),
            samples: values.len(),
        }
    }
}

fn check_basis(basis: &DenseMatrix, samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::invalid("width estimation needs at least one sample"));
    }
    if basis.cols() == 0 || basis.rows() == 0 {
        return Err(Error::invalid("empty basis"));
    }
    let gram = basis.transpose().matmul(basis)?;
    let off = gram.sub(&DenseMatrix::identity(basis.cols()))?.max_abs();
    if off > 1e-8 {
        return Err(Error::invalid(format!(
            "basis is not orthonormal (max |BᵀB − I| = {off:.3e})"
        )));
    }
    Ok(())
}

/// `‖Bᵀw‖₂` for row-major `B`.
fn projected_norm(basis: &DenseMatrix, w: &[f64]) -> f64 {
    let mut acc = vec![0.0; basis.cols()];
    for (i, wi) in w.iter().enumerate() {
        for (a, b) in acc.iter_mut().zip(basis.row(i)) {
            *a += b * wi;
        }
    }
    acc.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Gaussian width of `range(B) ∩ 𝕊^{n−1}`: mean of `‖Bᵀg‖₂`, `g ~ N(0, I_n)`.
pub fn gaussian_width_mc(basis: &DenseMatrix, samples: usize, seed: u64) -> Result<WidthEstimate> {
    check_basis(basis, samples)?;
    let mut rng = RngState::new(seed, streams::WIDTH_PROBE);
    let mut g = vec![0.0; basis.rows()];
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            rng.fill_gaussian(&mut g);
            projected_norm(basis, &g)
        })
        .collect();
    Ok(WidthEstimate::from_values(WidthKind::Gaussian, &values))
}

/// Rademacher width: mean of `‖Bᵀϖ‖₂` over uniform sign vectors.
pub fn rademacher_width_mc(basis: &DenseMatrix, samples: usize, seed: u64) -> Result<WidthEstimate> {
    check_basis(basis, samples)?;
    let mut rng = RngState::new(seed, streams::WIDTH_PROBE);
    let values: Vec<f64> = (0..samples)
        .map(|_| projected_norm(basis, &rng.rademacher(basis.rows())))
        .collect();
    Ok(WidthEstimate::from_values(WidthKind::Rademacher, &values))
}

/// S-Gaussian width: mean over a fresh sketch and `g ~ N(0, I_m)` of
/// `‖(SB)ᵀg‖₂`.
///
/// Sketches here are already normalized so that `E[SᵀS] = I`, which is the
/// `Sz/√m` of a sketch whose rows have identity covariance; no further
/// `1/√m` is applied.
pub fn s_gaussian_width_mc(
    basis: &DenseMatrix,
    kind: SketchKind,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<WidthEstimate> {
    check_basis(basis, samples)?;
    let n = basis.rows();
    if m > n {
        return Err(Error::invalid(format!("sketch size m = {m} exceeds n = {n}")));
    }
    let mut rng = RngState::new(seed, streams::WIDTH_SKETCH);
    let mut g = vec![0.0; m];
    let mut values = Vec::with_capacity(samples);
    for s in 0..samples {
        let sketch = SketchOperator::build(kind, m, n, derive_seed(seed, s as u64))?;
        let sb = sketch.apply(basis)?;
        rng.fill_gaussian(&mut g);
        values.push(projected_norm(&sb, &g));
    }
    Ok(WidthEstimate::from_values(WidthKind::SGaussian, &values))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    Ok(())
}

/// Subgaussian sketch size `⌈(c1/δ)² ω²⌉`.
pub fn recommend_sketch_size(width: f64, delta: f64, c1: f64) -> Result<usize> {
    check_delta(delta)?;
    if !(width > 0.0 && c1 > 0.0) {
        return Err(Error::invalid("width and c1 must be positive"));
    }
    Ok(((c1 / delta).powi(2) * width * width).ceil() as usize)
}

/// Walsh-Hadamard sketch size `⌈(c1/δ)² (Υ + √(6 log₂ n))² ω_S²⌉`.
pub fn recommend_sketch_size_wh(
    s_gaussian_width: f64,
    rademacher_width: f64,
    n: usize,
    delta: f64,
    c1: f64,
) -> Result<usize> {
    check_delta(delta)?;
    if !(s_gaussian_width > 0.0 && rademacher_width > 0.0 && c1 > 0.0) || n < 1 {
        return Err(Error::invalid("widths, c1 and n must be positive"));
    }
    let extra = rademacher_width + (6.0 * (n as f64).log2()).sqrt();
    Ok(((c1 / delta).powi(2) * extra * extra * s_gaussian_width * s_gaussian_width).ceil() as usize)
}

/// Exact vs sketched optimum objectives for one sketch draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub kind: SketchKind,
    pub m: usize,
    pub seed: u64,
    /// `‖XV* − Y‖²_F`.
    pub f_star: f64,
    /// `‖SXV̂ − SY‖²_F`.
    pub g_hat: f64,
    /// `|g − f| / f`; absent when the exact fit has zero residual.
    pub delta_emp: Option<f64>,
    pub zero_residual: bool,
}

impl DeltaReport {
    /// Whether `(1−δ) f* ≤ g ≤ (1+δ) f*`.
    pub fn within(&self, delta: f64) -> Option<bool> {
        self.delta_emp?;
        Some((1.0 - delta) * self.f_star <= self.g_hat && self.g_hat <= (1.0 + delta) * self.f_star)
    }
}

/// Holds the exact solution of one problem so that many sketches can be
/// compared against it.
#[derive(Clone, Debug)]
pub struct DeltaChecker {
    x: DenseMatrix,
    y: DenseMatrix,
    f_star: f64,
    zero_residual: bool,
}

impl DeltaChecker {
    pub fn new(x: &DenseMatrix, y: &LabelMatrix) -> Result<Self> {
        Self::from_dense(x, &y.to_dense())
    }

    pub fn from_dense(x: &DenseMatrix, y: &DenseMatrix) -> Result<Self> {
        let v_star = least_squares(x, y)?;
        let f_star = frobenius_objective(x, &v_star, y)?;
        let zero_residual = f_star <= 1e-12 * y.frobenius_norm_sq().max(f64::MIN_POSITIVE);
        Ok(Self {
            x: x.clone(),
            y: y.clone(),
            f_star,
            zero_residual,
        })
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn check(&self, sketch: &SketchOperator) -> Result<DeltaReport> {
        let sx = sketch.apply(&self.x)?;
        let sy = sketch.apply(&self.y)?;
        let v_hat = least_squares(&sx, &sy)?;
        let g_hat = frobenius_objective(&sx, &v_hat, &sy)?;
        let delta_emp = (!self.zero_residual).then(|| (g_hat - self.f_star).abs() / self.f_star);
        Ok(DeltaReport {
            kind: sketch.kind(),
            m: sketch.m(),
            seed: sketch.seed(),
            f_star: self.f_star,
            g_hat,
            delta_emp,
            zero_residual: self.zero_residual,
        })
    }
}

/// Fits the exact and sketched problems and reports both optima.
pub fn delta_optimality_check(x: &DenseMatrix, y: &LabelMatrix, sketch: &SketchOperator) -> Result<DeltaReport> {
    DeltaChecker::new(x, y)?.check(sketch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub m: usize,
    pub fraction_within: f64,
    pub median_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kind: SketchKind,
    pub delta: f64,
    pub rows: Vec<CalibrationRow>,
    /// Smallest grid size meeting the target fraction.
    pub m: Option<usize>,
    /// `c1` solving `m = (c1/δ)² ω²` at the chosen size.
    pub c1: Option<f64>,
}

/// Sweeps `m_grid` and finds the smallest sketch size whose δ-sandwich
/// holds in at least `target` of the seeds; converts it to a `c1` through
/// the supplied width.
pub fn calibrate_sketch_size(
    checker: &DeltaChecker,
    kind: SketchKind,
    m_grid: &[usize],
    seeds: &[u64],
    delta: f64,
    width: f64,
    target: f64,
) -> Result<Calibration> {
    check_delta(delta)?;
    if seeds.is_empty() {
        return Err(Error::invalid("calibration needs at least one seed"));
    }
    let mut grid = m_grid.to_vec();
    grid.sort_unstable();
    let mut rows = Vec::with_capacity(grid.len());
    for &m in &grid {
        let mut deltas = Vec::with_capacity(seeds.len());
        let mut hits = 0;
        for &seed in seeds {
            let sketch = SketchOperator::build(kind, m, checker.x.rows(), seed)?;
            let report = checker.check(&sketch)?;
            if report.within(delta) == Some(true) {
                hits += 1;
            }
            deltas.push(report.delta_emp.unwrap_or(0.0));
        }
        rows.push(CalibrationRow {
            m,
            fraction_within: hits as f64 / seeds.len() as f64,
            median_delta: median(&mut deltas),
        });
    }
    let m = rows.iter().find(|r| r.fraction_within >= target).map(|r| r.m);
    let c1 = m.map(|m| delta * (m as f64).sqrt() / width);
    Ok(Calibration {
        kind,
        delta,
        rows,
        m,
        c1,
    })
}

/// Median (mean of the two central values for even counts); sorts in place.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
