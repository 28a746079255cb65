//! Covering numbers, a doubling-dimension proxy, and the right-hand sides
//! of the nearest-neighbor generalization bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMetric {
    /// Euclidean distance between raw points.
    Euclidean,
    /// Euclidean distance after mapping `x ↦ V̂ᵀx`.
    Embedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    pub epsilon: f64,
    pub metric: CoverMetric,
    /// Row indices of the centers, in the order they were chosen.
    pub center_indices: Vec<usize>,
    pub size: usize,
}

/// Points in the space the metric is evaluated in.
fn metric_points(points: &DenseMatrix, metric: CoverMetric, weights: Option<&DenseMatrix>) -> Result<DenseMatrix> {
    if points.rows() == 0 {
        return Err(Error::invalid("cannot cover an empty point set"));
    }
    match (metric, weights) {
        (CoverMetric::Euclidean, _) => Ok(points.clone()),
        (CoverMetric::Embedding, Some(w)) => points.matmul(w),
        (CoverMetric::Embedding, None) => Err(Error::invalid("embedding metric requires the fitted weights")),
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon = {epsilon} must be positive")));
    }
    Ok(())
}

/// Scans points in index order and keeps every point whose distance to all
/// current centers is at least `epsilon`. Every point ends up strictly
/// within `epsilon` of a center, and centers are pairwise at least
/// `epsilon` apart, so the size bounds the covering number from above.
pub fn greedy_epsilon_cover(
    points: &DenseMatrix,
    epsilon: f64,
    metric: CoverMetric,
    weights: Option<&DenseMatrix>,
) -> Result<CoverResult> {
    check_epsilon(epsilon)?;
    let space = metric_points(points, metric, weights)?;
    let centers = extend_cover(&space, epsilon, Vec::new());
    Ok(CoverResult {
        epsilon,
        metric,
        size: centers.len(),
        center_indices: centers,
    })
}

fn extend_cover(space: &DenseMatrix, epsilon: f64, mut centers: Vec<usize>) -> Vec<usize> {
    for i in 0..space.rows() {
        let p = space.row(i);
        if centers.iter().all(|&c| distance(p, space.row(c)) >= epsilon) {
            centers.push(i);
        }
    }
    centers
}

impl CoverResult {
    /// Full scan: every point within `epsilon` of some center, centers
    /// pairwise at least `epsilon` apart.
    pub fn verify(&self, points: &DenseMatrix, weights: Option<&DenseMatrix>) -> Result<()> {
        let space = metric_points(points, self.metric, weights)?;
        if self.size != self.center_indices.len() {
            return Err(Error::invalid("size disagrees with the center list"));
        }
        for i in 0..space.rows() {
            let covered = self
                .center_indices
                .iter()
                .any(|&c| distance(space.row(i), space.row(c)) < self.epsilon);
            if !covered {
                return Err(Error::invalid(format!("point {i} is not covered")));
            }
        }
        for (a, &ca) in self.center_indices.iter().enumerate() {
            for &cb in &self.center_indices[a + 1..] {
                if distance(space.row(ca), space.row(cb)) < self.epsilon {
                    return Err(Error::invalid(format!("centers {ca} and {cb} are closer than epsilon")));
                }
            }
        }
        Ok(())
    }
}

/// Greedy covers at a descending sequence of radii.
///
/// Covers are nested: the centers found at one radius are kept as the
/// first centers at the next (they are already far enough apart), and the
/// scan only adds to them. Sizes are therefore non-decreasing.
pub fn covering_curve(
    points: &DenseMatrix,
    epsilons: &[f64],
    metric: CoverMetric,
    weights: Option<&DenseMatrix>,
) -> Result<Vec<CoverResult>> {
    if epsilons.is_empty() {
        return Err(Error::invalid("no radii given"));
    }
    for &e in epsilons {
        check_epsilon(e)?;
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("radii must be strictly descending"));
    }
    let space = metric_points(points, metric, weights)?;
    let mut centers = Vec::new();
    let mut out = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        centers = extend_cover(&space, epsilon, centers);
        out.push(CoverResult {
            epsilon,
            metric,
            center_indices: centers.clone(),
            size: centers.len(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingEstimate {
    /// Slope of `log₂ size` against `log₂(1/ε)`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub note: Option<String>,
}

/// Least-squares slope of `log₂ N(ε)` on `log₂(1/ε)`, a proxy for the
/// doubling dimension.
pub fn doubling_dim_estimate(curve: &[(f64, usize)]) -> Result<DoublingEstimate> {
    if curve.len() < 2 {
        return Err(Error::invalid("need at least two curve points"));
    }
    if curve.iter().any(|&(e, s)| !(e > 0.0) || s == 0) {
        return Err(Error::invalid("curve needs positive radii and sizes"));
    }
    let xs: Vec<f64> = curve.iter().map(|&(e, _)| -e.log2()).collect();
    let ys: Vec<f64> = curve.iter().map(|&(_, s)| (s as f64).log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("curve radii must be distinct"));
    }
    if curve.iter().all(|&(_, s)| s == curve[0].1) {
        return Ok(DoublingEstimate {
            slope: 0.0,
            intercept: my,
            residual: 0.0,
            note: Some("cover size does not change with the radius".into()),
        });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(DoublingEstimate {
        slope,
        intercept,
        residual: (rss / n).sqrt(),
        note: None,
    })
}

/// Largest pairwise Euclidean distance (quadratic scan).
pub fn diameter(points: &DenseMatrix) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.rows() {
        for j in i + 1..points.rows() {
            best = best.max(distance(points.row(i), points.row(j)));
        }
    }
    best
}

/// Rescales points to unit diameter; returns the points and the factor applied.
pub fn normalize_diameter(points: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    let d = diameter(points);
    if d == 0.0 {
        return Err(Error::invalid("point set has zero diameter"));
    }
    Ok((points.scale(1.0 / d)?, 1.0 / d))
}

/// Inputs to the nearest-neighbor generalization bounds. The input space
/// is assumed rescaled to unit diameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub q: usize,
    pub n: usize,
    /// Lipschitz constant of the conditional label probabilities; user supplied.
    pub lipschitz: f64,
    /// `‖V̂‖_F`.
    pub weights_frobenius: f64,
    /// Doubling dimension of the input space.
    pub doubling_dim: f64,
    pub k: usize,
    /// Per-label Bayes error `P(b*_i(x) ≠ y_i)`.
    pub bayes_errors: Vec<f64>,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if !(self.doubling_dim > 0.0 && self.doubling_dim.is_finite()) {
            return Err(Error::invalid("doubling dimension must be positive"));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::invalid("Lipschitz constant must be non-negative"));
        }
        if !(self.weights_frobenius >= 0.0 && self.weights_frobenius.is_finite()) {
            return Err(Error::invalid("‖V̂‖_F must be non-negative"));
        }
        if self.bayes_errors.len() != self.q {
            return Err(Error::invalid(format!(
                "expected {} Bayes errors, got {}",
                self.q,
                self.bayes_errors.len()
            )));
        }
        if self.bayes_errors.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::invalid("Bayes errors must lie in [0, 1]"));
        }
        Ok(())
    }

    fn rate(&self) -> f64 {
        (self.n as f64).powf(1.0 / (self.doubling_dim + 1.0))
    }
}

/// `Σ 2·bayes_i + 3 q L ‖V̂‖_F / n^{1/(D+1)}`.
pub fn bound_rhs_1nn(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    let bayes: f64 = b.bayes_errors.iter().map(|e| 2.0 * e).sum();
    Ok(bayes + 3.0 * b.q as f64 * b.lipschitz * b.weights_frobenius / b.rate())
}

/// Per-label multiplier on the Bayes error in the kNN bound, `1 + √(8/k)`.
pub fn knn_bayes_factor(k: usize) -> f64 {
    1.0 + (8.0 / k as f64).sqrt()
}

/// `Σ (1 + √(8/k))·bayes_i + q (6 L ‖V̂‖_F + k) / n^{1/(D+1)}`.
pub fn bound_rhs_knn(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    if b.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let factor = knn_bayes_factor(b.k);
    let bayes: f64 = b.bayes_errors.iter().map(|e| factor * e).sum();
    Ok(bayes + b.q as f64 * (6.0 * b.lipschitz * b.weights_frobenius + b.k as f64) / b.rate())
}
