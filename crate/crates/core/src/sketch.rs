//! Random sketch operators: dense subgaussian matrices and the subsampled
//! randomized Walsh-Hadamard transform.
//!
//! Both families are normalized so that `E[SᵀS] = I`. A dense sketch has
//! i.i.d. entries (standard normal or ±1) divided by `√m`. The Walsh-Hadamard
//! sketch is
//!
//! ```text
//! S = √(n'/m) · P · (H / √n') · R
//! ```
//!
//! where `n'` is `n` rounded up to a power of two (inputs are zero padded),
//! `R` is a diagonal of random signs, `H` the unnormalized ±1 Hadamard matrix
//! and `P` keeps `m` distinct rows chosen uniformly. The two scalars collapse
//! into a single factor `1/√m` applied after the transform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::random::{streams, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchKind {
    /// Dense, i.i.d. standard normal entries.
    Gaussian,
    /// Dense, i.i.d. ±1 entries.
    Rademacher,
    /// Subsampled randomized Walsh-Hadamard transform.
    WalshHadamard,
}

impl SketchKind {
    /// Short method name used in reports (`gauss`, `rademacher`, `wh`).
    pub fn method_name(self) -> &'static str {
        match self {
            SketchKind::Gaussian => "gauss",
            SketchKind::Rademacher => "rademacher",
            SketchKind::WalshHadamard => "wh",
        }
    }

    pub fn from_method_name(name: &str) -> Option<Self> {
        match name {
            "gauss" | "gaussian" => Some(SketchKind::Gaussian),
            "rademacher" => Some(SketchKind::Rademacher),
            "wh" | "walsh_hadamard" => Some(SketchKind::WalshHadamard),
            _ => None,
        }
    }

    pub fn is_subgaussian(self) -> bool {
        !matches!(self, SketchKind::WalshHadamard)
    }
}

/// Identifies a sketch without its payload; enough to rebuild it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchMeta {
    pub kind: SketchKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct WalshHadamardPayload {
    /// `n` rounded up to a power of two.
    pub padded: usize,
    /// Diagonal of `R`, length `padded`.
    pub signs: Vec<f64>,
    /// Sampled rows of the transform, sorted, distinct, `< padded`.
    pub rows: Vec<usize>,
    /// Applied once to every output entry; equals `1/√m`.
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub enum SketchPayload {
    Dense(DenseMatrix),
    WalshHadamard(WalshHadamardPayload),
}

/// A materialized random `m x n` sketch.
#[derive(Clone, Debug)]
pub struct SketchOperator {
    meta: SketchMeta,
    payload: SketchPayload,
}

impl SketchOperator {
    /// Builds any supported sketch.
    pub fn build(kind: SketchKind, m: usize, n: usize, seed: u64) -> Result<Self> {
        match kind {
            SketchKind::WalshHadamard => Self::walsh_hadamard(m, n, seed),
            _ => Self::subgaussian(kind, m, n, seed),
        }
    }

    /// Dense sketch with i.i.d. entries scaled by `1/√m`.
    pub fn subgaussian(kind: SketchKind, m: usize, n: usize, seed: u64) -> Result<Self> {
        check_size(m, n)?;
        let scale = 1.0 / (m as f64).sqrt();
        let mut rng = RngState::new(seed, streams::SKETCH_DENSE);
        let raw = match kind {
            SketchKind::Gaussian => rng.gaussian(m * n),
            SketchKind::Rademacher => rng.rademacher(m * n),
            SketchKind::WalshHadamard => {
                return Err(Error::invalid("walsh-hadamard is not a dense subgaussian sketch"))
            }
        };
        let data: Vec<f64> = raw.into_iter().map(|x| x * scale).collect();
        if data.iter().all(|&x| x == 0.0) {
            return Err(Error::invalid("sketch matrix is identically zero"));
        }
        Ok(Self {
            meta: SketchMeta { kind, m, n, seed },
            payload: SketchPayload::Dense(DenseMatrix::new(m, n, data)?),
        })
    }

    pub fn walsh_hadamard(m: usize, n: usize, seed: u64) -> Result<Self> {
        check_size(m, n)?;
        let padded = n.next_power_of_two();
        let signs = RngState::new(seed, streams::SKETCH_SIGNS).rademacher(padded);
        let rows = RngState::new(seed, streams::SKETCH_ROWS).sample_without_replacement(m, padded)?;
        let scale = (padded as f64 / m as f64).sqrt() / (padded as f64).sqrt();
        Ok(Self {
            meta: SketchMeta {
                kind: SketchKind::WalshHadamard,
                m,
                n,
                seed,
            },
            payload: SketchPayload::WalshHadamard(WalshHadamardPayload {
                padded,
                signs,
                rows,
                scale,
            }),
        })
    }

    pub fn meta(&self) -> SketchMeta {
        self.meta
    }

    pub fn kind(&self) -> SketchKind {
        self.meta.kind
    }

    pub fn m(&self) -> usize {
        self.meta.m
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn seed(&self) -> u64 {
        self.meta.seed
    }

    /// Subgaussian parameter of the rows; both implemented families are 1-subgaussian.
    pub fn sigma(&self) -> f64 {
        1.0
    }

    pub fn payload(&self) -> &SketchPayload {
        &self.payload
    }

    /// Computes `S · M`.
    pub fn apply(&self, mat: &DenseMatrix) -> Result<DenseMatrix> {
        if mat.rows() != self.meta.n {
            return Err(Error::DimensionMismatch {
                op: "apply_sketch",
                left: (self.meta.m, self.meta.n),
                right: mat.shape(),
            });
        }
        match &self.payload {
            SketchPayload::Dense(s) => s.matmul(mat),
            SketchPayload::WalshHadamard(wh) => {
                let (n, c, m) = (self.meta.n, mat.cols(), self.meta.m);
                let by_column = mat.transpose();
                let sketched: Vec<Vec<f64>> = (0..c)
                    .into_par_iter()
                    .map(|j| {
                        let col = &by_column.data()[j * n..(j + 1) * n];
                        let mut buf = vec![0.0; wh.padded];
                        for (b, (x, s)) in buf.iter_mut().zip(col.iter().zip(&wh.signs)) {
                            *b = x * s;
                        }
                        fwht_in_place(&mut buf).expect("padded length is a power of two");
                        wh.rows.iter().map(|&r| buf[r] * wh.scale).collect()
                    })
                    .collect();
                let mut out = vec![0.0; m * c];
                for (j, col) in sketched.iter().enumerate() {
                    for (i, v) in col.iter().enumerate() {
                        out[i * c + j] = *v;
                    }
                }
                DenseMatrix::from_vec_checked(m, c, out, "sketched matrix")
            }
        }
    }

    /// Explicit `m x n` matrix. Walsh-Hadamard entries are evaluated from the
    /// bit-parity formula `H_ij = (-1)^popcount(i & j)`, not via the fast transform.
    pub fn to_dense(&self) -> DenseMatrix {
        match &self.payload {
            SketchPayload::Dense(s) => s.clone(),
            SketchPayload::WalshHadamard(wh) => {
                let (m, n) = (self.meta.m, self.meta.n);
                DenseMatrix::from_fn(m, n, |i, j| {
                    let parity = (wh.rows[i] & j).count_ones() & 1;
                    let h = if parity == 0 { 1.0 } else { -1.0 };
                    wh.scale * h * wh.signs[j]
                })
                .expect("finite entries")
            }
        }
    }

    /// `‖S‖²_F`.
    pub fn frobenius_norm_sq(&self) -> f64 {
        match &self.payload {
            SketchPayload::Dense(s) => s.frobenius_norm_sq(),
            SketchPayload::WalshHadamard(wh) => {
                (self.meta.m * self.meta.n) as f64 * wh.scale * wh.scale
            }
        }
    }
}

fn check_size(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("sketch size m must be at least 1"));
    }
    if m > n {
        return Err(Error::invalid(format!("sketch size m = {m} exceeds row count n = {n}")));
    }
    Ok(())
}

/// In-place fast Walsh-Hadamard transform, `v ← H v` with the unnormalized
/// Sylvester-ordered ±1 matrix. Θ(n log n) additions.
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut half = 1;
    while half < n {
        for block in v.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let x = *a;
                let y = *b;
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
    Ok(())
}
