//! Dense row-major matrices and pivoted-QR least squares.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of finite `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDense")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawDense> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawDense) -> Result<Self> {
        Self::new(raw.rows, raw.cols, raw.data)
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Caller guarantees `data.len() == rows * cols`; finiteness is checked.
    pub(crate) fn from_vec_checked(rows: usize, cols: usize, data: Vec<f64>, what: &'static str) -> Result<Self> {
        debug_assert_eq!(data.len(), rows * cols);
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        let data = self.data.iter().map(|x| x * factor).collect();
        Self::from_vec_checked(self.rows, self.cols, data, "scale")
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::from_vec_checked(self.rows, self.cols, data, "sub")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::from_vec_checked(self.rows, self.cols, data, "add")
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Matrix product. Every output entry is accumulated sequentially in
    /// ascending inner index, so results are bitwise independent of the
    /// blocking and of the number of threads.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, inner, c) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * c];
        if c == 0 || m == 0 {
            return Ok(Self { rows: m, cols: c, data: out });
        }
        const ROW_BLOCK: usize = 32;
        const INNER_BLOCK: usize = 128;
        let nonzeros = other.data.iter().filter(|&&v| v != 0.0).count();
        if nonzeros * 4 <= other.data.len() {
            // Mostly-zero right operand: walk its nonzeros only. Same
            // ascending-k order per entry, and skipped terms are exact zeros,
            // so the result is bitwise identical to the dense loop.
            let sparse: Vec<Vec<(usize, f64)>> = (0..inner)
                .map(|k| {
                    other.data[k * c..(k + 1) * c]
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(j, v)| (j, *v))
                        .collect()
                })
                .collect();
            out.par_chunks_mut(c).enumerate().for_each(|(r, out_row)| {
                for (a, b_row) in self.row(r).iter().zip(&sparse) {
                    for &(j, b) in b_row {
                        out_row[j] += a * b;
                    }
                }
            });
            return Self::from_vec_checked(m, c, out, "matmul");
        }
        out.par_chunks_mut(c * ROW_BLOCK)
            .enumerate()
            .for_each(|(block, out_rows)| {
                let row0 = block * ROW_BLOCK;
                for k0 in (0..inner).step_by(INNER_BLOCK) {
                    let k1 = (k0 + INNER_BLOCK).min(inner);
                    // Four output rows per pass share each load of `other`.
                    let mut quads = out_rows.chunks_exact_mut(4 * c);
                    for (qi, quad) in (&mut quads).enumerate() {
                        let r = row0 + 4 * qi;
                        let (o0, rest) = quad.split_at_mut(c);
                        let (o1, rest) = rest.split_at_mut(c);
                        let (o2, o3) = rest.split_at_mut(c);
                        let (a0, a1, a2, a3) = (self.row(r), self.row(r + 1), self.row(r + 2), self.row(r + 3));
                        for k in k0..k1 {
                            let b_row = &other.data[k * c..(k + 1) * c];
                            let (x0, x1, x2, x3) = (a0[k], a1[k], a2[k], a3[k]);
                            for j in 0..c {
                                let b = b_row[j];
                                o0[j] += x0 * b;
                                o1[j] += x1 * b;
                                o2[j] += x2 * b;
                                o3[j] += x3 * b;
                            }
                        }
                    }
                    let done = 4 * (out_rows.len() / (4 * c));
                    for (r, out_row) in out_rows.chunks_exact_mut(c).enumerate().skip(done) {
                        let a_row = self.row(row0 + r);
                        for k in k0..k1 {
                            let a = a_row[k];
                            let b_row = &other.data[k * c..(k + 1) * c];
                            for (o, b) in out_row.iter_mut().zip(b_row) {
                                *o += a * b;
                            }
                        }
                    }
                }
            });
        Self::from_vec_checked(m, c, out, "matmul")
    }
}

/// Dot product with four interleaved partial sums, combined in a fixed order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Relative threshold on `|R_kk| / |R_00|` below which a pivot counts as zero.
pub fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    2f64.powi(-40) * rows.max(cols) as f64
}

/// Householder QR with column pivoting, `A P = Q R`.
///
/// Reflectors are kept in compact column-major form. Factorization stops at
/// the first pivot whose norm falls under [`rank_tolerance`] relative to the
/// leading one, so `rank()` is the numerical rank.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    n: usize,
    p: usize,
    /// Column-major; column `k` holds R above the diagonal and the reflector
    /// `v_k` from the diagonal down.
    packed: Vec<f64>,
    diag: Vec<f64>,
    betas: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let (n, p) = a.shape();
        if n == 0 || p == 0 {
            return Err(Error::invalid(format!("empty design matrix {n}x{p}")));
        }
        if a.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        let mut packed = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                packed[j * n + i] = a.data[i * p + j];
            }
        }
        let mut norms: Vec<f64> = packed.chunks_exact(n).map(|c| dot(c, c)).collect();
        if norms.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroDesignMatrix);
        }
        let mut reference = norms.clone();
        let mut perm: Vec<usize> = (0..p).collect();
        let tol = rank_tolerance(n, p);
        let steps = n.min(p);
        let mut diag = Vec::with_capacity(steps);
        let mut betas = Vec::with_capacity(steps);
        let mut lead = 0.0;

        for k in 0..steps {
            let mut best = k;
            for j in k + 1..p {
                if norms[j] > norms[best] {
                    best = j;
                }
            }
            if best != k {
                for i in 0..n {
                    packed.swap(k * n + i, best * n + i);
                }
                norms.swap(k, best);
                reference.swap(k, best);
                perm.swap(k, best);
            }

            let (head, tail) = packed.split_at_mut((k + 1) * n);
            let v = &mut head[k * n + k..];
            let norm = dot(v, v).sqrt();
            if k == 0 {
                lead = norm;
            }
            if norm == 0.0 || norm <= tol * lead {
                break;
            }
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            let x0 = v[0];
            v[0] = x0 - alpha;
            let vtv = v[0] * v[0] + (norm * norm - x0 * x0).max(0.0);
            let beta = 2.0 / vtv;
            let v: &[f64] = v;

            tail.par_chunks_mut(n)
                .zip(norms[k + 1..].par_iter_mut())
                .zip(reference[k + 1..].par_iter_mut())
                .for_each(|((col, norm_j), ref_j)| {
                    let seg = &mut col[k..];
                    let w = beta * dot(v, seg);
                    axpy(-w, v, seg);
                    *norm_j -= seg[0] * seg[0];
                    if *norm_j <= 1e-8 * *ref_j {
                        *norm_j = dot(&seg[1..], &seg[1..]);
                        *ref_j = *norm_j;
                    }
                });

            diag.push(alpha);
            betas.push(beta);
        }
        let rank = diag.len();
        Ok(Self {
            n,
            p,
            packed,
            diag,
            betas,
            perm,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Column permutation: position `k` of the factorization holds original column `perm()[k]`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Diagonal of R up to the numerical rank.
    pub fn r_diagonal(&self) -> &[f64] {
        &self.diag
    }

    fn reflector(&self, k: usize) -> &[f64] {
        &self.packed[k * self.n + k..(k + 1) * self.n]
    }

    fn apply_qt(&self, col: &mut [f64]) {
        for k in 0..self.rank {
            let v = self.reflector(k);
            let seg = &mut col[k..];
            let w = self.betas[k] * dot(v, seg);
            axpy(-w, v, seg);
        }
    }

    fn apply_q(&self, col: &mut [f64]) {
        for k in (0..self.rank).rev() {
            let v = self.reflector(k);
            let seg = &mut col[k..];
            let w = self.betas[k] * dot(v, seg);
            axpy(-w, v, seg);
        }
    }

    /// Basic least-squares solution of `A X ≈ B`; components beyond the
    /// numerical rank are zero.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows != self.n {
            return Err(Error::DimensionMismatch {
                op: "least_squares",
                left: (self.n, self.p),
                right: b.shape(),
            });
        }
        if b.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        let (n, p, q, r) = (self.n, self.p, b.cols, self.rank);
        let rhs = b.transpose();
        let mut solution = vec![0.0; p * q];
        let columns: Vec<Vec<f64>> = rhs
            .data
            .par_chunks(n.max(1))
            .map(|col| {
                let mut work = col.to_vec();
                self.apply_qt(&mut work);
                let mut z = vec![0.0; r];
                for i in (0..r).rev() {
                    let mut s = work[i];
                    for j in i + 1..r {
                        s -= self.packed[j * n + i] * z[j];
                    }
                    z[i] = s / self.diag[i];
                }
                z
            })
            .collect();
        for (j, z) in columns.iter().enumerate() {
            for (i, zi) in z.iter().enumerate() {
                solution[self.perm[i] * q + j] = *zi;
            }
        }
        DenseMatrix::from_vec_checked(p, q, solution, "least-squares solution")
    }

    /// The first `rank()` columns of Q, as an `n x rank` matrix.
    pub fn basis(&self) -> DenseMatrix {
        let (n, r) = (self.n, self.rank);
        let cols: Vec<Vec<f64>> = (0..r)
            .into_par_iter()
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                self.apply_q(&mut e);
                e
            })
            .collect();
        let mut data = vec![0.0; n * r];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n {
                data[i * r + j] = col[i];
            }
        }
        DenseMatrix { rows: n, cols: r, data }
    }
}

/// `argmin_V ||A V - B||_F^2`, one least-squares problem per column of `B`.
pub fn least_squares(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "least_squares",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if b.cols == 0 {
        return Err(Error::invalid("least squares needs at least one right-hand side"));
    }
    PivotedQr::factor(a)?.solve(b)
}

/// `||A V - B||_F^2`, without the conventional one-half.
pub fn frobenius_objective(a: &DenseMatrix, v: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let fitted = a.matmul(v)?;
    if fitted.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op: "frobenius_objective",
            left: fitted.shape(),
            right: b.shape(),
        });
    }
    Ok(fitted
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Orthonormal basis of `range(A)` with as many columns as the numerical rank.
pub fn orthonormal_basis(a: &DenseMatrix) -> Result<DenseMatrix> {
    match PivotedQr::factor(a) {
        Ok(qr) => Ok(qr.basis()),
        Err(Error::ZeroDesignMatrix) => Err(Error::ZeroMatrix),
        Err(e) => Err(e),
    }
}
