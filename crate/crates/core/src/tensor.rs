//! Dense order-K tensors in first-index-fastest layout.
//!
//! Entry `(i_1, ..., i_K)` (0-based here) lives at flat position
//! `sum_s i_s * prod_{l<s} d_l`, so reading the buffer in order gives the
//! canonical vectorization `vec(X)`. Matrices are `nalgebra::DMatrix<f64>`,
//! which uses the same column-major convention, so a `DenseTensor` of order 2
//! and a `DenseMatrix` share one memory layout.
//!
//! Modes are 0-based throughout the API: mode `k` here is mode `k + 1` in the
//! usual mathematical notation.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{Result, TenArError};

pub type DenseMatrix = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// Splits the layout around mode `k` into (inner, d_k, outer) extents, so that
/// flat index = a + inner * (i_k + d_k * b).
/// Below this many leading entries, mode kernels use plain loops instead of
/// per-block matrix products.
const SMALL_INNER: usize = 32;

fn split_at_mode(dims: &[usize], k: usize) -> (usize, usize, usize) {
    let inner: usize = dims[..k].iter().product();
    let outer: usize = dims[k + 1..].iter().product();
    (inner, dims[k], outer)
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(TenArError::ShapeMismatch(
                "a tensor needs at least one mode".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(TenArError::ShapeMismatch(format!(
                "all dimensions must be positive, got {dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(TenArError::ShapeMismatch(format!(
                "data length {} does not match dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(
            !dims.is_empty() && dims.iter().all(|&d| d > 0),
            "invalid dims {dims:?}"
        );
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a tensor from a canonical vectorization.
    pub fn from_vec(dims: &[usize], v: &DVector<f64>) -> Result<Self> {
        Self::new(dims.to_vec(), v.as_slice().to_vec())
    }

    /// Views a matrix as an order-2 tensor.
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    /// Outer product `v_1 ∘ v_2 ∘ ... ∘ v_K`.
    pub fn outer(vectors: &[&[f64]]) -> Self {
        let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        let mut data = vec![1.0];
        for v in vectors {
            let mut next = Vec::with_capacity(data.len() * v.len());
            for &x in v.iter() {
                next.extend(data.iter().map(|&y| y * x));
            }
            data = next;
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    /// Flat position of a 0-based multi-index.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut pos = 0;
        let mut stride = 1;
        for (&i, &d) in index.iter().zip(&self.dims) {
            debug_assert!(i < d);
            pos += i * stride;
            stride *= d;
        }
        pos
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let pos = self.flat_index(index);
        self.data[pos] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &DenseTensor) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &DenseTensor) {
        debug_assert_eq!(self.dims, other.dims);
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(x, y)| *x += c * y);
    }

    pub fn sub(&self, other: &DenseTensor) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.order() {
            return Err(TenArError::ModeOutOfRange {
                mode: k,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Mode-k unfolding `X_(k)`, of shape `d_k x (d / d_k)`.
    ///
    /// Entry `(i_1..i_K)` goes to row `i_k` and column
    /// `sum_{s != k} i_s * prod_{l < s, l != k} d_l`.
    pub fn matricize(&self, k: usize) -> Result<DenseMatrix> {
        self.check_mode(k)?;
        let (inner, dk, outer) = split_at_mode(&self.dims, k);
        let mut m = DenseMatrix::zeros(dk, inner * outer);
        for b in 0..outer {
            for i in 0..dk {
                let src = inner * (i + dk * b);
                for a in 0..inner {
                    m[(i, a + inner * b)] = self.data[src + a];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`matricize`](Self::matricize).
    pub fn fold(m: &DenseMatrix, k: usize, dims: &[usize]) -> Result<Self> {
        if k >= dims.len() {
            return Err(TenArError::ModeOutOfRange {
                mode: k,
                order: dims.len(),
            });
        }
        let (inner, dk, outer) = split_at_mode(dims, k);
        if m.nrows() != dk || m.ncols() != inner * outer {
            return Err(TenArError::ShapeMismatch(format!(
                "cannot fold a {}x{} matrix along mode {k} into dims {dims:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut out = Self::zeros(dims);
        for b in 0..outer {
            for i in 0..dk {
                let dst = inner * (i + dk * b);
                for a in 0..inner {
                    out.data[dst + a] = m[(i, a + inner * b)];
                }
            }
        }
        Ok(out)
    }

    /// Mode-k product `X ×_k A`: `(X ×_k A)_(k) = A X_(k)`.
    pub fn mode_product(&self, a: &DenseMatrix, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        if a.ncols() != self.dims[k] {
            return Err(TenArError::ShapeMismatch(format!(
                "mode-{k} product needs {} columns, matrix is {}x{}",
                self.dims[k],
                a.nrows(),
                a.ncols()
            )));
        }
        let (inner, dk, outer) = split_at_mode(&self.dims, k);
        let rows = a.nrows();
        let mut dims = self.dims.clone();
        dims[k] = rows;
        let mut data = vec![0.0; inner * rows * outer];
        // Column-major: a[j + rows * i] is A[j, i].
        let acm = a.as_slice();
        if inner == 1 {
            for (src, dst) in self.data.chunks_exact(dk).zip(data.chunks_exact_mut(rows)) {
                for (i, &x) in src.iter().enumerate() {
                    for (o, &aji) in dst.iter_mut().zip(&acm[rows * i..rows * (i + 1)]) {
                        *o += aji * x;
                    }
                }
            }
        } else if inner < SMALL_INNER {
            for (src, dst) in self
                .data
                .chunks_exact(inner * dk)
                .zip(data.chunks_exact_mut(inner * rows))
            {
                for (i, s) in src.chunks_exact(inner).enumerate() {
                    for (d, &aji) in dst.chunks_exact_mut(inner).zip(&acm[rows * i..rows * (i + 1)]) {
                        for (o, x) in d.iter_mut().zip(s) {
                            *o += aji * x;
                        }
                    }
                }
            }
        } else {
            // Each outer block is an inner x d_k matrix B_b; the result block is B_b A'.
            let at = a.transpose();
            for b in 0..outer {
                let src = DMatrixView::from_slice(&self.data[inner * dk * b..inner * dk * (b + 1)], inner, dk);
                let mut dst = DMatrixViewMut::from_slice(
                    &mut data[inner * rows * b..inner * rows * (b + 1)],
                    inner,
                    rows,
                );
                dst.gemm(1.0, &src, &at, 0.0);
            }
        }
        Ok(Self { dims, data })
    }

    /// Applies `mats[k]` along every mode `k` for which `skip != Some(k)`.
    ///
    /// With `skip = None` this is `X ×_1 A_1 ×_2 ... ×_K A_K`.
    pub fn multi_mode_product(&self, mats: &[DenseMatrix], skip: Option<usize>) -> Result<Self> {
        if mats.len() != self.order() {
            return Err(TenArError::ShapeMismatch(format!(
                "{} matrices supplied for an order-{} tensor",
                mats.len(),
                self.order()
            )));
        }
        let mut out = self.clone();
        for (k, a) in mats.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            out = out.mode_product(a, k)?;
        }
        Ok(out)
    }
}

/// `X_(k) Y_(k)^T` for two tensors of identical shape, without materializing
/// the unfoldings.
pub fn mode_cross(x: &DenseTensor, y: &DenseTensor, k: usize) -> Result<DenseMatrix> {
    x.check_mode(k)?;
    if x.dims != y.dims {
        return Err(TenArError::ShapeMismatch(format!(
            "mode cross product of {:?} and {:?}",
            x.dims, y.dims
        )));
    }
    let (inner, dk, outer) = split_at_mode(&x.dims, k);
    let mut out = DenseMatrix::zeros(dk, dk);
    if inner < SMALL_INNER {
        // acc[i + dk * j] accumulates sum <x_i, y_j> over blocks.
        let acc = out.as_mut_slice();
        for (xs, ys) in x.data.chunks_exact(inner * dk).zip(y.data.chunks_exact(inner * dk)) {
            if inner == 1 {
                for (j, &yj) in ys.iter().enumerate() {
                    for (o, &xi) in acc[dk * j..dk * (j + 1)].iter_mut().zip(xs) {
                        *o += xi * yj;
                    }
                }
            } else {
                for (j, yj) in ys.chunks_exact(inner).enumerate() {
                    for (o, xi) in acc[dk * j..dk * (j + 1)].iter_mut().zip(xs.chunks_exact(inner)) {
                        *o += xi.iter().zip(yj).map(|(p, q)| p * q).sum::<f64>();
                    }
                }
            }
        }
    } else {
        for b in 0..outer {
            let range = inner * dk * b..inner * dk * (b + 1);
            let xs = DMatrixView::from_slice(&x.data[range.clone()], inner, dk);
            let ys = DMatrixView::from_slice(&y.data[range], inner, dk);
            out.gemm_tr(1.0, &xs, &ys, 1.0);
        }
    }
    Ok(out)
}

/// Kronecker chain `A_K ⊗ ... ⊗ A_1` for `mats = [A_1, ..., A_K]`.
pub fn kron_chain(mats: &[DenseMatrix]) -> Result<DenseMatrix> {
    let (first, rest) = mats
        .split_first()
        .ok_or_else(|| TenArError::InvalidArgument("empty Kronecker chain".into()))?;
    Ok(rest.iter().fold(first.clone(), |acc, m| m.kronecker(&acc)))
}

/// `vec^{-1}` of a length-`n*n` vector into an `n x n` matrix.
pub fn unvec_square(v: &[f64]) -> Result<DenseMatrix> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(TenArError::ShapeMismatch(format!(
            "vector of length {} is not a vectorized square matrix",
            v.len()
        )));
    }
    Ok(DenseMatrix::from_column_slice(n, n, v))
}
