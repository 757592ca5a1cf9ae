//! Permutation matrices as index maps, and the rearrangement operator that
//! turns a sum of Kronecker products into a sum of rank-one tensors.

use crate::error::{Result, TenArError};
use crate::tensor::{DenseMatrix, DenseTensor};

/// A permutation matrix `P` stored as `(P v)[i] = v[map[i]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &j in &map {
            if j >= map.len() || std::mem::replace(&mut seen[j], true) {
                return Err(TenArError::InvalidArgument(
                    "index map is not a permutation".into(),
                ));
            }
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.map.len());
        self.map.iter().map(|&j| v[j]).collect()
    }

    /// Transpose, which is also the inverse.
    pub fn transpose(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Self { map: inv }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &Permutation) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            map: self.map.iter().map(|&j| other.map[j]).collect(),
        }
    }

    /// `I_n ⊗ self`.
    pub fn identity_kron(&self, n: usize) -> Self {
        let m = self.len();
        let mut map = Vec::with_capacity(n * m);
        for b in 0..n {
            map.extend(self.map.iter().map(|&j| b * m + j));
        }
        Self { map }
    }

    /// `self ⊗ I_n`.
    pub fn kron_identity(&self, n: usize) -> Self {
        let mut map = Vec::with_capacity(n * self.len());
        for &j in &self.map {
            map.extend((0..n).map(|a| j * n + a));
        }
        Self { map }
    }

    /// Dense 0/1 materialization.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &j) in self.map.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        m
    }

    /// `M * P` for a dense matrix `M`: column `map[i]` of the result is
    /// column `i` of `M`.
    pub fn right_multiply(&self, m: &DenseMatrix) -> DenseMatrix {
        assert_eq!(m.ncols(), self.len());
        let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
        for (i, &j) in self.map.iter().enumerate() {
            out.set_column(j, &m.column(i));
        }
        out
    }
}

/// The commutation matrix `P_{m,n} = sum_{i<n, j<m} U_ij ⊗ U_ij'` with `U_ij`
/// of size `n x m`. It maps `vec(B)` for an `n x m` matrix `B` to `vec(B')`.
pub fn perm_p(m: usize, n: usize) -> Permutation {
    let mut map = vec![0; m * n];
    for i in 0..n {
        for j in 0..m {
            map[i * m + j] = j * n + i;
        }
    }
    Permutation { map }
}

/// The vector permutation `Q_k` with `vec(X_(k)) = Q_k vec(X)`.
pub fn perm_q(k: usize, dims: &[usize]) -> Result<Permutation> {
    if k >= dims.len() {
        return Err(TenArError::ModeOutOfRange {
            mode: k,
            order: dims.len(),
        });
    }
    let inner: usize = dims[..k].iter().product();
    let dk = dims[k];
    let outer: usize = dims[k + 1..].iter().product();
    let mut map = vec![0; inner * dk * outer];
    for b in 0..outer {
        for a in 0..inner {
            for i in 0..dk {
                map[i + dk * (a + inner * b)] = a + inner * (i + dk * b);
            }
        }
    }
    Ok(Permutation { map })
}

/// Index map of the rearrangement operator: entry `m` of the flattened
/// `(d_1^2, ..., d_K^2)` tensor comes from entry `map[m]` of the column-major
/// `d x d` matrix.
///
/// Target index `m_k = i_k + d_k j_k` pairs row digit `i_k` and column digit
/// `j_k` of mode `k`, so `A_K ⊗ ... ⊗ A_1` maps to `vec(A_1) ∘ ... ∘ vec(A_K)`.
pub fn rearrangement_map(dims: &[usize]) -> Vec<usize> {
    let d: usize = dims.iter().product();
    let total = d * d;
    let mut map = Vec::with_capacity(total);
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..total {
        let mut row = 0;
        let mut col = 0;
        let mut stride = 1;
        for (&m, &dk) in digits.iter().zip(dims) {
            row += (m % dk) * stride;
            col += (m / dk) * stride;
            stride *= dk;
        }
        map.push(row + d * col);
        // Advance the odometer over the target tensor's indices.
        for (m, &dk) in digits.iter_mut().zip(dims) {
            *m += 1;
            if *m < dk * dk {
                break;
            }
            *m = 0;
        }
    }
    map
}

fn check_square(phi: &DenseMatrix, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.iter().any(|&x| x == 0) {
        return Err(TenArError::ShapeMismatch(format!("invalid dims {dims:?}")));
    }
    let d: usize = dims.iter().product();
    if phi.nrows() != d || phi.ncols() != d {
        return Err(TenArError::ShapeMismatch(format!(
            "expected a {d}x{d} matrix for dims {dims:?}, got {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    Ok(())
}

/// Rearrangement `R(Φ)`: a `d x d` matrix to an order-K tensor of dims
/// `(d_1^2, ..., d_K^2)`, with `R(A_K ⊗ ... ⊗ A_1) = vec(A_1) ∘ ... ∘ vec(A_K)`.
pub fn rearrange_phi(phi: &DenseMatrix, dims: &[usize]) -> Result<DenseTensor> {
    check_square(phi, dims)?;
    let src = phi.as_slice();
    let data = rearrangement_map(dims).into_iter().map(|j| src[j]).collect();
    DenseTensor::new(dims.iter().map(|d| d * d).collect(), data)
}

/// Inverse of [`rearrange_phi`].
pub fn rearrange_phi_inv(t: &DenseTensor, dims: &[usize]) -> Result<DenseMatrix> {
    let expect: Vec<usize> = dims.iter().map(|d| d * d).collect();
    if t.dims() != expect.as_slice() {
        return Err(TenArError::ShapeMismatch(format!(
            "tensor dims {:?} do not match squared dims {expect:?}",
            t.dims()
        )));
    }
    let d: usize = dims.iter().product();
    let mut out = DenseMatrix::zeros(d, d);
    let dst = out.as_mut_slice();
    for (m, j) in rearrangement_map(dims).into_iter().enumerate() {
        dst[j] = t.data()[m];
    }
    Ok(out)
}
