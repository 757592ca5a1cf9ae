//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TenArError};
use crate::tensor::DenseMatrix;

/// Largest matrix handled by the dense Schur eigensolver; larger inputs use
/// normalized repeated squaring.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Default accuracy target of [`spectral_radius`].
pub const SPECTRAL_TOL: f64 = 1e-8;

/// Spectral radius (largest eigenvalue modulus).
pub fn spectral_radius(m: &DenseMatrix, tol: f64) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(TenArError::ShapeMismatch(format!(
            "spectral radius of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if n <= DENSE_EIGEN_LIMIT {
        let schur = Schur::try_new(m.clone(), f64::EPSILON, 100 * n.max(10)).ok_or(
            TenArError::NoConvergence {
                iterations: 100 * n.max(10),
                best: f64::NAN,
            },
        )?;
        return Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max));
    }
    gelfand_radius(m, tol)
}

/// `rho = lim ||A^(2^j)||^(1/2^j)`, with the running matrix renormalized at
/// each squaring so nothing overflows.
fn gelfand_radius(m: &DenseMatrix, tol: f64) -> Result<f64> {
    const MAX_SQUARINGS: usize = 60;
    let mut a = m.clone();
    let mut log_scale = 0.0; // log of the accumulated normalization, per unit power
    let mut power = 1.0f64;
    let mut prev = f64::INFINITY;
    let mut best = f64::NAN;
    for _ in 0..MAX_SQUARINGS {
        let norm = a.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let estimate = (log_scale + norm.ln() / power).exp();
        best = estimate;
        if (estimate - prev).abs() <= tol * estimate.max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
        prev = estimate;
        a /= norm;
        log_scale += norm.ln() / power;
        a = &a * &a;
        power *= 2.0;
    }
    Err(TenArError::NoConvergence {
        iterations: MAX_SQUARINGS,
        best,
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eigen(m: &DenseMatrix) -> (DVector<f64>, DenseMatrix) {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

/// Singular value decomposition with singular values in descending order:
/// `m = U diag(s) V'`.
pub struct SortedSvd {
    pub u: DenseMatrix,
    pub s: DVector<f64>,
    pub v: DenseMatrix,
}

/// Backed by faer: nalgebra's bidiagonal SVD can return factors that do not
/// reproduce rank-deficient inputs.
pub fn svd_sorted(m: &DenseMatrix) -> Result<SortedSvd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SortedSvd {
            u: DenseMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            v: DenseMatrix::zeros(cols, 0),
        });
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = fm.thin_svd().map_err(|_| TenArError::NoConvergence {
        iterations: 0,
        best: f64::NAN,
    })?;
    let (u, v, sv) = (svd.U(), svd.V(), svd.S().column_vector());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let s = DVector::from_iterator(k, order.iter().map(|&i| sv[i]));
    let us = DenseMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]);
    let vs = DenseMatrix::from_fn(cols, k, |i, j| v[(i, order[j])]);
    Ok(SortedSvd { u: us, s, v: vs })
}

/// Solves `x G = rhs` for symmetric positive definite `G` (so `x = rhs G^{-1}`).
pub fn solve_right_spd(g: &DenseMatrix, rhs: &DenseMatrix, what: &str) -> Result<DenseMatrix> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| TenArError::Singular(what.to_string()))?;
    // x G = rhs  <=>  G x' = rhs'
    Ok(chol.solve(&rhs.transpose()).transpose())
}

pub fn spd_inverse(g: &DenseMatrix, what: &str) -> Result<DenseMatrix> {
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| TenArError::Singular(what.to_string()))
}

pub fn spd_log_det(g: &DenseMatrix, what: &str) -> Result<f64> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| TenArError::NotPositiveDefinite(what.to_string()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Symmetric square root with eigenvalues clamped at zero.
pub fn sym_sqrt_clamped(m: &DenseMatrix) -> DenseMatrix {
    let (vals, vecs) = sym_eigen(m);
    let roots = DMatrix::from_diagonal(&vals.map(|x| x.max(0.0).sqrt()));
    &vecs * roots * vecs.transpose()
}

/// Projects onto the PSD cone by symmetrizing and clamping eigenvalues at 0.
pub fn clamp_psd(m: &DenseMatrix) -> DenseMatrix {
    let (vals, vecs) = sym_eigen(m);
    let clamped = DMatrix::from_diagonal(&vals.map(|x| x.max(0.0)));
    symmetrize(&(&vecs * clamped * vecs.transpose()))
}

/// Symmetric PSD check with the tolerances used for covariance factors:
/// `||M - M'||_F <= 1e-10 ||M||_F` and `min eig >= -1e-10 max eig`.
pub fn check_sym_psd(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(TenArError::ShapeMismatch(format!("{what} is not square")));
    }
    let norm = m.norm();
    if (m - m.transpose()).norm() > 1e-10 * norm {
        return Err(TenArError::NotPositiveDefinite(format!(
            "{what} is not symmetric"
        )));
    }
    let (vals, _) = sym_eigen(m);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    if min < -1e-10 * max.abs().max(f64::MIN_POSITIVE) || !min.is_finite() {
        return Err(TenArError::NotPositiveDefinite(format!(
            "{what} has eigenvalue {min:e} (largest {max:e})"
        )));
    }
    Ok(())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn spectral_radius_examples() {
        let id = DenseMatrix::identity(3, 3);
        assert!((spectral_radius(&id, SPECTRAL_TOL).unwrap() - 1.0).abs() < 1e-12);
        let diag = DenseMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.3]));
        assert!((spectral_radius(&diag, SPECTRAL_TOL).unwrap() - 0.5).abs() < 1e-12);
        // (λ - 0.5)^2: a defective double root.
        let jordan = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.25, 1.0]);
        let rho = spectral_radius(&jordan, SPECTRAL_TOL).unwrap();
        assert!((rho - 0.5).abs() <= 1e-8 * 0.5, "rho = {rho}");
        assert!(spectral_radius(&DenseMatrix::zeros(2, 3), SPECTRAL_TOL).is_err());
    }

    #[test]
    fn gelfand_route_agrees_with_schur() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = DenseMatrix::from_fn(30, 30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = spectral_radius(&m, SPECTRAL_TOL).unwrap();
        let b = gelfand_radius(&m, 1e-12).unwrap();
        assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let q = haar_orthogonal(6, &mut rng);
        assert!((q.transpose() * &q - DenseMatrix::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn svd_sorted_reconstructs() {
        let m = DenseMatrix::from_fn(4, 3, |i, j| ((i + 2 * j) % 5) as f64 - 1.5);
        let svd = svd_sorted(&m).unwrap();
        for w in svd.s.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let rec = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((rec - m).norm() < 1e-12);
    }

    #[test]
    fn psd_checks() {
        let ok = DenseMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(check_sym_psd(&ok, "ok").is_ok());
        let bad = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_sym_psd(&bad, "bad").is_err());
        let asym = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_sym_psd(&asym, "asym").is_err());
        let clamped = clamp_psd(&bad);
        assert!(check_sym_psd(&clamped, "clamped").is_ok());
        let root = sym_sqrt_clamped(&ok);
        assert!((&root * &root - ok).norm() < 1e-12);
    }
}
