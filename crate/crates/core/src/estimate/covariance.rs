use crate::error::{Result, TenArError};
use crate::linalg;
use crate::model::normalize_factors;
use crate::tensor::DenseMatrix;

/// Separable approximation `Σ_K ⊗ ... ⊗ Σ_1` of a `d x d` covariance by
/// recursive rank-one peeling: rearrange so that `B ⊗ A` becomes
/// `vec(A) vec(B)'`, keep the top singular pair, fold the left vector into
/// the current factor and recurse on the right one.
///
/// Factors are symmetrized, clamped to be PSD and normalized so every factor
/// but the last has unit Frobenius norm.
pub fn hier_svd_sep_cov(sigma: &DenseMatrix, dims: &[usize]) -> Result<Vec<DenseMatrix>> {
    let d: usize = dims.iter().product();
    if dims.is_empty() || sigma.nrows() != d || sigma.ncols() != d {
        return Err(TenArError::ShapeMismatch(format!(
            "covariance is {}x{}, dims {dims:?} need {d}x{d}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let mut factors = Vec::with_capacity(dims.len());
    let mut rest = linalg::symmetrize(sigma);
    for (k, &dk) in dims.iter().enumerate() {
        if k + 1 == dims.len() {
            factors.push(linalg::clamp_psd(&rest));
            break;
        }
        let m = rest.nrows() / dk;
        let r = nkp_rearrange(&rest, dk, m);
        let svd = linalg::svd_sorted(&r)?;
        let s = svd.s[0];
        let mut a = DenseMatrix::from_column_slice(dk, dk, svd.u.column(0).as_slice());
        let mut b = DenseMatrix::from_column_slice(m, m, svd.v.column(0).as_slice()) * s;
        // The pair is determined up to a joint sign; pick positive traces.
        if a.trace() < 0.0 {
            a = -a;
            b = -b;
        }
        factors.push(linalg::clamp_psd(&a));
        rest = linalg::symmetrize(&b);
    }
    Ok(normalize_factors(&factors))
}

/// `R[a_i + n a_j, b_i + m b_j] = S[a_i + n b_i, a_j + n b_j]` so that
/// `R(B ⊗ A) = vec(A) vec(B)'` for `A` of size `n`, `B` of size `m`.
fn nkp_rearrange(s: &DenseMatrix, n: usize, m: usize) -> DenseMatrix {
    let mut r = DenseMatrix::zeros(n * n, m * m);
    for bj in 0..m {
        for bi in 0..m {
            for aj in 0..n {
                for ai in 0..n {
                    r[(ai + n * aj, bi + m * bj)] = s[(ai + n * bi, aj + n * bj)];
                }
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{noise_cov, NoiseSetting};
    use crate::model::NoiseSpec;
    use crate::tensor::kron_chain;

    #[test]
    fn identity_is_separable() {
        let f = hier_svd_sep_cov(&DenseMatrix::identity(12, 12), &[2, 3, 2]).unwrap();
        for (s, d) in f.iter().zip([2, 3, 2]) {
            let c = s[(0, 0)];
            assert!((s - DenseMatrix::identity(d, d) * c).norm() < 1e-12);
        }
    }

    #[test]
    fn recovers_separable_factors() {
        let dims = [2, 3, 2];
        let NoiseSpec::Separable(truth) = noise_cov(NoiseSetting::III, &dims, 5) else {
            unreachable!()
        };
        let sigma = kron_chain(&truth).unwrap();
        let got = hier_svd_sep_cov(&sigma, &dims).unwrap();
        for (g, t) in got.iter().zip(&truth) {
            assert!((g - t).norm() <= 1e-10 * t.norm());
        }
    }

    #[test]
    fn recovers_factors_of_unequal_sizes() {
        let a = DenseMatrix::from_row_slice(
            3,
            3,
            &[2.32, -0.75, 0.42, -0.75, 1.57, -0.05, 0.42, -0.05, 1.21],
        );
        let b = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let truth = normalize_factors(&[a.clone(), b.clone()]);
        let got = hier_svd_sep_cov(&kron_chain(&[a, b]).unwrap(), &[3, 2]).unwrap();
        for (g, t) in got.iter().zip(&truth) {
            assert!((g - t).norm() <= 1e-10 * t.norm());
        }
    }

    #[test]
    fn perturbed_input_stays_psd() {
        let dims = [2, 2];
        let NoiseSpec::Separable(truth) = noise_cov(NoiseSetting::III, &dims, 6) else {
            unreachable!()
        };
        let mut sigma = kron_chain(&truth).unwrap();
        let e = DenseMatrix::from_fn(4, 4, |i, j| 1e-3 * ((i * 3 + j * 5) % 7) as f64);
        sigma += linalg::symmetrize(&e);
        for f in hier_svd_sep_cov(&sigma, &dims).unwrap() {
            assert!(linalg::check_sym_psd(&f, "factor").is_ok());
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(hier_svd_sep_cov(&DenseMatrix::identity(5, 5), &[2, 2]).is_err());
    }
}
