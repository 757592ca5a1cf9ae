use crate::error::{Result, TenArError};
use crate::linalg;
use crate::series::TensorSeries;
use crate::tensor::DenseMatrix;

/// Unrestricted VAR(p) fit on `vec(X_t)`.
#[derive(Clone, Debug)]
pub struct VarFit {
    /// `Φ^(1), ..., Φ^(p)`.
    pub phis: Vec<DenseMatrix>,
    /// Residual covariance with divisor `T - p`.
    pub residual_cov: DenseMatrix,
}

impl VarFit {
    /// `sum_i Φ^(i) x_{t-i}` for `window` most recent first.
    pub fn predict(&self, window: &[&[f64]]) -> Vec<f64> {
        let d = self.phis[0].nrows();
        let mut out = nalgebra::DVector::zeros(d);
        for (phi, x) in self.phis.iter().zip(window) {
            out += phi * nalgebra::DVector::from_column_slice(x);
        }
        out.as_slice().to_vec()
    }
}

/// Stacked least squares of `x_t` on `(x_{t-1}, ..., x_{t-p})`, with
/// `ridge * trace / (pd)` added to the Gram matrix.
pub fn var_ols(series: &TensorSeries, p: usize, ridge: f64) -> Result<VarFit> {
    let d = series.entries();
    let t = series.len();
    if p == 0 {
        return Err(TenArError::InvalidArgument("VAR order must be at least 1".into()));
    }
    if t <= p * d + p {
        return Err(TenArError::InvalidArgument(format!(
            "VAR({p}) in dimension {d} needs more than {} observations, got {t}",
            p * d + p
        )));
    }
    let n = t - p;
    let y = DenseMatrix::from_fn(d, n, |r, c| series.obs(p + c).data()[r]);
    let z = DenseMatrix::from_fn(p * d, n, |r, c| {
        let lag = r / d;
        series.obs(p + c - lag - 1).data()[r % d]
    });
    let b = if ridge > 0.0 {
        let mut gram = &z * z.transpose();
        let shift = ridge * gram.trace() / (p * d) as f64;
        for i in 0..p * d {
            gram[(i, i)] += shift;
        }
        let cross = &y * z.transpose();
        linalg::solve_right_spd(&gram, &cross, "VAR regressor Gram matrix")?
    } else {
        // Without a ridge, solve on the regressors directly rather than
        // squaring their condition number in the Gram matrix.
        let svd = linalg::svd_sorted(&z.transpose())?;
        let floor = svd.s[0] * f64::EPSILON * (n.max(p * d)) as f64;
        if svd.s.iter().any(|&x| x <= floor) {
            return Err(TenArError::Singular("VAR regressor matrix".into()));
        }
        let inv_s = DenseMatrix::from_diagonal(&svd.s.map(|x| 1.0 / x));
        (&svd.v * inv_s * svd.u.transpose() * y.transpose()).transpose()
    };
    let resid = &y - &b * &z;
    let residual_cov = linalg::symmetrize(&(&resid * resid.transpose() / n as f64));
    let phis = (0..p).map(|i| b.columns(i * d, d).into_owned()).collect();
    Ok(VarFit { phis, residual_cov })
}
