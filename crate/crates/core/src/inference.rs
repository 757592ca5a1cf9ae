//! Plug-in asymptotic covariances of the least squares and maximum
//! likelihood estimators, and entrywise confidence intervals.
//!
//! Parameters are stacked as `vec(A_1^(11)), ..., vec(A_K^(11)), ...,
//! vec(A_K^(pR_p))`, the order of [`TenArModel::parameter_vector`].

use nalgebra::DVector;

use crate::error::{Result, TenArError};
use crate::estimate::projection::check_dims;
use crate::linalg;
use crate::model::{NoiseSpec, TenArModel};
use crate::perm::perm_q;
use crate::series::TensorSeries;
use crate::tensor::{kron_chain, DenseMatrix, DenseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Lse,
    Mle,
}

impl std::str::FromStr for Method {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lse" => Ok(Self::Lse),
            "mle" => Ok(Self::Mle),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown method {s:?} (expected lse or mle)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AsymptoticInference {
    /// Asymptotic covariance of `sqrt(n) (θ̂ - θ)`.
    pub xi: DenseMatrix,
    /// `sqrt(Ξ_jj / n)`.
    pub stderr: DVector<f64>,
    pub method: Method,
    /// Number of equations averaged over, `T - p`.
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub stderr: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Gradient of the conditional mean with respect to the stacked parameters:
/// a `q x d` matrix. `window[i]` is the observation at lag `i + 1`.
pub fn build_w(m: &TenArModel, window: &[&DenseTensor]) -> Result<DenseMatrix> {
    let spec = m.spec();
    if window.len() != spec.order() {
        return Err(TenArError::ShapeMismatch(format!(
            "window of length {} for an order-{} model",
            window.len(),
            spec.order()
        )));
    }
    let dims = spec.dims();
    if let Some(x) = window.iter().find(|x| x.dims() != dims) {
        return Err(TenArError::ShapeMismatch(format!(
            "window observation dims {:?}, model dims {dims:?}",
            x.dims()
        )));
    }
    let d = spec.entries();
    let mut w = DenseMatrix::zeros(spec.parameter_len(), d);
    let mut row = 0;
    for (i, r) in spec.terms() {
        let term = m.term(i, r);
        for (k, &dk) in dims.iter().enumerate() {
            // B = X_(k) Φ_k' as the unfolding of X ×_{l≠k} A_l.
            let b = window[i].multi_mode_product(&with_identity(term, k), None)?.matricize(k)?;
            let inner: usize = dims[..k].iter().product();
            for c in 0..b.ncols() {
                let (lo, hi) = (c % inner, c / inner);
                for e in 0..dk {
                    let col = lo + inner * (e + dk * hi);
                    for a in 0..dk {
                        w[(row + a * dk + e, col)] = b[(a, c)];
                    }
                }
            }
            row += dk * dk;
        }
    }
    Ok(w)
}

fn with_identity(term: &[DenseMatrix], k: usize) -> Vec<DenseMatrix> {
    let mut mats = term.to_vec();
    let n = mats[k].nrows();
    mats[k] = DenseMatrix::identity(n, n);
    mats
}

/// Same matrix as [`build_w`], assembled from dense Kronecker products and
/// permutation matrices, `((X_(k) Φ_k') ⊗ I_{d_k}) Q_k`.
pub fn build_w_dense(m: &TenArModel, window: &[&DenseTensor]) -> Result<DenseMatrix> {
    let spec = m.spec();
    let dims = spec.dims();
    let d = spec.entries();
    let mut blocks = Vec::new();
    for (i, r) in spec.terms() {
        let term = m.term(i, r);
        for (k, &dk) in dims.iter().enumerate() {
            let others: Vec<DenseMatrix> = term
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != k)
                .map(|(_, a)| a.clone())
                .collect();
            let phi_k = if others.is_empty() {
                DenseMatrix::identity(1, 1)
            } else {
                kron_chain(&others)?
            };
            let b = window[i].matricize(k)? * phi_k.transpose();
            let q = perm_q(k, dims)?.to_dense();
            blocks.push(b.kronecker(&DenseMatrix::identity(dk, dk)) * q);
        }
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut w = DenseMatrix::zeros(rows, d);
    let mut at = 0;
    for b in blocks {
        w.view_mut((at, 0), (b.nrows(), d)).copy_from(&b);
        at += b.nrows();
    }
    Ok(w)
}

/// `sum_{i,r} sum_{k<K} γ_k^(ir) γ_k^(ir)'`.
fn gamma_term(m: &TenArModel) -> DenseMatrix {
    let spec = m.spec();
    let q = spec.parameter_len();
    let mut g = DenseMatrix::zeros(q, q);
    let mut offset = 0;
    for (i, r) in spec.terms() {
        for (k, a) in m.term(i, r).iter().enumerate() {
            let len = a.len();
            if k + 1 < spec.modes() {
                let v = DVector::from_column_slice(a.as_slice());
                let mut blk = g.view_mut((offset, offset), (len, len));
                blk += &v * v.transpose();
            }
            offset += len;
        }
    }
    g
}

/// Plug-in `Ξ = H^-1 M H^-1` using the entrywise gradient assembly.
pub fn asymp_cov(series: &TensorSeries, m: &TenArModel, method: Method) -> Result<AsymptoticInference> {
    assemble(series, m, method, build_w)
}

/// [`asymp_cov`] with the dense Kronecker assembly of the gradient; meant for
/// small problems and cross-checks.
pub fn asymp_cov_dense(series: &TensorSeries, m: &TenArModel, method: Method) -> Result<AsymptoticInference> {
    assemble(series, m, method, build_w_dense)
}

fn assemble(
    series: &TensorSeries,
    m: &TenArModel,
    method: Method,
    build: fn(&TenArModel, &[&DenseTensor]) -> Result<DenseMatrix>,
) -> Result<AsymptoticInference> {
    check_dims(series, m.spec())?;
    let p = m.spec().order();
    let n = series.len() - p;
    let weight = match method {
        Method::Lse => {
            let resid = crate::estimate::residuals(series, m)?;
            let d = m.spec().entries();
            let r = nalgebra::DMatrixView::from_slice(resid.data(), d, n);
            linalg::symmetrize(&(r * r.transpose() / n as f64))
        }
        Method::Mle => {
            let NoiseSpec::Separable(f) = m.noise() else {
                return Err(TenArError::InvalidArgument(
                    "MLE inference requires separable covariance".into(),
                ));
            };
            let inv: Vec<DenseMatrix> = f
                .iter()
                .map(|s| linalg::spd_inverse(s, "covariance factor"))
                .collect::<Result<_>>()?;
            kron_chain(&inv)?
        }
    };
    let q = m.spec().parameter_len();
    let mut gram = DenseMatrix::zeros(q, q);
    let mut middle = DenseMatrix::zeros(q, q);
    for t in p..series.len() {
        let window: Vec<&DenseTensor> = (1..=p).map(|i| series.obs(t - i)).collect();
        let w = build(m, &window)?;
        let ws = &w * &weight;
        match method {
            Method::Lse => {
                gram += &w * w.transpose();
                middle += &ws * w.transpose();
            }
            Method::Mle => {
                let g = &ws * w.transpose();
                gram += &g;
                middle += g;
            }
        }
    }
    let nf = n as f64;
    let mut h = gram / nf + gamma_term(m);
    let middle = linalg::symmetrize(&(middle / nf));
    let shift = 1e-10 * h.trace() / q as f64;
    for j in 0..q {
        h[(j, j)] += shift;
    }
    let h_inv = linalg::spd_inverse(&linalg::symmetrize(&h), "H matrix")?;
    let xi = linalg::symmetrize(&(&h_inv * middle * &h_inv));
    let stderr = DVector::from_fn(q, |j, _| (xi[(j, j)].max(0.0) / nf).sqrt());
    Ok(AsymptoticInference {
        xi,
        stderr,
        method,
        n,
    })
}

/// `estimate ± z_{(1+level)/2} stderr` for every stacked parameter.
pub fn conf_intervals(m: &TenArModel, inf: &AsymptoticInference, level: f64) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(TenArError::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let theta = m.parameter_vector();
    if theta.len() != inf.stderr.len() {
        return Err(TenArError::ShapeMismatch(format!(
            "{} parameters but {} standard errors",
            theta.len(),
            inf.stderr.len()
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(theta
        .iter()
        .zip(inf.stderr.iter())
        .map(|(&estimate, &stderr)| ConfidenceInterval {
            estimate,
            stderr,
            lower: estimate - z * stderr,
            upper: estimate + z * stderr,
        })
        .collect())
}

/// Standard normal quantile by Acklam's rational approximation (relative
/// error below 1.2e-9).
pub fn normal_quantile(prob: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;
    if prob <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if prob >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if prob < LOW {
        tail((-2.0 * prob.ln()).sqrt())
    } else if prob <= 1.0 - LOW {
        let q = prob - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - prob).ln()).sqrt())
    }
}
