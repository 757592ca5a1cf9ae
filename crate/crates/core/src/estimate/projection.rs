use crate::error::Result;
use crate::estimate::covariance::hier_svd_sep_cov;
use crate::estimate::cp::cp_rank_r;
use crate::estimate::var::var_ols;
use crate::linalg;
use crate::model::{ModelSpec, NoiseSpec, TenArModel};
use crate::perm::rearrange_phi;
use crate::series::TensorSeries;
use crate::tensor::unvec_square;

/// Covariance structure attached to the projection estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Dense,
    Separable,
}

/// Projection estimator: VAR(p) least squares, then a rank-`R_i` CP
/// approximation of each rearranged `Φ^(i)`.
pub fn proj_estimator(
    series: &TensorSeries,
    spec: &ModelSpec,
    noise: NoiseKind,
    ridge: f64,
    restarts: usize,
    seed: u64,
) -> Result<TenArModel> {
    check_dims(series, spec)?;
    let dims = spec.dims();
    let var = var_ols(series, spec.order(), ridge)?;
    let mut coeffs = Vec::with_capacity(spec.order());
    for (i, (phi, &rank)) in var.phis.iter().zip(spec.kranks()).enumerate() {
        if rank == 0 {
            coeffs.push(Vec::new());
            continue;
        }
        let t = rearrange_phi(phi, dims)?;
        let cp = cp_rank_r(&t, rank, restarts, seed.wrapping_add(i as u64))?;
        let lag = cp
            .weights
            .iter()
            .zip(&cp.factors)
            .map(|(w, vs)| {
                let mut term: Vec<_> = vs
                    .iter()
                    .map(|v| unvec_square(v.as_slice()))
                    .collect::<Result<_>>()?;
                *term.last_mut().expect("K >= 1") *= *w;
                Ok(term)
            })
            .collect::<Result<Vec<_>>>()?;
        coeffs.push(lag);
    }
    let cov = linalg::clamp_psd(&var.residual_cov);
    let noise = match noise {
        NoiseKind::Dense => NoiseSpec::Dense(cov),
        NoiseKind::Separable => NoiseSpec::Separable(hier_svd_sep_cov(&cov, dims)?),
    };
    TenArModel::new(spec.clone(), coeffs, noise)?.normalize()
}

pub(crate) fn check_dims(series: &TensorSeries, spec: &ModelSpec) -> Result<()> {
    if series.dims() != spec.dims() {
        return Err(crate::TenArError::ShapeMismatch(format!(
            "series dims {:?} differ from model dims {:?}",
            series.dims(),
            spec.dims()
        )));
    }
    if series.len() <= spec.order() {
        return Err(crate::TenArError::InvalidArgument(format!(
            "series of length {} is too short for order {}",
            series.len(),
            spec.order()
        )));
    }
    Ok(())
}
