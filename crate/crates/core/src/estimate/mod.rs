//! Projection, least squares and maximum likelihood estimators.

pub mod als;
pub mod covariance;
pub mod cp;
pub mod mle;
pub mod options;
pub mod projection;
pub mod var;

pub use als::{fit_lse, residuals};
pub use covariance::hier_svd_sep_cov;
pub use cp::{cp_rank_r, CpDecomposition};
pub use mle::{fit_mle, loglik, loglik_at_mode};
pub use options::{FitOptions, FitReport, Init};
pub use projection::{proj_estimator, NoiseKind};
pub use var::{var_ols, VarFit};

use crate::error::{Result, TenArError};
use crate::linalg;
use crate::model::ModelSpec;
use crate::series::TensorSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Projection,
    Lse,
    Mle,
}

impl std::str::FromStr for Estimator {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proj" | "projection" => Ok(Self::Projection),
            "lse" => Ok(Self::Lse),
            "mle" => Ok(Self::Mle),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown estimator {s:?} (expected proj, lse or mle)"
            ))),
        }
    }
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Projection => "proj",
            Estimator::Lse => "lse",
            Estimator::Mle => "mle",
        }
    }
}

/// Runs `estimator`. The projection estimator is not iterative, so its
/// report has a single objective value (the SSE) and zero sweeps.
pub fn fit(series: &TensorSeries, spec: &ModelSpec, estimator: Estimator, opts: &FitOptions) -> Result<FitReport> {
    match estimator {
        Estimator::Lse => fit_lse(series, spec, opts),
        Estimator::Mle => fit_mle(series, spec, opts),
        Estimator::Projection => {
            opts.validate()?;
            let model = proj_estimator(series, spec, NoiseKind::Dense, opts.ridge, opts.cp_restarts, opts.seed)?;
            let resid = residuals(series, &model)?;
            let d = spec.entries();
            let n = resid.len() / d;
            let r = nalgebra::DMatrixView::from_slice(resid.data(), d, n);
            let residual_cov = linalg::symmetrize(&(r * r.transpose() / n as f64));
            let sse = resid.norm_squared();
            Ok(FitReport {
                model,
                objective_trace: vec![sse],
                sweeps_used: 0,
                converged: true,
                residual_cov,
                sse,
                notes: Vec::new(),
            })
        }
    }
}
