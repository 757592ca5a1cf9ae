use crate::error::{Result, TenArError};
use crate::model::TenArModel;
use crate::tensor::DenseMatrix;

/// Starting point of the iterative estimators.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Projection estimator (VAR fit, rearrangement, low-rank approximation).
    Projection,
    Provided(TenArModel),
    /// `A_k = I` for every mode but the last, `A_K = c I`; additional terms
    /// get small seeded perturbations so they are not identical.
    Scalar(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub max_sweeps: usize,
    /// Stop once the relative objective change over a sweep drops below this.
    pub rel_tol: f64,
    /// Gram matrices get `ridge * trace / size` added to the diagonal.
    pub ridge: f64,
    pub init: Init,
    /// Random restarts of the CP step inside the projection estimator.
    pub cp_restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            rel_tol: 1e-8,
            ridge: 1e-10,
            init: Init::Projection,
            cp_restarts: 10,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(TenArError::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(TenArError::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(TenArError::InvalidArgument(format!(
                "ridge must be non-negative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// Outcome of an iterative fit.
#[derive(Clone, Debug)]
pub struct FitReport {
    /// Normalized fitted model.
    pub model: TenArModel,
    /// Objective at the start and after every sweep: SSE for least squares,
    /// log-likelihood for maximum likelihood.
    pub objective_trace: Vec<f64>,
    pub sweeps_used: usize,
    pub converged: bool,
    /// Sample covariance of `vec` residuals, divisor `T - p`.
    pub residual_cov: DenseMatrix,
    /// Sum of squared residuals at the returned model.
    pub sse: f64,
    /// Diagnostics such as ridge fallbacks.
    pub notes: Vec<String>,
}
