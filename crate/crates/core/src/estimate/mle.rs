//! Maximum likelihood under a separable innovation covariance.

use std::f64::consts::PI;

use crate::error::{Result, TenArError};
use crate::estimate::als::{
    apply_modes, check_monotone, initial_model, sweep_order, Problem, State,
};
use crate::estimate::covariance::hier_svd_sep_cov;
use crate::estimate::options::{FitOptions, FitReport, Init};
use crate::estimate::projection::{check_dims, NoiseKind};
use crate::linalg;
use crate::model::{normalize_factors, ModelSpec, NoiseSpec, TenArModel};
use crate::series::TensorSeries;
use crate::tensor::{mode_cross, DenseMatrix, DenseTensor};

fn separable_factors(model: &TenArModel) -> Result<&[DenseMatrix]> {
    match model.noise() {
        NoiseSpec::Separable(f) => Ok(f),
        other => Err(TenArError::InvalidArgument(format!(
            "the likelihood needs a separable covariance, model has {} noise",
            other.kind()
        ))),
    }
}

fn inverses(factors: &[DenseMatrix]) -> Result<Vec<DenseMatrix>> {
    factors
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| {
                    TenArError::NotPositiveDefinite(format!("covariance factor {}", k + 1))
                })
        })
        .collect()
}

fn log_dets(factors: &[DenseMatrix]) -> Result<Vec<f64>> {
    factors
        .iter()
        .enumerate()
        .map(|(k, s)| linalg::spd_log_det(s, &format!("covariance factor {}", k + 1)))
        .collect()
}

/// Log-likelihood from residuals, with the quadratic form evaluated as
/// `tr(Σ_k^-1 R_(k) S_k^-1 R_(k)')` at mode `k`.
fn loglik_parts(
    resid: &DenseTensor,
    dims: &[usize],
    n: usize,
    factors: &[DenseMatrix],
    k: usize,
) -> Result<f64> {
    let inv = inverses(factors)?;
    let dets = log_dets(factors)?;
    let d: usize = dims.iter().product();
    let nf = n as f64;
    let mut ll = -0.5 * nf * d as f64 * (2.0 * PI).ln();
    for (det, &dk) in dets.iter().zip(dims) {
        ll -= 0.5 * nf * (d / dk) as f64 * det;
    }
    let weighted = apply_modes(resid, &inv, Some(k));
    let cross = mode_cross(resid, &weighted, k)?;
    ll -= 0.5 * (&inv[k] * cross).trace();
    Ok(ll)
}

/// Gaussian log-likelihood of the model's separable noise, conditional on
/// the first `p` observations.
pub fn loglik(series: &TensorSeries, model: &TenArModel) -> Result<f64> {
    loglik_at_mode(series, model, model.spec().modes() - 1)
}

/// [`loglik`] with the quadratic form assembled at mode `k`; the value does
/// not depend on `k`.
pub fn loglik_at_mode(series: &TensorSeries, model: &TenArModel, k: usize) -> Result<f64> {
    check_dims(series, model.spec())?;
    if k >= model.spec().modes() {
        return Err(TenArError::ModeOutOfRange {
            mode: k,
            order: model.spec().modes(),
        });
    }
    let factors = separable_factors(model)?;
    let problem = Problem::new(series, model.spec().order());
    let state = State::new(&problem, model.coeffs().to_vec());
    loglik_parts(&state.resid, &problem.dims, problem.n, factors, k)
}

/// Keeps a factor strictly positive definite, returning whether a ridge
/// was needed.
fn ensure_pd(s: &mut DenseMatrix) -> bool {
    let (vals, _) = linalg::sym_eigen(s);
    if vals[vals.len() - 1] > 0.0 && s.clone().cholesky().is_some() {
        return false;
    }
    let dk = s.nrows();
    let shift = (1e-10 * s.trace() / dk as f64).max(1e-300);
    *s = linalg::clamp_psd(s);
    for j in 0..dk {
        s[(j, j)] += shift;
    }
    true
}

/// Alternating maximization over coefficient blocks and covariance factors.
pub fn fit_mle(series: &TensorSeries, spec: &ModelSpec, opts: &FitOptions) -> Result<FitReport> {
    opts.validate()?;
    check_dims(series, spec)?;
    let init = initial_model(series, spec, opts, NoiseKind::Separable)?;
    let problem = Problem::new(series, spec.order());
    let mut state = State::new(&problem, init.coeffs().to_vec());
    let dims = spec.dims();
    let mut notes = Vec::new();

    let mut factors = match (&opts.init, init.noise()) {
        (Init::Projection, NoiseSpec::Separable(f)) => f.clone(),
        (Init::Provided(_), noise) => hier_svd_sep_cov(&noise.covariance(dims), dims)?,
        _ => hier_svd_sep_cov(&state.residual_cov(&problem), dims)?,
    };
    for (k, s) in factors.iter_mut().enumerate() {
        if ensure_pd(s) {
            notes.push(format!("initial covariance factor {} ridged to stay positive definite", k + 1));
        }
    }
    factors = normalize_factors(&factors);

    let order = sweep_order(spec);
    let scale = problem.n as f64 * problem.entries() as f64;
    let last = spec.modes() - 1;
    let mut trace = vec![loglik_parts(&state.resid, dims, problem.n, &factors, last)?];
    let mut converged = false;
    for sweep in 1..=opts.max_sweeps {
        let inv = inverses(&factors)?;
        for &block in &order {
            state.block_update(&problem, block, Some(&inv), opts.ridge)?;
        }
        state.rebalance();
        for k in 0..spec.modes() {
            let inv = inverses(&factors)?;
            let weighted = apply_modes(&state.resid, &inv, Some(k));
            let divisor = (problem.n * problem.entries() / dims[k]) as f64;
            let mut s = linalg::symmetrize(&(mode_cross(&state.resid, &weighted, k)? / divisor));
            if ensure_pd(&mut s) {
                notes.push(format!(
                    "sweep {sweep}: covariance factor {} ridged to stay positive definite",
                    k + 1
                ));
            }
            factors[k] = s;
        }
        factors = normalize_factors(&factors);
        let prev = *trace.last().expect("non-empty");
        let ll = loglik_parts(&state.resid, dims, problem.n, &factors, last)?;
        trace.push(ll);
        check_monotone(sweep, prev, ll, scale, true)?;
        if (ll - prev).abs() <= opts.rel_tol * prev.abs() {
            converged = true;
            break;
        }
    }
    let residual_cov = state.residual_cov(&problem);
    let sse = state.sse();
    let model = TenArModel::new(spec.clone(), state.coeffs, NoiseSpec::Separable(factors))?
        .normalize()?;
    Ok(FitReport {
        model,
        sweeps_used: trace.len() - 1,
        objective_trace: trace,
        converged,
        residual_cov,
        sse,
        notes,
    })
}
