//! Alternating least squares and the block machinery shared with the
//! likelihood fit.
//!
//! All equations `t = p..T-1` are handled at once by stacking observations
//! into tensors with time as an extra last mode; mode products over the
//! first K modes then act on every time point together.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TenArError};
use crate::estimate::options::{FitOptions, FitReport, Init};
use crate::estimate::projection::{check_dims, proj_estimator, NoiseKind};
use crate::linalg;
use crate::model::{ModelSpec, NoiseSpec, TenArModel};
use crate::series::TensorSeries;
use crate::simulate::rng_for;
use crate::tensor::{mode_cross, DenseMatrix, DenseTensor};

/// Relative objective slack per sweep before a move counts as divergence.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// The regression data of a TenAR(p) fit.
pub(crate) struct Problem {
    pub dims: Vec<usize>,
    pub n: usize,
    pub target: DenseTensor,
    /// `lags[i]` stacks the observations at lag `i + 1` of each target.
    pub lags: Vec<DenseTensor>,
    pub total_ss: f64,
}

impl Problem {
    pub fn new(series: &TensorSeries, p: usize) -> Self {
        let t = series.len();
        let target = series.stack(p, t);
        let lags = (0..p).map(|i| series.stack(p - i - 1, t - i - 1)).collect();
        Self {
            dims: series.dims().to_vec(),
            n: t - p,
            total_ss: target.norm_squared(),
            target,
            lags,
        }
    }

    pub fn entries(&self) -> usize {
        self.dims.iter().product()
    }
}

/// `x ×_l mats[l]` over the first `mats.len()` modes, skipping `skip`.
pub(crate) fn apply_modes(x: &DenseTensor, mats: &[DenseMatrix], skip: Option<usize>) -> DenseTensor {
    let mut out: Option<DenseTensor> = None;
    for (l, a) in mats.iter().enumerate() {
        if Some(l) == skip {
            continue;
        }
        let src = out.as_ref().unwrap_or(x);
        out = Some(src.mode_product(a, l).expect("shapes agree"));
    }
    out.unwrap_or_else(|| x.clone())
}

/// Coefficients, per-term fitted contributions and residuals.
pub(crate) struct State {
    pub coeffs: Vec<Vec<Vec<DenseMatrix>>>,
    pub fitted: Vec<Vec<DenseTensor>>,
    pub resid: DenseTensor,
}

impl State {
    pub fn new(problem: &Problem, coeffs: Vec<Vec<Vec<DenseMatrix>>>) -> Self {
        let mut resid = problem.target.clone();
        let fitted: Vec<Vec<DenseTensor>> = coeffs
            .iter()
            .enumerate()
            .map(|(i, lag)| {
                lag.iter()
                    .map(|term| {
                        let f = apply_modes(&problem.lags[i], term, None);
                        resid.axpy(-1.0, &f);
                        f
                    })
                    .collect()
            })
            .collect();
        Self {
            coeffs,
            fitted,
            resid,
        }
    }

    pub fn sse(&self) -> f64 {
        self.resid.norm_squared()
    }

    /// Closed-form update of `A_k^(ir)` with the others fixed. With `inv`
    /// (inverse covariance factors) the update is the weighted one.
    pub fn block_update(
        &mut self,
        problem: &Problem,
        (i, r, k): (usize, usize, usize),
        inv: Option<&[DenseMatrix]>,
        ridge: f64,
    ) -> Result<()> {
        let w = apply_modes(&problem.lags[i], &self.coeffs[i][r], Some(k));
        let mut y = std::mem::replace(&mut self.resid, DenseTensor::zeros(&[1]));
        y.axpy(1.0, &self.fitted[i][r]);
        let wt = match inv {
            Some(inv) => apply_modes(&w, inv, Some(k)),
            None => w.clone(),
        };
        let mut gram = linalg::symmetrize(&mode_cross(&w, &wt, k)?);
        let cross = mode_cross(&y, &wt, k)?;
        let dk = problem.dims[k];
        let shift = ridge * gram.trace() / dk as f64;
        for j in 0..dk {
            gram[(j, j)] += shift;
        }
        let a = linalg::solve_right_spd(
            &gram,
            &cross,
            &format!("Gram matrix of block (lag {}, term {}, mode {})", i + 1, r + 1, k + 1),
        );
        let a = match a {
            Ok(a) => a,
            Err(e) => {
                y.axpy(-1.0, &self.fitted[i][r]);
                self.resid = y;
                return Err(e);
            }
        };
        let f = w.mode_product(&a, k)?;
        y.axpy(-1.0, &f);
        self.resid = y;
        self.fitted[i][r] = f;
        self.coeffs[i][r][k] = a;
        Ok(())
    }

    /// Moves the scale of every term onto its last factor; fitted values
    /// are unchanged.
    pub fn rebalance(&mut self) {
        for lag in &mut self.coeffs {
            for term in lag {
                let last = term.len() - 1;
                let mut scale = 1.0;
                for a in term.iter_mut().take(last) {
                    let n = a.norm();
                    if n > 0.0 {
                        *a /= n;
                        scale *= n;
                    }
                }
                term[last] *= scale;
            }
        }
    }

    /// `vec` residual covariance with divisor `n`.
    pub fn residual_cov(&self, problem: &Problem) -> DenseMatrix {
        let d = problem.entries();
        let r = nalgebra::DMatrixView::from_slice(self.resid.data(), d, problem.n);
        linalg::symmetrize(&(r * r.transpose() / problem.n as f64))
    }
}

pub(crate) fn sweep_order(spec: &ModelSpec) -> Vec<(usize, usize, usize)> {
    spec.terms()
        .flat_map(|(i, r)| (0..spec.modes()).map(move |k| (i, r, k)))
        .collect()
}

/// Coefficients and (for `Init::Provided`) noise of the starting model.
pub(crate) fn initial_model(
    series: &TensorSeries,
    spec: &ModelSpec,
    opts: &FitOptions,
    noise: NoiseKind,
) -> Result<TenArModel> {
    match &opts.init {
        Init::Projection => proj_estimator(series, spec, noise, opts.ridge, opts.cp_restarts, opts.seed),
        Init::Provided(m) => {
            if m.spec() != spec {
                return Err(TenArError::InvalidArgument(format!(
                    "initial model has dims {:?} and K-ranks {:?}, the fit asks for {:?} and {:?}",
                    m.spec().dims(),
                    m.spec().kranks(),
                    spec.dims(),
                    spec.kranks()
                )));
            }
            Ok(m.clone())
        }
        Init::Scalar(c) => {
            let mut rng = rng_for(opts.seed, 7);
            let last = spec.modes() - 1;
            let coeffs = spec
                .kranks()
                .iter()
                .map(|&rank| {
                    (0..rank)
                        .map(|r| {
                            spec.dims()
                                .iter()
                                .enumerate()
                                .map(|(k, &d)| {
                                    let mut a = DenseMatrix::identity(d, d);
                                    if r > 0 {
                                        a += DenseMatrix::from_fn(d, d, |_, _| {
                                            let z: f64 = StandardNormal.sample(&mut rng);
                                            0.1 * z
                                        });
                                    }
                                    if k == last {
                                        a *= *c / (r + 1) as f64;
                                    }
                                    a
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            TenArModel::new(spec.clone(), coeffs, NoiseSpec::Identity)
        }
    }
}

pub(crate) fn check_monotone(sweep: usize, previous: f64, current: f64, scale: f64, increasing: bool) -> Result<()> {
    let slack = MONOTONE_SLACK * previous.abs() + 1e-15 * scale;
    let wrong = if increasing {
        current < previous - slack
    } else {
        current > previous + slack
    };
    if wrong || !current.is_finite() {
        return Err(TenArError::Divergence {
            sweep,
            previous,
            current,
        });
    }
    Ok(())
}

/// Least squares fit by cyclic block updates over (lag, term, mode).
pub fn fit_lse(series: &TensorSeries, spec: &ModelSpec, opts: &FitOptions) -> Result<FitReport> {
    opts.validate()?;
    check_dims(series, spec)?;
    let init = initial_model(series, spec, opts, NoiseKind::Dense)?;
    let problem = Problem::new(series, spec.order());
    let mut state = State::new(&problem, init.coeffs().to_vec());
    let order = sweep_order(spec);
    let mut trace = vec![state.sse()];
    let mut converged = false;
    for sweep in 1..=opts.max_sweeps {
        for &block in &order {
            state.block_update(&problem, block, None, opts.ridge)?;
        }
        state.rebalance();
        let prev = *trace.last().expect("non-empty");
        let sse = state.sse();
        trace.push(sse);
        check_monotone(sweep, prev, sse, problem.total_ss, false)?;
        if (prev - sse).abs() <= opts.rel_tol * prev.abs() || sse <= 1e-26 * problem.total_ss {
            converged = true;
            break;
        }
    }
    let residual_cov = state.residual_cov(&problem);
    let sse = state.sse();
    let model = TenArModel::new(
        spec.clone(),
        state.coeffs,
        NoiseSpec::Dense(linalg::clamp_psd(&residual_cov)),
    )?
    .normalize()?;
    Ok(FitReport {
        model,
        sweeps_used: trace.len() - 1,
        objective_trace: trace,
        converged,
        residual_cov,
        sse,
        notes: Vec::new(),
    })
}

/// Residual tensor of a model on a series, stacked over `t = p..T-1`.
pub fn residuals(series: &TensorSeries, model: &TenArModel) -> Result<DenseTensor> {
    check_dims(series, model.spec())?;
    let problem = Problem::new(series, model.spec().order());
    Ok(State::new(&problem, model.coeffs().to_vec()).resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::var::var_ols;
    use crate::simulate::{noise_cov, random_model, simulate_series, NoiseSetting};

    #[test]
    fn scalar_case_equals_ols() {
        let spec = ModelSpec::new(vec![1], vec![1]).unwrap();
        let m = random_model(&spec, 0.6, 3).unwrap();
        let s = simulate_series(&m, 300, 100, 4).unwrap();
        let opts = FitOptions {
            ridge: 0.0,
            init: Init::Scalar(0.1),
            ..FitOptions::default()
        };
        let fit = fit_lse(&s, &spec, &opts).unwrap();
        let ols = var_ols(&s, 1, 0.0).unwrap();
        assert!((fit.model.coeff(0, 0, 0)[(0, 0)] - ols.phis[0][(0, 0)]).abs() < 1e-12);
        assert_eq!(fit.sweeps_used, 2);
    }

    #[test]
    fn trace_is_monotone_and_beats_init() {
        let spec = ModelSpec::new(vec![2, 3, 2], vec![2, 1]).unwrap();
        let m = random_model(&spec, 0.8, 9)
            .unwrap()
            .with_noise(noise_cov(NoiseSetting::II, &[2, 3, 2], 9))
            .unwrap();
        let s = simulate_series(&m, 400, 200, 10).unwrap();
        let fit = fit_lse(&s, &spec, &FitOptions::default()).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + MONOTONE_SLACK));
        }
        let resid = residuals(&s, &fit.model).unwrap();
        assert!((resid.norm_squared() - fit.sse).abs() < 1e-9 * fit.sse);
    }

    #[test]
    fn scale_invariance() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let m = random_model(&spec, 0.7, 1).unwrap();
        let s = simulate_series(&m, 300, 100, 2).unwrap();
        let a = fit_lse(&s, &spec, &FitOptions::default()).unwrap();
        let b = fit_lse(&s.scaled(7.0), &spec, &FitOptions::default()).unwrap();
        for k in 0..2 {
            assert!((a.model.coeff(0, 0, k) - b.model.coeff(0, 0, k)).norm() < 1e-9);
        }
    }

    #[test]
    fn provided_init_must_match() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let other = ModelSpec::new(vec![2, 2], vec![2]).unwrap();
        let m = random_model(&other, 0.7, 1).unwrap();
        let s = simulate_series(&m, 100, 10, 2).unwrap();
        let opts = FitOptions {
            init: Init::Provided(m),
            ..FitOptions::default()
        };
        assert!(fit_lse(&s, &spec, &opts).is_err());
    }
}
