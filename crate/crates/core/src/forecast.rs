//! One-step prediction and rolling out-of-sample evaluation against simple
//! baselines.

use crate::error::{Result, TenArError};
use crate::estimate::{fit, var_ols, Estimator, FitOptions, Init, VarFit};
use crate::linalg;
use crate::model::{ModelSpec, TenArModel};
use crate::series::TensorSeries;
use crate::tensor::{DenseMatrix, DenseTensor};

/// Smoothing factor used when detrending is requested without one.
pub const DEFAULT_DETREND_ALPHA: f64 = 2.0 / 64.0;

/// Ridge applied to a per-entry AR fit whose Gram matrix is singular.
const IAR_RIDGE: f64 = 1e-8;

/// Conditional mean of the next observation. `window` holds the last `p`
/// observations, oldest first.
pub fn predict_one(m: &TenArModel, window: &[DenseTensor]) -> Result<DenseTensor> {
    let recent: Vec<&DenseTensor> = window.iter().rev().collect();
    m.conditional_mean(&recent)
}

/// Exponential smoothing `S_1 = X_1`, `S_t = α X_t + (1 - α) S_{t-1}`,
/// returning the trend `S` and the remainder `Y = X - S`.
///
/// Each reported `S` entry is snapped to the ulp grid of the matching `X`
/// entry (a change of at most half an ulp of `X`) so that `S + Y`
/// reproduces `X` exactly. No pair can do that when `Y` needs more
/// precision than an `f64` holds (`S` of opposite sign, or `|S|` well above
/// `|X|`); such entries keep the plain difference. The recursion itself
/// runs on the unsnapped trend.
pub fn detrend_exp_smooth(series: &TensorSeries, alpha: f64) -> Result<(TensorSeries, TensorSeries)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TenArError::InvalidArgument(format!(
            "smoothing factor must lie in (0, 1), got {alpha}"
        )));
    }
    let dims = series.dims().to_vec();
    let mut trend = Vec::with_capacity(series.len());
    let mut rest = Vec::with_capacity(series.len());
    let mut s = series.obs(0).data().to_vec();
    for (t, x) in series.iter().enumerate() {
        if t > 0 {
            for (sv, &xv) in s.iter_mut().zip(x.data()) {
                *sv = alpha * xv + (1.0 - alpha) * *sv;
            }
        }
        let (sr, y): (Vec<f64>, Vec<f64>) = x.data().iter().zip(&s).map(|(&xv, &sv)| exact_split(xv, sv)).unzip();
        trend.push(DenseTensor::new(dims.clone(), sr)?);
        rest.push(DenseTensor::new(dims.clone(), y)?);
    }
    Ok((TensorSeries::new(dims.clone(), trend)?, TensorSeries::new(dims, rest)?))
}

/// `(s', y)` with `s' ≈ s` and `s' + y == x` whenever such a pair exists.
fn exact_split(x: f64, s: f64) -> (f64, f64) {
    const LIMIT: f64 = 9007199254740992.0; // 2^53
    if x == 0.0 || !x.is_finite() || !s.is_finite() {
        return (s, x - s);
    }
    let g = x.abs().next_up() - x.abs();
    let (m, k) = (x / g, (s / g).round());
    if k.abs() <= LIMIT && (m - k).abs() <= LIMIT {
        (k * g, (m - k) * g)
    } else {
        (s, x - s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Baseline {
    /// Separate least-squares AR(p) per entry, no intercept.
    Iar,
    /// Unrestricted VAR(p) on `vec(X_t)`.
    Var,
    /// Expanding sample mean.
    Mean,
    /// Random walk, `X̂_{t+1} = X_t`.
    Rw,
    /// The exponential-smoothing trend `S_t`.
    Es,
}

impl std::str::FromStr for Baseline {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iar" => Ok(Self::Iar),
            "var" => Ok(Self::Var),
            "mean" => Ok(Self::Mean),
            "rw" => Ok(Self::Rw),
            "es" => Ok(Self::Es),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown baseline {s:?} (expected iar, var, mean, rw or es)"
            ))),
        }
    }
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [Baseline::Iar, Baseline::Var, Baseline::Mean, Baseline::Rw, Baseline::Es];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Iar => "iAR",
            Baseline::Var => "VAR",
            Baseline::Mean => "MEAN",
            Baseline::Rw => "RW",
            Baseline::Es => "ES",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    /// 1-based index of the first forecast target; origins run from
    /// `t0 - 1` to `T - 1`.
    pub t0: usize,
    /// Refit every this many origins; 0 fits once at the first origin.
    pub refit_every: usize,
    pub baselines: Vec<Baseline>,
    /// Detrend the model-based methods (TenAR, iAR, VAR) by exponential
    /// smoothing and forecast the remainder.
    pub detrend_alpha: Option<f64>,
    /// Lag order of iAR and VAR; defaults to the TenAR order, else 1.
    pub baseline_order: Option<usize>,
    pub estimator: Estimator,
    pub fit: FitOptions,
    /// Start each TenAR refit from the previous fit instead of `fit.init`.
    pub warm_start: bool,
}

impl EvalConfig {
    pub fn new(t0: usize) -> Self {
        Self {
            t0,
            refit_every: 1,
            baselines: Baseline::ALL.to_vec(),
            detrend_alpha: None,
            baseline_order: None,
            estimator: Estimator::Lse,
            fit: FitOptions::default(),
            warm_start: true,
        }
    }
}

/// Rolling results of one method.
#[derive(Clone, Debug)]
pub struct MethodReport {
    pub name: String,
    pub mse: f64,
    /// `||X̂_t - X_t||_F^2` per target.
    pub step_errors: Vec<f64>,
    /// `(1-based target, message)` for targets that fell back to MEAN.
    pub failures: Vec<(usize, String)>,
}

#[derive(Clone, Debug)]
pub struct ForecastReport {
    pub t0: usize,
    /// 1-based target indices `t0..=T`.
    pub targets: Vec<usize>,
    pub methods: Vec<MethodReport>,
    /// `sum ||X_t||_F^2 / (d * count)` over the targets.
    pub total: f64,
}

impl ForecastReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

#[derive(Clone, Debug)]
enum Method {
    TenAr(ModelSpec),
    Iar(usize),
    Var(usize),
    Mean,
    Rw,
    Es,
}

impl Method {
    fn name(&self, estimator: Estimator) -> String {
        match self {
            Method::TenAr(_) => format!("TenAR-{}", estimator.name()),
            Method::Iar(_) => Baseline::Iar.name().into(),
            Method::Var(_) => Baseline::Var.name().into(),
            Method::Mean => Baseline::Mean.name().into(),
            Method::Rw => Baseline::Rw.name().into(),
            Method::Es => Baseline::Es.name().into(),
        }
    }

    fn order(&self) -> usize {
        match self {
            Method::TenAr(spec) => spec.order(),
            Method::Iar(p) | Method::Var(p) => *p,
            _ => 0,
        }
    }

    fn uses_detrend(&self) -> bool {
        matches!(self, Method::TenAr(_) | Method::Iar(_) | Method::Var(_))
    }
}

enum Fitted {
    TenAr(TenArModel),
    Iar(Vec<Vec<f64>>),
    Var(VarFit),
}

/// Per-entry AR coefficients, `coef[j][a]` for lag `a + 1` of entry `j`.
fn fit_iar(train: &TensorSeries, p: usize) -> Result<Vec<Vec<f64>>> {
    let n = train.len().saturating_sub(p);
    if p == 0 || n <= p {
        return Err(TenArError::InvalidArgument(format!(
            "AR({p}) needs more than {} observations, got {}",
            2 * p,
            train.len()
        )));
    }
    (0..train.entries())
        .map(|j| {
            let x = |t: usize| train.obs(t).data()[j];
            let mut gram = DenseMatrix::zeros(p, p);
            let mut cross = DenseMatrix::zeros(1, p);
            for t in p..train.len() {
                for a in 0..p {
                    cross[(0, a)] += x(t) * x(t - 1 - a);
                    for b in 0..p {
                        gram[(a, b)] += x(t - 1 - a) * x(t - 1 - b);
                    }
                }
            }
            let coef = match linalg::solve_right_spd(&gram, &cross, "AR Gram matrix") {
                Ok(c) => c,
                Err(_) => {
                    let shift = (IAR_RIDGE * gram.trace() / p as f64).max(f64::MIN_POSITIVE);
                    for a in 0..p {
                        gram[(a, a)] += shift;
                    }
                    linalg::solve_right_spd(&gram, &cross, "ridged AR Gram matrix")?
                }
            };
            Ok(coef.iter().copied().collect())
        })
        .collect()
}

fn expanding_mean(series: &TensorSeries, end: usize) -> DenseTensor {
    let mut m = DenseTensor::zeros(series.dims());
    for x in &series.observations()[..end] {
        m.axpy(1.0, x);
    }
    m.scale(1.0 / end as f64);
    m
}

/// Rolling one-step evaluation. With `spec`, the TenAR model is evaluated
/// first, followed by the configured baselines.
pub fn rolling_eval(series: &TensorSeries, spec: Option<&ModelSpec>, cfg: &EvalConfig) -> Result<ForecastReport> {
    cfg.fit.validate()?;
    let big_t = series.len();
    let p_base = cfg.baseline_order.or(spec.map(ModelSpec::order)).unwrap_or(1);
    let es_alpha = cfg.detrend_alpha.unwrap_or(DEFAULT_DETREND_ALPHA);
    if let Some(alpha) = cfg.detrend_alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(TenArError::InvalidArgument(format!(
                "smoothing factor must lie in (0, 1), got {alpha}"
            )));
        }
    }
    if let Some(s) = spec {
        if s.dims() != series.dims() {
            return Err(TenArError::ShapeMismatch(format!(
                "model dims {:?}, series dims {:?}",
                s.dims(),
                series.dims()
            )));
        }
    }

    let mut methods: Vec<Method> = spec.into_iter().map(|s| Method::TenAr(s.clone())).collect();
    for (i, b) in cfg.baselines.iter().enumerate() {
        if cfg.baselines[..i].contains(b) {
            return Err(TenArError::InvalidArgument(format!("baseline {} listed twice", b.name())));
        }
        methods.push(match b {
            Baseline::Iar => Method::Iar(p_base),
            Baseline::Var => Method::Var(p_base),
            Baseline::Mean => Method::Mean,
            Baseline::Rw => Method::Rw,
            Baseline::Es => Method::Es,
        });
    }
    if methods.is_empty() {
        return Err(TenArError::InvalidArgument("nothing to evaluate".into()));
    }
    let p_max = methods.iter().map(Method::order).max().unwrap_or(0).max(1);
    if cfg.t0 <= p_max || cfg.t0 > big_t {
        return Err(TenArError::InvalidArgument(format!(
            "first target t0 = {} must satisfy {p_max} < t0 <= {big_t}",
            cfg.t0
        )));
    }

    let needs_trend = cfg.detrend_alpha.is_some() || methods.iter().any(|m| matches!(m, Method::Es));
    let (trend, remainder) = if needs_trend {
        let (s, y) = detrend_exp_smooth(series, es_alpha)?;
        (Some(s), Some(y))
    } else {
        (None, None)
    };
    // Series the model-based methods are fitted to.
    let modelled = match (&cfg.detrend_alpha, &remainder) {
        (Some(_), Some(y)) => y,
        _ => series,
    };

    let first = cfg.t0 - 1;
    let targets: Vec<usize> = (first..big_t).collect();
    let d = series.entries() as f64;
    let count = targets.len() as f64;
    let total = targets.iter().map(|&t| series.obs(t).norm_squared()).sum::<f64>() / (d * count);

    let mut reports = Vec::with_capacity(methods.len());
    for method in &methods {
        let mut fitted: Option<Fitted> = None;
        let mut step_errors = Vec::with_capacity(targets.len());
        let mut failures = Vec::new();
        for (j, &target) in targets.iter().enumerate() {
            let refit = fitted.is_none() || (cfg.refit_every > 0 && j % cfg.refit_every == 0);
            let outcome = predict_with(
                method,
                &mut fitted,
                refit,
                series,
                modelled,
                trend.as_ref(),
                target,
                cfg,
            );
            let pred = match outcome {
                Ok(x) => x,
                Err(e) => {
                    failures.push((target + 1, e.to_string()));
                    fitted = None;
                    expanding_mean(series, target)
                }
            };
            step_errors.push(pred.sub(series.obs(target)).norm_squared());
        }
        let mse = step_errors.iter().sum::<f64>() / (d * count);
        reports.push(MethodReport {
            name: method.name(cfg.estimator),
            mse,
            step_errors,
            failures,
        });
    }
    Ok(ForecastReport {
        t0: cfg.t0,
        targets: targets.iter().map(|t| t + 1).collect(),
        methods: reports,
        total,
    })
}

/// Prediction of the 0-based observation `target` from data before it.
#[allow(clippy::too_many_arguments)]
fn predict_with(
    method: &Method,
    fitted: &mut Option<Fitted>,
    refit: bool,
    series: &TensorSeries,
    modelled: &TensorSeries,
    trend: Option<&TensorSeries>,
    target: usize,
    cfg: &EvalConfig,
) -> Result<DenseTensor> {
    let model_pred = match method {
        Method::Mean => return Ok(expanding_mean(series, target)),
        Method::Rw => return Ok(series.obs(target - 1).clone()),
        Method::Es => {
            return Ok(trend.expect("trend computed for ES").obs(target - 1).clone());
        }
        Method::TenAr(spec) => {
            if refit {
                let train = modelled.slice(0, target)?;
                let mut opts = cfg.fit.clone();
                if let (true, Some(Fitted::TenAr(prev))) = (cfg.warm_start, fitted.as_ref()) {
                    if cfg.estimator != Estimator::Projection {
                        opts.init = Init::Provided(prev.clone());
                    }
                }
                *fitted = Some(Fitted::TenAr(fit(&train, spec, cfg.estimator, &opts)?.model));
            }
            let Some(Fitted::TenAr(m)) = fitted.as_ref() else {
                unreachable!("TenAR state holds a TenAR model")
            };
            let window = &modelled.observations()[target - spec.order()..target];
            predict_one(m, window)?
        }
        Method::Iar(p) => {
            if refit {
                *fitted = Some(Fitted::Iar(fit_iar(&modelled.slice(0, target)?, *p)?));
            }
            let Some(Fitted::Iar(coef)) = fitted.as_ref() else {
                unreachable!("iAR state holds AR coefficients")
            };
            let mut out = DenseTensor::zeros(series.dims());
            for (j, phi) in coef.iter().enumerate() {
                out.data_mut()[j] = phi
                    .iter()
                    .enumerate()
                    .map(|(a, c)| c * modelled.obs(target - 1 - a).data()[j])
                    .sum();
            }
            out
        }
        Method::Var(p) => {
            if refit {
                *fitted = Some(Fitted::Var(var_ols(&modelled.slice(0, target)?, *p, 0.0)?));
            }
            let Some(Fitted::Var(v)) = fitted.as_ref() else {
                unreachable!("VAR state holds a VAR fit")
            };
            let window: Vec<&[f64]> = (1..=*p).map(|a| modelled.obs(target - a).data()).collect();
            DenseTensor::new(series.dims().to_vec(), v.predict(&window))?
        }
    };
    match (cfg.detrend_alpha, trend) {
        (Some(_), Some(s)) if method.uses_detrend() => {
            let mut out = s.obs(target - 1).clone();
            out.axpy(1.0, &model_pred);
            Ok(out)
        }
        _ => Ok(model_pred),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;
    use crate::simulate::{random_model, simulate_series};

    fn scalar_series(xs: &[f64]) -> TensorSeries {
        let obs = xs.iter().map(|&x| DenseTensor::new(vec![1], vec![x]).unwrap()).collect();
        TensorSeries::new(vec![1], obs).unwrap()
    }

    #[test]
    fn identity_model_propagates() {
        let spec = ModelSpec::new(vec![2, 3], vec![1]).unwrap();
        let m = TenArModel::new(
            spec,
            vec![vec![vec![DenseMatrix::identity(2, 2), DenseMatrix::identity(3, 3)]]],
            NoiseSpec::Identity,
        )
        .unwrap();
        let x = DenseTensor::new(vec![2, 3], (0..6).map(|i| i as f64 - 2.5).collect()).unwrap();
        assert_eq!(predict_one(&m, std::slice::from_ref(&x)).unwrap(), x);
    }

    #[test]
    fn matches_vectorized_form() {
        let spec = ModelSpec::new(vec![2, 2], vec![2, 1]).unwrap();
        let m = random_model(&spec, 0.7, 9).unwrap();
        let s = simulate_series(&m, 10, 5, 10).unwrap();
        let window = &s.observations()[7..9];
        let pred = predict_one(&m, window).unwrap();
        let phis = m.var_coefficients();
        let oracle = &phis[0] * s.obs(8).vec() + &phis[1] * s.obs(7).vec();
        let diff = (pred.vec() - &oracle).norm();
        assert!(diff <= 1e-12 * oracle.norm().max(1.0));
    }

    #[test]
    fn detrend_by_hand() {
        let (s, y) = detrend_exp_smooth(&scalar_series(&[0.0, 1.0]), 0.5).unwrap();
        assert_eq!(s.obs(1).data(), &[0.5]);
        assert_eq!(y.obs(0).data(), &[0.0]);
        assert_eq!(y.obs(1).data(), &[0.5]);
        let (s, y) = detrend_exp_smooth(&scalar_series(&[3.25; 6]), DEFAULT_DETREND_ALPHA).unwrap();
        assert!(s.iter().all(|x| x.data()[0] == 3.25));
        assert!(y.iter().all(|x| x.data()[0] == 0.0));
        assert!(detrend_exp_smooth(&scalar_series(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn detrend_reconstructs_exactly() {
        let spec = ModelSpec::new(vec![3, 2], vec![1]).unwrap();
        let m = random_model(&spec, 0.9, 1).unwrap();
        let x = simulate_series(&m, 300, 50, 2).unwrap();
        let (s, y) = detrend_exp_smooth(&x, 0.3).unwrap();
        for t in 0..x.len() {
            for ((a, b), c) in s.obs(t).data().iter().zip(y.obs(t).data()).zip(x.obs(t).data()) {
                if a * c >= 0.0 && a.abs() <= 2.0 * c.abs() {
                    assert_eq!(a + b, *c);
                } else {
                    assert!((a + b - c).abs() <= f64::EPSILON * (a.abs() + b.abs()));
                }
            }
        }
    }

    #[test]
    fn random_walk_mse_by_definition() {
        let xs = [0.5, -1.0, 2.0, 0.25, 1.5, -0.75];
        let mut cfg = EvalConfig::new(3);
        cfg.baselines = vec![Baseline::Rw, Baseline::Mean];
        let rep = rolling_eval(&scalar_series(&xs), None, &cfg).unwrap();
        assert_eq!(rep.targets, vec![3, 4, 5, 6]);
        let expected: f64 = (2..6).map(|t| (xs[t] - xs[t - 1]).powi(2)).sum::<f64>() / 4.0;
        assert!((rep.method("RW").unwrap().mse - expected).abs() < 1e-15);
        let total: f64 = xs[2..].iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!((rep.total - total).abs() < 1e-15);
        let mean_err = (xs[2] - (xs[0] + xs[1]) / 2.0).powi(2);
        assert!((rep.method("MEAN").unwrap().step_errors[0] - mean_err).abs() < 1e-15);
    }

    #[test]
    fn iar_recovers_scalar_coefficient() {
        let spec = ModelSpec::new(vec![1], vec![1]).unwrap();
        let m = random_model(&spec, 0.6, 5).unwrap();
        let s = simulate_series(&m, 400, 50, 6).unwrap();
        let coef = fit_iar(&s, 1).unwrap();
        let ols = var_ols(&s, 1, 0.0).unwrap();
        assert!((coef[0][0] - ols.phis[0][(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn failures_fall_back_to_mean() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let m = random_model(&spec, 0.5, 3).unwrap();
        let s = simulate_series(&m, 12, 20, 4).unwrap();
        let mut cfg = EvalConfig::new(4);
        cfg.baselines = vec![Baseline::Var, Baseline::Mean];
        let rep = rolling_eval(&s, None, &cfg).unwrap();
        let var = rep.method("VAR").unwrap();
        // VAR(1) in dimension 4 needs at least 6 observations.
        assert_eq!(var.failures.iter().map(|f| f.0).collect::<Vec<_>>(), vec![4, 5, 6]);
        let mean = rep.method("MEAN").unwrap();
        assert_eq!(var.step_errors[..3], mean.step_errors[..3]);
    }

    #[test]
    fn total_is_method_independent_and_tenar_runs() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let m = random_model(&spec, 0.8, 7).unwrap();
        let s = simulate_series(&m, 120, 50, 8).unwrap();
        let mut cfg = EvalConfig::new(101);
        cfg.refit_every = 5;
        cfg.detrend_alpha = Some(0.1);
        let rep = rolling_eval(&s, Some(&spec), &cfg).unwrap();
        assert_eq!(rep.methods.len(), 6);
        assert!(rep.methods.iter().all(|m| m.mse >= 0.0 && m.failures.is_empty()));
        let plain = rolling_eval(&s, None, &EvalConfig::new(101)).unwrap();
        assert_eq!(plain.total, rep.total);
    }

    #[test]
    fn rejects_bad_origin() {
        let s = scalar_series(&[1.0, 2.0, 3.0]);
        assert!(rolling_eval(&s, None, &EvalConfig::new(1)).is_err());
        assert!(rolling_eval(&s, None, &EvalConfig::new(4)).is_err());
    }
}
