use std::path::{Path, PathBuf};

use tenar::config::RunConfig;
use tenar::estimate::{self, hier_svd_sep_cov, Estimator, FitOptions};
use tenar::forecast::{predict_one, rolling_eval, Baseline, EvalConfig};
use tenar::inference::{asymp_cov, conf_intervals, Method};
use tenar::io::{self, SeriesFormat};
use tenar::selection::{select_joint, select_separate, Penalty, SearchMode};
use tenar::simulate::{noise_cov, random_model, simulate_series, NoiseSetting, DEFAULT_BURN_IN};
use tenar::{ModelSpec, NoiseSpec, Result, TenArError, TensorSeries};

use crate::args::{
    Common, EvalArgs, FitArgs, FitOptArgs, ForecastArgs, InspectArgs, SelectArgs, SimulateArgs, SpecArgs,
};

fn invalid(msg: impl Into<String>) -> TenArError {
    TenArError::InvalidArgument(msg.into())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    common.config.as_deref().map_or(Ok(RunConfig::default()), RunConfig::read)
}

fn seed(common: &Common, cfg: &RunConfig) -> u64 {
    common.seed.or(cfg.seed).unwrap_or(0)
}

/// K-ranks from flags or config, checked against `--p` when given.
fn kranks(spec: &SpecArgs, cfg: &RunConfig) -> Result<Option<Vec<usize>>> {
    let kranks = spec.kranks.clone().or_else(|| cfg.kranks.clone());
    let p = spec.p.or(cfg.p);
    match (&kranks, p) {
        (Some(k), Some(p)) if k.len() != p => Err(invalid(format!(
            "--p {p} disagrees with --kranks, which lists {} lags",
            k.len()
        ))),
        (None, Some(_)) => Err(invalid("--p needs --kranks")),
        _ => Ok(kranks),
    }
}

fn series_spec(series: &TensorSeries, spec: &SpecArgs, cfg: &RunConfig) -> Result<Option<ModelSpec>> {
    if let Some(dims) = spec.dims.as_ref().or(cfg.dims.as_ref()) {
        if dims.as_slice() != series.dims() {
            return Err(invalid(format!(
                "--dims {dims:?} disagrees with the series dims {:?}",
                series.dims()
            )));
        }
    }
    kranks(spec, cfg)?
        .map(|k| ModelSpec::new(series.dims().to_vec(), k))
        .transpose()
}

fn estimator(a: &FitOptArgs, cfg: &RunConfig) -> Result<Estimator> {
    a.estimator
        .as_deref()
        .or(cfg.estimator.as_deref())
        .unwrap_or("lse")
        .parse()
}

fn fit_options(a: &FitOptArgs, cfg: &RunConfig, seed: u64) -> Result<FitOptions> {
    let d = FitOptions::default();
    let opts = FitOptions {
        max_sweeps: a.max_sweeps.or(cfg.max_sweeps).unwrap_or(d.max_sweeps),
        rel_tol: a.rel_tol.or(cfg.rel_tol).unwrap_or(d.rel_tol),
        ridge: a.ridge.or(cfg.ridge).unwrap_or(d.ridge),
        cp_restarts: a.cp_restarts.or(cfg.cp_restarts).unwrap_or(d.cp_restarts),
        seed,
        ..d
    };
    opts.validate()?;
    Ok(opts)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let seed = seed(&a.common, &cfg);
    let dims = a
        .spec
        .dims
        .clone()
        .or(cfg.dims.clone())
        .ok_or_else(|| invalid("--dims is required"))?;
    let kranks = kranks(&a.spec, &cfg)?.ok_or_else(|| invalid("--kranks is required"))?;
    let rho = a.rho.or(cfg.rho).ok_or_else(|| invalid("--rho is required"))?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("--rho must lie in (0, 1), got {rho}")));
    }
    let t = a.t.or(cfg.t).ok_or_else(|| invalid("--T is required"))?;
    let burn_in = a.burn_in.or(cfg.burn_in).unwrap_or(DEFAULT_BURN_IN);
    let setting: NoiseSetting = a.setting.as_deref().or(cfg.setting.as_deref()).unwrap_or("I").parse()?;

    let spec = ModelSpec::new(dims.clone(), kranks)?;
    let model = random_model(&spec, rho, seed)?.with_noise(noise_cov(setting, &dims, seed))?;
    let series = simulate_series(&model, t, burn_in, seed)?;
    io::write_series(&a.out, &series, SeriesFormat::from_path(&a.out))?;
    let model_out = a.model_out.unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".model.json");
        PathBuf::from(s)
    });
    io::write_model(&model_out, &model)
}

pub fn fit(a: FitArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let seed = seed(&a.common, &cfg);
    let est = estimator(&a.fit, &cfg)?;
    let noise = a.noise.as_deref().map(str::to_ascii_lowercase);
    match (est, noise.as_deref()) {
        (Estimator::Mle, Some("dense")) => {
            return Err(invalid(
                "MLE requires separable covariance; use --noise separable or another estimator",
            ))
        }
        (_, None | Some("dense") | Some("separable")) => {}
        (_, Some(other)) => return Err(invalid(format!("unknown noise {other:?} (expected dense or separable)"))),
    }
    let opts = fit_options(&a.fit, &cfg, seed)?;
    let series = io::read_series(&a.input)?;
    let spec = series_spec(&series, &a.spec, &cfg)?.ok_or_else(|| invalid("--kranks is required"))?;
    let mut report = estimate::fit(&series, &spec, est, &opts)?;
    if noise.as_deref() == Some("separable") && est != Estimator::Mle {
        let factors = hier_svd_sep_cov(&report.residual_cov, spec.dims())?;
        report.model = report.model.with_noise(NoiseSpec::Separable(factors))?;
    }
    io::write_model(&a.out, &report.model)?;

    let text = if a.inference {
        let level = a.level.or(cfg.level).unwrap_or(0.95);
        let method = if est == Estimator::Mle { Method::Mle } else { Method::Lse };
        let inf = asymp_cov(&series, &report.model, method)?;
        let cis = conf_intervals(&report.model, &inf, level)?;
        io::fit_report_json(est, &report, Some((&inf, &cis, level)))
    } else {
        io::fit_report_json(est, &report, None)
    };
    emit(a.report.as_deref(), &text)
}

pub fn select(a: SelectArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let seed = seed(&a.common, &cfg);
    let opts = fit_options(&a.fit, &cfg, seed)?;
    let series = io::read_series(&a.input)?;
    let pmax = a.pmax.or(cfg.pmax).ok_or_else(|| invalid("--pmax is required"))?;
    let rmax = a.rmax.or(cfg.rmax).ok_or_else(|| invalid("--rmax is required"))?;
    let penalty: Penalty = a.penalty.as_deref().or(cfg.penalty.as_deref()).unwrap_or("ic1").parse()?;
    let mode: SearchMode = a.mode.as_deref().or(cfg.mode.as_deref()).unwrap_or("separate").parse()?;
    let rep = match mode {
        SearchMode::Joint => select_joint(&series, pmax, rmax, penalty, &opts)?,
        SearchMode::Separate => select_separate(&series, pmax, rmax, penalty, &opts)?,
    };
    emit(a.out.as_deref(), &io::selection_report_json(&rep))
}

pub fn forecast(a: ForecastArgs) -> Result<()> {
    let model = io::read_model(&a.model)?;
    let series = io::read_series(&a.input)?;
    let p = model.spec().order();
    if series.len() < p {
        return Err(invalid(format!(
            "an order-{p} model needs {p} observations, the series has {}",
            series.len()
        )));
    }
    let pred = predict_one(&model, &series.observations()[series.len() - p..])?;
    let out = TensorSeries::new(series.dims().to_vec(), vec![pred])?;
    match a.out {
        Some(path) => io::write_series(&path, &out, SeriesFormat::from_path(&path)),
        None => emit(None, &io::series_to_csv(&out)),
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let seed = seed(&a.common, &cfg);
    let series = io::read_series(&a.input)?;
    let spec = series_spec(&series, &a.spec, &cfg)?;
    let t0 = a.t0.or(cfg.t0).ok_or_else(|| invalid("--t0 is required"))?;
    let mut ec = EvalConfig::new(t0);
    ec.estimator = estimator(&a.fit, &cfg)?;
    ec.fit = fit_options(&a.fit, &cfg, seed)?;
    ec.refit_every = a.refit_every.or(cfg.refit_every).unwrap_or(ec.refit_every);
    ec.detrend_alpha = a.detrend.or(cfg.detrend_alpha);
    ec.baseline_order = a.order;
    if let Some(list) = a.baselines.as_ref().or(cfg.baselines.as_ref()) {
        ec.baselines = list.iter().map(|b| b.parse::<Baseline>()).collect::<Result<_>>()?;
    }
    let rep = rolling_eval(&series, spec.as_ref(), &ec)?;
    if let Some(steps) = &a.steps {
        io::write_text(steps, &io::forecast_steps_csv(&rep))?;
    }
    emit(a.out.as_deref(), &io::forecast_summary_csv(&rep))
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let m = io::read_model(&a.model)?;
    let spec = m.spec();
    let causality = m.causality()?;
    let mut out = String::new();
    out.push_str(&format!("dims: {:?}\n", spec.dims()));
    out.push_str(&format!("order: {}\n", spec.order()));
    out.push_str(&format!("kranks: {:?}\n", spec.kranks()));
    out.push_str(&format!("noise: {}\n", m.noise().kind()));
    out.push_str(&format!(
        "companion spectral radius: {:.6} ({})\n",
        causality.radius,
        if causality.causal { "causal" } else { "not causal" }
    ));
    for (i, r) in spec.terms() {
        let norms: Vec<String> = m.term(i, r).iter().map(|a| format!("{:.6}", a.norm())).collect();
        out.push_str(&format!("lag {} term {}: ||A_k||_F = [{}]\n", i + 1, r + 1, norms.join(", ")));
    }
    if spec.modes() >= 2 {
        for lag in m.identifiability()? {
            out.push_str(&format!(
                "lag {} identifiability: {} (mode ranks {:?}{})\n",
                lag.lag + 1,
                if lag.sufficient { "sufficient condition holds" } else { "not established" },
                lag.ranks,
                lag.reason.map(|r| format!("; {r}")).unwrap_or_default()
            ));
        }
    } else {
        out.push_str("identifiability: not applicable for a single mode\n");
    }
    emit(None, &out)
}
