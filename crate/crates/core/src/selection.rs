//! Order and K-rank selection by an extended information criterion
//! `IC = ½ log(SSE / (d T)) + g(d, T) sum_i R_i`.
//!
//! Within one selection run every cell is fitted on the same equations,
//! `t >= p_max`, so `T` is the common effective sample `T - p_max`.

use std::collections::HashMap;

use crate::error::{Result, TenArError};
use crate::estimate::{fit_lse, FitOptions};
use crate::model::ModelSpec;
use crate::series::TensorSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    /// `g = log T / T`.
    Ic1,
    /// `g = (d_1^2 + ... + d_K^2 - K + 1) log T / (d T)`.
    Ic2,
}

impl std::str::FromStr for Penalty {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ic1" => Ok(Self::Ic1),
            "ic2" => Ok(Self::Ic2),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown penalty {s:?} (expected ic1 or ic2)"
            ))),
        }
    }
}

impl Penalty {
    pub fn name(self) -> &'static str {
        match self {
            Penalty::Ic1 => "ic1",
            Penalty::Ic2 => "ic2",
        }
    }

    /// `g(d, T)` for `t` equations.
    pub fn value(self, dims: &[usize], t: f64) -> f64 {
        match self {
            Penalty::Ic1 => t.ln() / t,
            Penalty::Ic2 => {
                let d: usize = dims.iter().product();
                let k = dims.len();
                let sq: usize = dims.iter().map(|x| x * x).sum();
                (sq + 1 - k) as f64 * t.ln() / (d as f64 * t)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    Joint,
    Separate,
}

impl std::str::FromStr for SearchMode {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "joint" => Ok(Self::Joint),
            "separate" => Ok(Self::Separate),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown selection mode {s:?} (expected joint or separate)"
            ))),
        }
    }
}

/// One evaluated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionCell {
    /// K-ranks per lag, length `p_max`; zeros allowed anywhere.
    pub kranks: Vec<usize>,
    /// `NaN` when the fit failed.
    pub ic: f64,
    pub sse: f64,
    pub sweeps: usize,
    /// The fit met its tolerance before the sweep cap.
    pub converged: bool,
    /// Error message of a failed fit; failed cells never win.
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SelectionReport {
    pub mode: SearchMode,
    pub penalty: Penalty,
    pub grid: Vec<SelectionCell>,
    /// Selected K-ranks with trailing zeros removed; empty for white noise.
    pub chosen: Vec<usize>,
    /// Effective equations per cell, `T - p_max`.
    pub t_eff: usize,
}

impl SelectionReport {
    /// Selected order, the number of lags in [`chosen`](Self::chosen).
    pub fn order(&self) -> usize {
        self.chosen.len()
    }
}

/// Information criterion of one configuration, fitted on equations
/// `t >= kranks.len()`.
pub fn ic_value(series: &TensorSeries, kranks: &[usize], penalty: Penalty, opts: &FitOptions) -> Result<f64> {
    try_evaluate(series, kranks, kranks.len(), penalty, opts).map(|c| c.ic)
}

fn evaluate(series: &TensorSeries, kranks: &[usize], p_common: usize, penalty: Penalty, opts: &FitOptions) -> SelectionCell {
    try_evaluate(series, kranks, p_common, penalty, opts).unwrap_or_else(|e| SelectionCell {
        kranks: kranks.to_vec(),
        ic: f64::NAN,
        sse: f64::NAN,
        sweeps: 0,
        converged: false,
        failure: Some(e.to_string()),
    })
}

fn try_evaluate(
    series: &TensorSeries,
    kranks: &[usize],
    p_common: usize,
    penalty: Penalty,
    opts: &FitOptions,
) -> Result<SelectionCell> {
    let dims = series.dims();
    if series.len() <= p_common {
        return Err(TenArError::InvalidArgument(format!(
            "series of length {} is too short for {p_common} lags",
            series.len()
        )));
    }
    let t_eff = series.len() - p_common;
    let d = series.entries() as f64;
    let terms: usize = kranks.iter().sum();
    let g = penalty.value(dims, t_eff as f64);
    let ic_of = |sse: f64| 0.5 * (sse / (d * t_eff as f64)).ln() + g * terms as f64;
    let Some(spec) = ModelSpec::trimmed(dims.to_vec(), kranks)? else {
        let sse = series.sum_squares_from(p_common);
        return Ok(SelectionCell {
            kranks: kranks.to_vec(),
            ic: ic_of(sse),
            sse,
            sweeps: 0,
            converged: true,
            failure: None,
        });
    };
    let sub = series.slice(p_common - spec.order(), series.len())?;
    let fit = fit_lse(&sub, &spec, opts)?;
    Ok(SelectionCell {
        kranks: kranks.to_vec(),
        ic: ic_of(fit.sse),
        sse: fit.sse,
        sweeps: fit.sweeps_used,
        converged: fit.converged,
        failure: None,
    })
}

fn check_caps(series: &TensorSeries, p_max: usize, r_max: usize) -> Result<()> {
    if p_max == 0 || r_max == 0 {
        return Err(TenArError::InvalidArgument(
            "p_max and r_max must be at least 1".into(),
        ));
    }
    if series.len() <= p_max + 1 {
        return Err(TenArError::InvalidArgument(format!(
            "series of length {} is too short for p_max = {p_max}",
            series.len()
        )));
    }
    Ok(())
}

fn argmin<'a>(cells: impl Iterator<Item = &'a SelectionCell>) -> Option<&'a SelectionCell> {
    cells
        .filter(|c| c.failure.is_none() && c.ic.is_finite())
        .min_by(|a, b| a.ic.total_cmp(&b.ic))
}

fn trim(kranks: &[usize]) -> Vec<usize> {
    let end = kranks.iter().rposition(|&r| r > 0).map_or(0, |i| i + 1);
    kranks[..end].to_vec()
}

/// Evaluates every `(R_1, ..., R_{p_max})` with `R_i <= r_max`.
pub fn select_joint(
    series: &TensorSeries,
    p_max: usize,
    r_max: usize,
    penalty: Penalty,
    opts: &FitOptions,
) -> Result<SelectionReport> {
    check_caps(series, p_max, r_max)?;
    let mut grid = Vec::new();
    let mut kranks = vec![0usize; p_max];
    loop {
        grid.push(evaluate(series, &kranks, p_max, penalty, opts));
        let mut i = 0;
        while i < p_max {
            kranks[i] += 1;
            if kranks[i] <= r_max {
                break;
            }
            kranks[i] = 0;
            i += 1;
        }
        if i == p_max {
            break;
        }
    }
    let best = argmin(grid.iter()).ok_or_else(|| {
        TenArError::InvalidArgument("every configuration failed to fit".into())
    })?;
    Ok(SelectionReport {
        mode: SearchMode::Joint,
        penalty,
        chosen: trim(&best.kranks),
        grid,
        t_eff: series.len() - p_max,
    })
}

/// For each lag, varies its K-rank over `0..=r_max` with every other lag
/// pinned at `r_max`. Identical configurations are fitted once.
pub fn select_separate(
    series: &TensorSeries,
    p_max: usize,
    r_max: usize,
    penalty: Penalty,
    opts: &FitOptions,
) -> Result<SelectionReport> {
    check_caps(series, p_max, r_max)?;
    let mut cache: HashMap<Vec<usize>, SelectionCell> = HashMap::new();
    let mut grid = Vec::with_capacity(p_max * (r_max + 1));
    let mut chosen = vec![0; p_max];
    for (i, pick) in chosen.iter_mut().enumerate() {
        let start = grid.len();
        for r in 0..=r_max {
            let mut kranks = vec![r_max; p_max];
            kranks[i] = r;
            let cell = cache
                .entry(kranks.clone())
                .or_insert_with(|| evaluate(series, &kranks, p_max, penalty, opts))
                .clone();
            grid.push(cell);
        }
        let best = argmin(grid[start..].iter()).ok_or_else(|| {
            TenArError::InvalidArgument(format!("every configuration for lag {} failed", i + 1))
        })?;
        *pick = best.kranks[i];
    }
    Ok(SelectionReport {
        mode: SearchMode::Separate,
        penalty,
        chosen: trim(&chosen),
        grid,
        t_eff: series.len() - p_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{random_model, simulate_series};

    #[test]
    fn penalty_values() {
        let e = std::f64::consts::E;
        assert!((Penalty::Ic1.value(&[3, 3, 3], e) - 1.0 / e).abs() < 1e-15);
        assert!((Penalty::Ic1.value(&[7], e) - 1.0 / e).abs() < 1e-15);
        let g2 = Penalty::Ic2.value(&[3, 3, 3], 100.0);
        assert!((g2 - 25.0 * 100f64.ln() / 2700.0).abs() < 1e-15);
    }

    #[test]
    fn penalties_satisfy_rate_conditions() {
        for pen in [Penalty::Ic1, Penalty::Ic2] {
            let dims = [3, 3, 3];
            let mut prev = (f64::INFINITY, 0.0);
            for t in [100.0, 1e3, 1e4, 1e5, 1e6] {
                let g = pen.value(&dims, t);
                let scaled = t / 27.0 * g;
                assert!(g < prev.0 && scaled > prev.1);
                prev = (g, scaled);
            }
        }
    }

    #[test]
    fn small_joint_grid() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let m = random_model(&spec, 0.8, 2).unwrap();
        let s = simulate_series(&m, 300, 100, 3).unwrap();
        let rep = select_joint(&s, 1, 1, Penalty::Ic1, &FitOptions::default()).unwrap();
        assert_eq!(rep.grid.len(), 2);
        assert_eq!(rep.chosen, vec![1]);
        assert_eq!(rep.order(), 1);
    }

    #[test]
    fn white_noise_selects_nothing() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let zero = crate::model::TenArModel::new(
            spec,
            vec![vec![vec![crate::DenseMatrix::zeros(2, 2); 2]]],
            crate::NoiseSpec::Identity,
        )
        .unwrap();
        let s = simulate_series(&zero, 400, 0, 4).unwrap();
        let rep = select_joint(&s, 2, 1, Penalty::Ic1, &FitOptions::default()).unwrap();
        assert!(rep.chosen.is_empty());
    }

    #[test]
    fn separate_grid_shape() {
        let spec = ModelSpec::new(vec![2, 2], vec![1]).unwrap();
        let m = random_model(&spec, 0.8, 5).unwrap();
        let s = simulate_series(&m, 300, 100, 6).unwrap();
        let rep = select_separate(&s, 2, 2, Penalty::Ic2, &FitOptions::default()).unwrap();
        assert_eq!(rep.grid.len(), 6);
        assert_eq!(rep.grid[2], rep.grid[5]);
        assert_eq!(rep.chosen, vec![1]);
    }

    #[test]
    fn rejects_zero_caps() {
        let spec = ModelSpec::new(vec![2], vec![1]).unwrap();
        let m = random_model(&spec, 0.5, 1).unwrap();
        let s = simulate_series(&m, 50, 10, 1).unwrap();
        assert!(select_joint(&s, 0, 1, Penalty::Ic1, &FitOptions::default()).is_err());
    }
}
