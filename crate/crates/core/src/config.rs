//! Flat key/value run configuration read from TOML.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Result, TenArError};
use crate::estimate::Estimator;
use crate::forecast::Baseline;
use crate::selection::{Penalty, SearchMode};
use crate::simulate::NoiseSetting;

/// Every key is optional; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dims: Option<Vec<usize>>,
    pub p: Option<usize>,
    pub kranks: Option<Vec<usize>>,
    pub rho: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub burn_in: Option<usize>,
    pub setting: Option<String>,
    pub estimator: Option<String>,
    pub max_sweeps: Option<usize>,
    pub rel_tol: Option<f64>,
    pub ridge: Option<f64>,
    pub cp_restarts: Option<usize>,
    pub level: Option<f64>,
    pub pmax: Option<usize>,
    pub rmax: Option<usize>,
    pub penalty: Option<String>,
    pub mode: Option<String>,
    pub t0: Option<usize>,
    pub refit_every: Option<usize>,
    pub baselines: Option<Vec<String>>,
    pub detrend_alpha: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TenArError::format(path, e.message()))?;
        cfg.validate().map_err(|e| TenArError::format(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let bytes = super::io::read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| TenArError::format(&name, e.to_string()))?;
        Self::from_toml(&text, &name)
    }

    /// Checks values that have a fixed vocabulary or range.
    pub fn validate(&self) -> Result<()> {
        if let (Some(p), Some(k)) = (self.p, &self.kranks) {
            if p != k.len() {
                return Err(TenArError::InvalidArgument(format!(
                    "p = {p} but kranks lists {} lags",
                    k.len()
                )));
            }
        }
        if let Some(s) = &self.setting {
            s.parse::<NoiseSetting>()?;
        }
        if let Some(s) = &self.estimator {
            s.parse::<Estimator>()?;
        }
        if let Some(s) = &self.penalty {
            s.parse::<Penalty>()?;
        }
        if let Some(s) = &self.mode {
            s.parse::<SearchMode>()?;
        }
        for b in self.baselines.iter().flatten() {
            b.parse::<Baseline>()?;
        }
        for (key, v) in [("detrend_alpha", self.detrend_alpha), ("level", self.level)] {
            if let Some(x) = v {
                if !(x > 0.0 && x < 1.0) {
                    return Err(TenArError::InvalidArgument(format!("{key} must lie in (0, 1), got {x}")));
                }
            }
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(TenArError::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
            }
        }
        Ok(())
    }
}
