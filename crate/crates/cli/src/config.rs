//! Per-command run configurations. Each is read from an optional JSON file (unknown
//! keys rejected), then overridden by command-line flags, then validated.

use std::path::Path;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use spatcens::predict::{Method, PlugInOptions, SeminaiveConfig};
use spatcens::simulate::SimConfig;
use spatcens::{CovFamily, CovParams, CovarianceSpec, Execution, SaemConfig, SearchBox, Trend};

use crate::error::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

/// Trend and covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub trend: Trend,
    pub cov_model: CovFamily,
    pub kappa: f64,
    pub fix_nugget: bool,
    pub nugget: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            trend: Trend::Cte,
            cov_model: CovFamily::Exponential,
            kappa: 0.5,
            fix_nugget: false,
            nugget: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> CovarianceSpec {
        let s = CovarianceSpec::new(self.cov_model, self.kappa);
        if self.fix_nugget {
            s.with_fixed_nugget(self.nugget)
        } else {
            s
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        Ok(self.spec().validate()?)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Mean structure: cte, first or other (intercept plus CSV covariates).
    #[arg(long)]
    pub trend: Option<Trend>,
    /// Covariance family: exponential, gaussian, spherical, matern, powered-exponential.
    #[arg(long)]
    pub cov_model: Option<CovFamily>,
    /// Matérn smoothness or powered-exponential power.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Hold the nugget at `--nugget` instead of estimating it.
    #[arg(long)]
    pub fix_nugget: bool,
    /// Nugget value used with `--fix-nugget`.
    #[arg(long)]
    pub nugget: Option<f64>,
}

impl ModelArgs {
    pub fn apply(&self, m: &mut ModelConfig) {
        if let Some(t) = self.trend {
            m.trend = t;
        }
        if let Some(f) = self.cov_model {
            m.cov_model = f;
        }
        if let Some(k) = self.kappa {
            m.kappa = k;
        }
        if self.fix_nugget {
            m.fix_nugget = true;
        }
        if let Some(v) = self.nugget {
            m.nugget = v;
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SaemArgs {
    /// Monte-Carlo sample size per iteration.
    #[arg(long)]
    pub m: Option<usize>,
    /// Maximum number of SAEM iterations.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Share of iterations run without memory.
    #[arg(long)]
    pub pc: Option<f64>,
    /// Relative tolerance of the stopping rule.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Starting value of the partial sill.
    #[arg(long)]
    pub init_sigma2: Option<f64>,
    /// Starting value of the range.
    #[arg(long)]
    pub init_phi: Option<f64>,
    /// Starting value of the nugget.
    #[arg(long)]
    pub init_tau2: Option<f64>,
    /// Lower end of the search interval for phi.
    #[arg(long)]
    pub lower: Option<f64>,
    /// Upper end of the search interval for phi.
    #[arg(long)]
    pub upper: Option<f64>,
}

impl SaemArgs {
    pub fn apply(&self, s: &mut SaemConfig, model: &ModelConfig) {
        if let Some(v) = self.m {
            s.m = v;
        }
        if let Some(v) = self.max_iter {
            s.max_iter = v;
        }
        if let Some(v) = self.pc {
            s.pc = v;
        }
        if let Some(v) = self.tol {
            s.tol = v;
        }
        apply_init(&mut s.init, self, model);
        apply_box(&mut s.search, self);
    }

    pub fn apply_plug_in(&self, p: &mut PlugInOptions, model: &ModelConfig) {
        apply_init(&mut p.init, self, model);
        apply_box(&mut p.search, self);
    }
}

fn apply_init(init: &mut Option<CovParams>, a: &SaemArgs, model: &ModelConfig) {
    if a.init_sigma2.is_none() && a.init_phi.is_none() && a.init_tau2.is_none() {
        return;
    }
    let base = init.unwrap_or(CovParams::new(
        1.0,
        1.0,
        if model.fix_nugget { model.nugget } else { 0.1 },
    ));
    *init = Some(CovParams::new(
        a.init_sigma2.unwrap_or(base.sigma2),
        a.init_phi.unwrap_or(base.phi),
        a.init_tau2.unwrap_or(base.tau2),
    ));
}

fn apply_box(search: &mut Option<SearchBox>, a: &SaemArgs) {
    if a.lower.is_none() && a.upper.is_none() {
        return;
    }
    let base = search.unwrap_or(SearchBox {
        phi: [1e-5, 50.0],
        nu2: [1e-4, 100.0],
    });
    *search = Some(SearchBox {
        phi: [
            a.lower.unwrap_or(base.phi[0]),
            a.upper.unwrap_or(base.phi[1]),
        ],
        nu2: base.nu2,
    });
}

pub fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub saem: SaemConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub model: ModelConfig,
    pub method: Method,
    pub saem: SaemConfig,
    pub seminaive: SeminaiveConfig,
    pub plug_in: PlugInOptions,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            method: Method::Saem,
            saem: SaemConfig::default(),
            seminaive: SeminaiveConfig::default(),
            plug_in: PlugInOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossValRunConfig {
    pub model: ModelConfig,
    pub methods: Vec<Method>,
    pub folds: usize,
    pub seed: u64,
    pub saem: SaemConfig,
    pub seminaive: SeminaiveConfig,
    pub plug_in: PlugInOptions,
}

impl Default for CrossValRunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            methods: vec![
                Method::Naive1,
                Method::Naive2,
                Method::Seminaive,
                Method::Saem,
            ],
            folds: 5,
            seed: 1,
            saem: SaemConfig::default(),
            seminaive: SeminaiveConfig::default(),
            plug_in: PlugInOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub c_star: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { c_star: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariogramConfig {
    pub bins: usize,
    /// Largest lag; half the largest distance when absent.
    pub max_dist: Option<f64>,
    /// Fit this model to the empirical variogram by weighted least squares.
    pub fit: Option<ModelConfig>,
}

impl Default for VariogramConfig {
    fn default() -> Self {
        Self {
            bins: 12,
            max_dist: None,
            fit: None,
        }
    }
}

/// Outliers added to the simulated estimation block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSpec {
    pub indices: Vec<usize>,
    pub magnitude_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub design: SimConfig,
    pub outliers: Option<OutlierSpec>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<FitConfig, _> =
            serde_json::from_str(r#"{"model": {"trend": "cte", "colour": 1}}"#);
        assert!(r.is_err());
        let r: Result<FitConfig, _> = serde_json::from_str(r#"{"saem": {"m": 10, "bogus": true}}"#);
        assert!(r.is_err());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c: FitConfig = serde_json::from_str(r#"{"saem": {"m": 7}}"#).unwrap();
        assert_eq!(c.saem.m, 7);
        assert_eq!(c.saem.max_iter, SaemConfig::default().max_iter);
        assert_eq!(c.model, ModelConfig::default());
    }

    #[test]
    fn flags_override_initial_values_and_box() {
        let model = ModelConfig {
            fix_nugget: true,
            nugget: 0.0,
            ..Default::default()
        };
        let mut s = SaemConfig::default();
        let a = SaemArgs {
            init_sigma2: Some(2.0),
            init_phi: Some(0.1),
            upper: Some(50.0),
            ..Default::default()
        };
        a.apply(&mut s, &model);
        assert_eq!(s.init, Some(CovParams::new(2.0, 0.1, 0.0)));
        assert_eq!(s.search.unwrap().phi, [1e-5, 50.0]);
    }
}
