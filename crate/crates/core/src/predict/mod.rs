//! Spatial prediction under the Naive, Seminaive and SAEM methods, MSPE and
//! cross-validation.

mod variogram;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{cross_distances, CovParams, CovarianceSpec, DistanceMatrix};
use crate::error::{Error, Result};
use crate::linalg::{select, select_rows, SpdFactor};
use crate::model::{
    criteria, gaussian_loglik, CensType, Criteria, LogLik, ModelParams, SclModel, SpatialDataset,
    Trend,
};
use crate::mvn::RngState;
use crate::parallel::{map_range, try_map_range, Execution};
use crate::saem::{
    final_loglik_options, gaussian_ml, saem_fit_model, SaemConfig, SaemFit, SearchBox,
};

pub(crate) use variogram::initial_cov;
pub use variogram::{empirical_variogram, model_semivariance, wls_variofit, Variogram};

/// Prediction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive1,
    Naive2,
    Seminaive,
    Saem,
    /// Plain kriging with given parameters.
    Kriging,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Naive1 => "naive1",
            Method::Naive2 => "naive2",
            Method::Seminaive => "seminaive",
            Method::Saem => "saem",
            Method::Kriging => "kriging",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive1" => Ok(Method::Naive1),
            "naive2" => Ok(Method::Naive2),
            "seminaive" => Ok(Method::Seminaive),
            "saem" => Ok(Method::Saem),
            "kriging" => Ok(Method::Kriging),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Coordinates and trend rows of a set of sites.
#[derive(Debug, Clone, Copy)]
pub struct Sites<'a> {
    pub coords: &'a [[f64; 2]],
    pub x: &'a DMatrix<f64>,
}

impl<'a> Sites<'a> {
    pub fn new(coords: &'a [[f64; 2]], x: &'a DMatrix<f64>) -> Result<Self> {
        if coords.len() != x.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} coordinates but {} trend rows",
                coords.len(),
                x.nrows()
            )));
        }
        Ok(Self { coords, x })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub method: Method,
    pub coords_pred: Vec<[f64; 2]>,
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
    pub params_used: ModelParams,
}

const BLOCK: usize = 32;

/// Cross covariance `σ²ρ(h) + τ²·[h = 0]`.
fn cross_cov(spec: &CovarianceSpec, p: &CovParams, h: &DMatrix<f64>) -> DMatrix<f64> {
    h.map(|d| p.sigma2 * spec.correlation(d, p.phi) + if d == 0.0 { p.tau2 } else { 0.0 })
}

/// Kriging mean and standard deviation at `pred` from observations `z_obs` at `obs`.
pub fn krige(
    params: &ModelParams,
    spec: &CovarianceSpec,
    obs: Sites<'_>,
    z_obs: &DVector<f64>,
    pred: Sites<'_>,
    exec: Execution,
) -> Result<PredictionResult> {
    params.cov.validate()?;
    let p = params.beta.len();
    if obs.x.ncols() != p || pred.x.ncols() != p || z_obs.len() != obs.coords.len() {
        return Err(Error::InvalidInput(
            "design matrices do not match the coefficients".into(),
        ));
    }
    let dist = DistanceMatrix::from_coords(obs.coords);
    let sigma = crate::covariance::sigma_matrix(&dist, spec, &params.cov);
    let f = SpdFactor::new(&sigma)?;
    let alpha = f.solve_vec(&(z_obs - obs.x * &params.beta));
    let sill = params.cov.sigma2 + params.cov.tau2;
    let m = pred.coords.len();
    let blocks = m.div_ceil(BLOCK);
    let parts = map_range(exec, blocks, |b| {
        let rows: Vec<usize> = (b * BLOCK..((b + 1) * BLOCK).min(m)).collect();
        let coords: Vec<[f64; 2]> = rows.iter().map(|&i| pred.coords[i]).collect();
        let k = cross_cov(spec, &params.cov, &cross_distances(&coords, obs.coords));
        let mean = select_rows(pred.x, &rows) * &params.beta + &k * &alpha;
        let w = f.half_solve_mat(&k.transpose());
        let sd: Vec<f64> = (0..rows.len())
            .map(|j| (sill - w.column(j).norm_squared()).max(0.0).sqrt())
            .collect();
        (mean, sd)
    });
    let mut mean = DVector::zeros(m);
    let mut sd = DVector::zeros(m);
    for (b, (mb, sb)) in parts.into_iter().enumerate() {
        for (j, (mv, sv)) in mb.iter().zip(sb).enumerate() {
            mean[b * BLOCK + j] = *mv;
            sd[b * BLOCK + j] = sv;
        }
    }
    Ok(PredictionResult {
        method: Method::Kriging,
        coords_pred: pred.coords.to_vec(),
        mean,
        sd,
        params_used: params.clone(),
    })
}

/// Full predictive covariance `Σ_pp − Σ_po Σ_oo⁻¹ Σ_op`.
pub fn prediction_covariance(
    params: &ModelParams,
    spec: &CovarianceSpec,
    obs_coords: &[[f64; 2]],
    pred_coords: &[[f64; 2]],
) -> Result<DMatrix<f64>> {
    let sigma = crate::covariance::sigma_matrix(
        &DistanceMatrix::from_coords(obs_coords),
        spec,
        &params.cov,
    );
    let f = SpdFactor::new(&sigma)?;
    let k = cross_cov(spec, &params.cov, &cross_distances(pred_coords, obs_coords));
    let pp = cross_cov(
        spec,
        &params.cov,
        &cross_distances(pred_coords, pred_coords),
    );
    let w = f.half_solve_mat(&k.transpose());
    Ok(crate::linalg::symmetrize(&(pp - w.transpose() * w)))
}

/// `(1/m) Σ (Z_i − Ẑ_i)²`.
pub fn mspe(observed: &DVector<f64>, predicted: &DVector<f64>) -> Result<f64> {
    if observed.len() != predicted.len() || observed.is_empty() {
        return Err(Error::InvalidInput(
            "mspe needs two nonempty vectors of equal length".into(),
        ));
    }
    Ok((observed - predicted).norm_squared() / observed.len() as f64)
}

/// Fills censored rows with their detection limit, the midpoint of a finite interval,
/// or the mean of the observed values.
pub(crate) fn naive_fill(data: &SpatialDataset) -> DVector<f64> {
    let obs: Vec<f64> = (0..data.n())
        .filter(|&i| !data.cens[i])
        .map(|i| data.value[i])
        .collect();
    let fallback = if obs.is_empty() {
        0.0
    } else {
        obs.iter().sum::<f64>() / obs.len() as f64
    };
    DVector::from_fn(data.n(), |i, _| {
        if !data.cens[i] {
            return data.value[i];
        }
        let (l, u) = (data.lower[i], data.upper[i]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => 0.5 * (l + u),
            (false, true) => u,
            (true, false) => l,
            _ => fallback,
        }
    })
}

/// Naive imputation: the detection limit (`half = false`) or half of it under left
/// censoring. Right-censored rows take the bound itself for both variants.
pub fn naive_impute(data: &SpatialDataset, half: bool) -> Result<DVector<f64>> {
    if data.cens_type == CensType::Interval {
        return Err(Error::Unsupported(
            "naive imputation needs one-sided censoring".into(),
        ));
    }
    let mut z = data.value.clone();
    for i in 0..data.n() {
        if !data.cens[i] {
            continue;
        }
        let lod = data.detection_limit(i).ok_or_else(|| {
            Error::InvalidInput(format!("row {i}: censored row without a finite limit"))
        })?;
        z[i] = match data.cens_type {
            CensType::Left if half => lod / 2.0,
            _ => lod,
        };
    }
    Ok(z)
}

/// Shared settings for the plug-in (Naive and Seminaive) estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlugInOptions {
    pub init: Option<CovParams>,
    pub search: Option<SearchBox>,
    /// Seed of the lattice shifts used to evaluate the censored likelihood.
    pub seed: u64,
    pub execution: Execution,
}

impl Default for PlugInOptions {
    fn default() -> Self {
        Self {
            init: None,
            search: None,
            seed: 1,
            execution: Execution::default(),
        }
    }
}

/// Parameters estimated from an imputed response.
#[derive(Debug, Clone)]
pub struct PlugInFit {
    pub method: Method,
    pub params: ModelParams,
    pub imputed: DVector<f64>,
    /// Censored-data log-likelihood at the plug-in estimates.
    pub loglik: LogLik,
    /// Gaussian log-likelihood of the imputed response.
    pub loglik_imputed: f64,
    pub criteria: Criteria,
    pub converged: bool,
    pub iterations: usize,
    pub model: SclModel,
}

fn plug_in_start(
    model: &SclModel,
    z: &DVector<f64>,
    opts: &PlugInOptions,
) -> Result<(CovParams, SearchBox)> {
    let search = opts
        .search
        .unwrap_or_else(|| SearchBox::for_distance(model.dist.max()));
    search.validate()?;
    let mut cov = match opts.init {
        Some(c) => c,
        None => initial_cov(model, z)?,
    };
    if model.spec.nugget_fixed {
        cov.tau2 = model.spec.fixed_nugget_value;
    }
    Ok((cov, search))
}

fn finish_plug_in(
    model: SclModel,
    method: Method,
    params: ModelParams,
    imputed: DVector<f64>,
    converged: bool,
    iterations: usize,
    opts: &PlugInOptions,
) -> Result<PlugInFit> {
    let mut rng = RngState::new(opts.seed).split(2);
    let loglik = model.loglik(&params, &mut rng, &final_loglik_options(opts.execution))?;
    let loglik_imputed = gaussian_loglik(&imputed, &model.x, &model.dist, &model.spec, &params)?;
    let crit = criteria(loglik.value, model.n_params(), model.n());
    Ok(PlugInFit {
        method,
        params,
        imputed,
        loglik,
        loglik_imputed,
        criteria: crit,
        converged,
        iterations,
        model,
    })
}

/// Naive 1 (`half = false`) or Naive 2 estimation: impute, then Gaussian ML.
pub fn fit_naive(
    data: &SpatialDataset,
    trend: Trend,
    spec: &CovarianceSpec,
    half: bool,
    opts: &PlugInOptions,
) -> Result<PlugInFit> {
    let z = naive_impute(data, half)?;
    let model = SclModel::new(data.clone(), trend, *spec)?;
    let (start, search) = plug_in_start(&model, &z, opts)?;
    let params = gaussian_ml(&z, &model.x, &model.dist, spec, &search, &start)?;
    let method = if half { Method::Naive2 } else { Method::Naive1 };
    finish_plug_in(model, method, params, z, true, 1, opts)
}

/// Kriging from a plug-in fit, using the imputed response.
pub fn predict_plug_in(
    fit: &PlugInFit,
    coords_pred: &[[f64; 2]],
    x_pred: &DMatrix<f64>,
    exec: Execution,
) -> Result<PredictionResult> {
    let obs = Sites::new(&fit.model.data.coords, &fit.model.x)?;
    let mut r = krige(
        &fit.params,
        &fit.model.spec,
        obs,
        &fit.imputed,
        Sites::new(coords_pred, x_pred)?,
        exec,
    )?;
    r.method = fit.method;
    Ok(r)
}

pub fn predict_naive(
    data: &SpatialDataset,
    trend: Trend,
    spec: &CovarianceSpec,
    method: Method,
    coords_pred: &[[f64; 2]],
    x_pred: &DMatrix<f64>,
    opts: &PlugInOptions,
) -> Result<PredictionResult> {
    let half = match method {
        Method::Naive1 => false,
        Method::Naive2 => true,
        other => return Err(Error::Config(format!("`{other}` is not a naive method"))),
    };
    let fit = fit_naive(data, trend, spec, half, opts)?;
    predict_plug_in(&fit, coords_pred, x_pred, opts.execution)
}

/// Stopping constants of the Seminaive algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeminaiveConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub max_iter: usize,
}

impl Default for SeminaiveConfig {
    fn default() -> Self {
        Self {
            c1: 0.1,
            c2: 2.0,
            c3: 0.5,
            max_iter: 200,
        }
    }
}

impl SeminaiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c3 > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(
                "seminaive constants and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sample skewness `m₃ / m₂^{3/2}` with biased central moments.
pub fn skewness(z: &DVector<f64>) -> f64 {
    let n = z.len() as f64;
    let mean = z.sum() / n;
    let m2 = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = z.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 > 0.0 {
        m3 / m2.powf(1.5)
    } else {
        0.0
    }
}

/// Leave-one-out kriging means `x_iβ + Σ_{i,−i} Σ_{−i,−i}⁻¹ (z_{−i} − X_{−i}β)` for rows `idx`,
/// through the identity `z_i − [Σ⁻¹(z − Xβ)]_i / [Σ⁻¹]_ii`.
fn loo_means(
    model: &SclModel,
    params: &ModelParams,
    z: &DVector<f64>,
    idx: &[usize],
) -> Result<Vec<f64>> {
    let f = SpdFactor::new(&model.sigma(&params.cov)?)?;
    let a = f.solve_vec(&(z - &model.x * &params.beta));
    let inv = f.inverse();
    Ok(idx.iter().map(|&i| z[i] - a[i] / inv[(i, i)]).collect())
}

/// Seminaive estimation: iterative leave-one-out re-imputation clamped to `[0, LOD]`.
pub fn fit_seminaive(
    data: &SpatialDataset,
    trend: Trend,
    spec: &CovarianceSpec,
    cfg: &SeminaiveConfig,
    opts: &PlugInOptions,
) -> Result<PlugInFit> {
    cfg.validate()?;
    if data.n_censored() > 0 && data.cens_type != CensType::Left {
        return Err(Error::Unsupported(
            "the seminaive algorithm handles left censoring only".into(),
        ));
    }
    let model = SclModel::new(data.clone(), trend, *spec)?;
    let cidx = model.partition.cens_idx.clone();
    if cidx.is_empty() {
        let z = data.value.clone();
        let (start, search) = plug_in_start(&model, &z, opts)?;
        let params = gaussian_ml(&z, &model.x, &model.dist, spec, &search, &start)?;
        return finish_plug_in(model, Method::Seminaive, params, z, true, 0, opts);
    }
    let lods: Vec<f64> = cidx
        .iter()
        .map(|&i| {
            data.detection_limit(i)
                .ok_or_else(|| Error::InvalidInput(format!("row {i}: no detection limit")))
        })
        .collect::<Result<_>>()?;
    if let Some(l) = lods.iter().find(|&&l| l < 0.0) {
        return Err(Error::Unsupported(format!(
            "seminaive clamps to [0, LOD] and needs LOD >= 0, got {l}"
        )));
    }

    // reference fit on the observed rows alone
    let obs_idx = &model.partition.obs_idx;
    let z_obs = select(&data.value, obs_idx);
    let obs_model = SclModel::new(data.subset(obs_idx)?, trend, *spec)
        .map_err(|e| Error::InvalidInput(format!("observed rows alone cannot be fitted: {e}")))?;
    let (start_obs, search) = plug_in_start(&obs_model, &z_obs, opts)?;
    let sigma2_obs = gaussian_ml(
        &z_obs,
        &obs_model.x,
        &obs_model.dist,
        spec,
        &search,
        &start_obs,
    )?
    .cov
    .sigma2;
    let skew_obs = skewness(&z_obs);

    let mut z = data.value.clone();
    for &i in &cidx {
        z[i] = 0.0;
    }
    let (start, _) = plug_in_start(&model, &z, opts)?;
    let mut params = gaussian_ml(&z, &model.x, &model.dist, spec, &search, &start)?;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iter {
        let pred = loo_means(&model, &params, &z, &cidx)?;
        let mut next = z.clone();
        for ((&i, &m), &lod) in cidx.iter().zip(&pred).zip(&lods) {
            next[i] = m.min(lod).max(0.0);
        }
        let new_params = gaussian_ml(&next, &model.x, &model.dist, spec, &search, &params.cov)?;
        let (s_old, s_new) = (params.cov.sigma2, new_params.cov.sigma2);
        let stop = ((s_new - s_old) / s_old).abs() <= cfg.c1
            && s_new <= cfg.c2 * sigma2_obs
            && skewness(&next) > cfg.c3 * skew_obs;
        z = next;
        params = new_params;
        iterations = k;
        if stop {
            converged = true;
            break;
        }
    }
    finish_plug_in(
        model,
        Method::Seminaive,
        params,
        z,
        converged,
        iterations,
        opts,
    )
}

pub fn predict_seminaive(
    data: &SpatialDataset,
    trend: Trend,
    spec: &CovarianceSpec,
    coords_pred: &[[f64; 2]],
    x_pred: &DMatrix<f64>,
    cfg: &SeminaiveConfig,
    opts: &PlugInOptions,
) -> Result<PredictionResult> {
    let fit = fit_seminaive(data, trend, spec, cfg, opts)?;
    predict_plug_in(&fit, coords_pred, x_pred, opts.execution)
}

/// Kriging with the SAEM estimates, the censored rows replaced by `Ẑ`.
pub fn predict_saem(
    fit: &SaemFit,
    x_pred: &DMatrix<f64>,
    coords_pred: &[[f64; 2]],
) -> Result<PredictionResult> {
    if x_pred.ncols() != fit.model.p() {
        return Err(Error::InvalidInput(format!(
            "prediction design has {} columns, the fit has {}",
            x_pred.ncols(),
            fit.model.p()
        )));
    }
    let obs = Sites::new(&fit.model.data.coords, &fit.model.x)?;
    let mut r = krige(
        &fit.params,
        &fit.model.spec,
        obs,
        &fit.zhat,
        Sites::new(coords_pred, x_pred)?,
        fit.config.execution,
    )?;
    r.method = Method::Saem;
    Ok(r)
}

/// Settings for [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValConfig {
    pub method: Method,
    pub folds: usize,
    pub seed: u64,
    pub saem: SaemConfig,
    pub seminaive: SeminaiveConfig,
    pub plug_in: PlugInOptions,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub method: Method,
    /// Held-out rows in fold order.
    pub rows: Vec<usize>,
    pub fold_of: Vec<usize>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub sd: Vec<f64>,
    pub fold_mspe: Vec<f64>,
    pub mspe: f64,
}

/// K-fold hold-out over the uncensored rows; censored rows always stay in training.
pub fn cross_validate(
    data: &SpatialDataset,
    trend: Trend,
    spec: &CovarianceSpec,
    cfg: &CrossValConfig,
) -> Result<CrossValidation> {
    use rand::seq::SliceRandom;
    let mut obs: Vec<usize> = (0..data.n()).filter(|&i| !data.cens[i]).collect();
    if cfg.folds < 2 || cfg.folds > obs.len() {
        return Err(Error::Config(format!(
            "folds must lie in [2, {}] (number of uncensored rows)",
            obs.len()
        )));
    }
    if cfg.method == Method::Kriging {
        return Err(Error::Config(
            "cross-validation needs an estimation method".into(),
        ));
    }
    let mut rng = RngState::new(cfg.seed);
    obs.shuffle(&mut rng);
    let folds: Vec<Vec<usize>> = (0..cfg.folds)
        .map(|f| {
            let mut v: Vec<usize> = obs.iter().skip(f).step_by(cfg.folds).copied().collect();
            v.sort_unstable();
            v
        })
        .collect();
    let full_x = crate::model::build_trend(&data.coords, data.covariates.as_ref(), trend)?;
    let results = try_map_range(cfg.execution, cfg.folds, |f| -> Result<PredictionResult> {
        let test = &folds[f];
        let train: Vec<usize> = (0..data.n())
            .filter(|i| test.binary_search(i).is_err())
            .collect();
        let tr = data.subset(&train)?;
        let coords_pred: Vec<[f64; 2]> = test.iter().map(|&i| data.coords[i]).collect();
        let x_pred = select_rows(&full_x, test);
        let mut plug = cfg.plug_in.clone();
        plug.execution = Execution::Sequential;
        match cfg.method {
            Method::Naive1 | Method::Naive2 => {
                predict_naive(&tr, trend, spec, cfg.method, &coords_pred, &x_pred, &plug)
            }
            Method::Seminaive => predict_seminaive(
                &tr,
                trend,
                spec,
                &coords_pred,
                &x_pred,
                &cfg.seminaive,
                &plug,
            ),
            Method::Saem => {
                let mut sc = cfg.saem.clone();
                sc.execution = Execution::Sequential;
                let model = SclModel::new(tr, trend, *spec)?;
                let fit = saem_fit_model(model, &sc)?;
                predict_saem(&fit, &x_pred, &coords_pred)
            }
            Method::Kriging => unreachable!(),
        }
    })?;
    let mut out = CrossValidation {
        method: cfg.method,
        rows: Vec::new(),
        fold_of: Vec::new(),
        observed: Vec::new(),
        predicted: Vec::new(),
        sd: Vec::new(),
        fold_mspe: Vec::new(),
        mspe: 0.0,
    };
    for (f, r) in results.iter().enumerate() {
        let truth = select(&data.value, &folds[f]);
        out.fold_mspe.push(mspe(&truth, &r.mean)?);
        out.rows.extend(&folds[f]);
        out.fold_of.extend(std::iter::repeat_n(f, folds[f].len()));
        out.observed.extend(truth.iter());
        out.predicted.extend(r.mean.iter());
        out.sd.extend(r.sd.iter());
    }
    out.mspe = mspe(
        &DVector::from_vec(out.observed.clone()),
        &DVector::from_vec(out.predicted.clone()),
    )?;
    Ok(out)
}
