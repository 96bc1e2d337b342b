//! Command implementations.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use spatcens::influence::{local_influence_at, InfluenceReport, QPoint, Scheme};
use spatcens::model::build_trend;
use spatcens::predict::{
    cross_validate, empirical_variogram, model_semivariance, mspe, predict_naive,
    predict_seminaive, wls_variofit, CrossValConfig, CrossValidation, Method,
};
use spatcens::saem::{saem_fit_model, TraceRow};
use spatcens::simulate::{inject_outliers, simulate_scl};
use spatcens::{
    krige, CovParams, ModelParams, PredictionResult, SaemFit, SclModel, Sites, SpatialDataset,
};

use crate::config::*;
use crate::error::CliError;
use crate::io::{self, cell, read_dataset, read_sites, sig6, table_csv, to_json, write_atomic};
use crate::svg;

/// Identification block embedded in every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the input (or, for `simulate`, output) data file.
    pub data_fingerprint: String,
}

impl Header {
    fn new(command: &str, fingerprint: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            data_fingerprint: fingerprint.into(),
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)
    }

    fn json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), CliError> {
        self.write(name, &to_json(v)?)
    }
}

// simulate

#[derive(Serialize)]
struct SimulateManifest<'a> {
    header: Header,
    config: &'a SimulateConfig,
    n_est: usize,
    n_pred: usize,
    n_censored: usize,
    detection_limit: Option<f64>,
    truth_fingerprint: String,
    /// Estimation-block responses before censoring and outlier injection.
    latent: Vec<f64>,
}

pub fn simulate(cfg: &SimulateConfig, out_dir: &Path) -> Result<(), CliError> {
    let out = Out::new(out_dir)?;
    let sim = simulate_scl(&cfg.design)?;
    let data = match &cfg.outliers {
        Some(o) => inject_outliers(&sim.data, &o.indices, o.magnitude_sd)?,
        None => sim.data.clone(),
    };
    let data_csv = io::dataset_csv(&data)?;
    let truth_csv = io::sites_csv(&sim.coords_pred, &sim.z_pred, sim.covariates_pred.as_ref())?;
    let manifest = SimulateManifest {
        header: Header::new("simulate", &io::fingerprint(&data_csv)),
        config: cfg,
        n_est: data.n(),
        n_pred: sim.coords_pred.len(),
        n_censored: data.n_censored(),
        detection_limit: sim.lod,
        truth_fingerprint: io::fingerprint(&truth_csv),
        latent: sim.latent.iter().copied().collect(),
    };
    out.write("data.csv", &data_csv)?;
    out.write("truth.csv", &truth_csv)?;
    out.json("manifest.json", &manifest)?;
    eprintln!(
        "simulated {} estimation sites ({} censored) and {} prediction sites",
        manifest.n_est, manifest.n_censored, manifest.n_pred
    );
    Ok(())
}

// fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub phi: f64,
    pub tau2: f64,
}

impl Estimates {
    fn params(&self) -> ModelParams {
        ModelParams::new(
            DVector::from_vec(self.beta.clone()),
            CovParams::new(self.sigma2, self.phi, self.tau2),
        )
    }
}

/// Serialized SAEM fit; enough to predict and diagnose without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub header: Header,
    pub config: FitConfig,
    pub n: usize,
    pub n_censored: usize,
    pub estimates: Estimates,
    pub loglik: Option<f64>,
    pub loglik_std_error: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub aicc: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Mean of `(β, σ², φ, τ²)` over the retained part of the trace.
    pub trace_mean: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub zhat: Vec<f64>,
    pub zzhat: Vec<Vec<f64>>,
}

impl FitReport {
    fn from_fit(fit: &SaemFit, config: FitConfig, fingerprint: &str) -> Self {
        let p = &fit.params;
        Self {
            header: Header::new("fit", fingerprint),
            config: FitConfig {
                saem: fit.config.clone(),
                ..config
            },
            n: fit.model.n(),
            n_censored: fit.model.data.n_censored(),
            estimates: Estimates {
                beta: p.beta.iter().copied().collect(),
                sigma2: p.cov.sigma2,
                phi: p.cov.phi,
                tau2: p.cov.tau2,
            },
            loglik: finite(fit.loglik.value),
            loglik_std_error: finite(fit.loglik.std_error),
            aic: finite(fit.criteria.aic),
            bic: finite(fit.criteria.bic),
            aicc: fit.criteria.aicc.and_then(finite),
            converged: fit.converged,
            iterations: fit.iterations,
            trace_mean: fit.trace_mean(),
            trace: fit.trace.clone(),
            zhat: fit.zhat.iter().copied().collect(),
            zzhat: fit
                .zzhat
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }

    fn zhat(&self) -> DVector<f64> {
        DVector::from_vec(self.zhat.clone())
    }

    fn zzhat(&self) -> Result<DMatrix<f64>, CliError> {
        let n = self.zhat.len();
        if self.zzhat.len() != n || self.zzhat.iter().any(|r| r.len() != n) {
            return Err(CliError::Input(
                "fit file: second-moment matrix has the wrong shape".into(),
            ));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.zzhat[i][j]))
    }
}

fn coef_names(model: &SclModel) -> Vec<String> {
    (0..model.p()).map(|j| format!("beta{j}")).collect()
}

fn fit_summary(r: &FitReport, model: &SclModel) -> String {
    let mut s = String::new();
    let m = &r.config.model;
    let _ = writeln!(s, "SAEM estimates for a spatial censored linear model");
    let _ = writeln!(
        s,
        "data: n = {}, censored = {} ({}%)",
        r.n,
        r.n_censored,
        sig6(100.0 * r.n_censored as f64 / r.n as f64)
    );
    let nugget = if m.fix_nugget {
        format!("fixed at {}", sig6(m.nugget))
    } else {
        "estimated".into()
    };
    let _ = writeln!(
        s,
        "model: trend {}, {} covariance (kappa {}), nugget {}",
        m.trend,
        m.cov_model,
        sig6(m.kappa),
        nugget
    );
    let _ = writeln!(s, "\n{:<10}{:>16}", "parameter", "estimate");
    for (name, v) in coef_names(model).iter().zip(&r.estimates.beta) {
        let _ = writeln!(s, "{name:<10}{:>16}", sig6(*v));
    }
    for (name, v) in [
        ("sigma2", r.estimates.sigma2),
        ("phi", r.estimates.phi),
        ("tau2", r.estimates.tau2),
    ] {
        let _ = writeln!(s, "{name:<10}{:>16}", sig6(v));
    }
    let opt = |v: Option<f64>| v.map_or("NA".to_owned(), sig6);
    let _ = writeln!(
        s,
        "\nlog-likelihood {}  (Monte-Carlo s.e. {})",
        opt(r.loglik),
        opt(r.loglik_std_error)
    );
    let _ = writeln!(
        s,
        "AIC {}  BIC {}  AICc {}",
        opt(r.aic),
        opt(r.bic),
        opt(r.aicc)
    );
    let _ = writeln!(
        s,
        "iterations {}, converged {}",
        r.iterations,
        if r.converged { "yes" } else { "no" }
    );
    s
}

pub fn fit(data_path: &Path, cfg: FitConfig, out_dir: &Path) -> Result<(), CliError> {
    cfg.model.validate()?;
    cfg.saem.validate()?;
    let out = Out::new(out_dir)?;
    let data = read_dataset(data_path)?;
    let model = SclModel::new(data.value, cfg.model.trend, cfg.model.spec())?;
    for w in cfg.saem.warnings() {
        eprintln!("warning: {w}");
    }
    let fit = saem_fit_model(model, &cfg.saem)?;
    let report = FitReport::from_fit(&fit, cfg, &data.fingerprint);
    let summary = fit_summary(&report, &fit.model);
    out.json("fit.json", &report)?;
    out.write("fit_summary.txt", summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

/// Rebuilds the model of a saved fit, checking that `data` is the file it was fitted on.
fn load_fit(fit_path: &Path, data_path: &Path) -> Result<(FitReport, SclModel, String), CliError> {
    let text = std::fs::read_to_string(fit_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", fit_path.display())))?;
    let report: FitReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", fit_path.display())))?;
    let data = read_dataset(data_path)?;
    if data.fingerprint != report.header.data_fingerprint {
        return Err(CliError::Input(format!(
            "{} was not produced from {} (fingerprint mismatch)",
            fit_path.display(),
            data_path.display()
        )));
    }
    let model = SclModel::new(
        data.value,
        report.config.model.trend,
        report.config.model.spec(),
    )?;
    if report.zhat.len() != model.n() || report.estimates.beta.len() != model.p() {
        return Err(CliError::Input(
            "fit file does not match the data dimensions".into(),
        ));
    }
    Ok((report, model, data.fingerprint))
}

// predict

#[derive(Serialize)]
struct PredictReport<'a> {
    header: Header,
    config: &'a PredictConfig,
    fit_file: Option<String>,
    sites_fingerprint: String,
    method: Method,
    params_used: Estimates,
    n_targets: usize,
    /// Against the `value` column of the targets file, when present.
    mspe: Option<f64>,
}

/// Distinct sorted values when the sites form a complete rectangular grid.
fn grid_axes(coords: &[[f64; 2]]) -> Option<(Vec<f64>, Vec<f64>)> {
    let key = |v: f64| v.to_bits();
    let xs: BTreeSet<u64> = coords.iter().map(|c| key(c[0])).collect();
    let ys: BTreeSet<u64> = coords.iter().map(|c| key(c[1])).collect();
    let cells: BTreeSet<(u64, u64)> = coords.iter().map(|c| (key(c[0]), key(c[1]))).collect();
    if xs.len() < 2
        || ys.len() < 2
        || xs.len() * ys.len() != coords.len()
        || cells.len() != coords.len()
    {
        return None;
    }
    let mut xs: Vec<f64> = xs.into_iter().map(f64::from_bits).collect();
    let mut ys: Vec<f64> = ys.into_iter().map(f64::from_bits).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    Some((xs, ys))
}

pub struct PredictInputs<'a> {
    pub data: &'a Path,
    pub sites: &'a Path,
    pub fit: Option<&'a Path>,
}

pub fn predict(
    inputs: PredictInputs<'_>,
    cfg: PredictConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let out = Out::new(out_dir)?;
    let sites = read_sites(inputs.sites)?;
    let (result, fingerprint, cfg) = match (cfg.method, inputs.fit) {
        (Method::Saem, Some(fit_path)) => {
            let (report, model, fp) = load_fit(fit_path, inputs.data)?;
            let x_pred = build_trend(
                &sites.value.coords,
                sites.value.covariates.as_ref(),
                model.trend,
            )?;
            let obs = Sites::new(&model.data.coords, &model.x)?;
            let mut r = krige(
                &report.estimates.params(),
                &model.spec,
                obs,
                &report.zhat(),
                Sites::new(&sites.value.coords, &x_pred)?,
                report.config.saem.execution,
            )?;
            r.method = Method::Saem;
            let cfg = PredictConfig {
                model: report.config.model.clone(),
                saem: report.config.saem.clone(),
                ..cfg
            };
            (r, fp, cfg)
        }
        (method, fit_path) => {
            if fit_path.is_some() {
                return Err(CliError::Input(format!(
                    "--fit applies to the saem method only, not `{method}`"
                )));
            }
            cfg.model.validate()?;
            let data = read_dataset(inputs.data)?;
            let (trend, spec) = (cfg.model.trend, cfg.model.spec());
            let x_pred = build_trend(&sites.value.coords, sites.value.covariates.as_ref(), trend)?;
            let coords = &sites.value.coords;
            let r = match method {
                Method::Naive1 | Method::Naive2 => predict_naive(
                    &data.value,
                    trend,
                    &spec,
                    method,
                    coords,
                    &x_pred,
                    &cfg.plug_in,
                )?,
                Method::Seminaive => predict_seminaive(
                    &data.value,
                    trend,
                    &spec,
                    coords,
                    &x_pred,
                    &cfg.seminaive,
                    &cfg.plug_in,
                )?,
                Method::Saem => {
                    cfg.saem.validate()?;
                    let model = SclModel::new(data.value, trend, spec)?;
                    let fit = saem_fit_model(model, &cfg.saem)?;
                    spatcens::predict_saem(&fit, &x_pred, coords)?
                }
                Method::Kriging => {
                    return Err(CliError::Input(
                        "plain kriging needs parameters: use --method saem with --fit".into(),
                    ))
                }
            };
            (r, data.fingerprint, cfg)
        }
    };
    let truth = sites.value.truth.as_ref();
    let score = truth.map(|t| mspe(t, &result.mean)).transpose()?;
    write_predictions(&out, &result, truth)?;
    let p = &result.params_used;
    let report = PredictReport {
        header: Header::new("predict", &fingerprint),
        config: &cfg,
        fit_file: inputs.fit.map(|p| p.display().to_string()),
        sites_fingerprint: sites.fingerprint,
        method: result.method,
        params_used: Estimates {
            beta: p.beta.iter().copied().collect(),
            sigma2: p.cov.sigma2,
            phi: p.cov.phi,
            tau2: p.cov.tau2,
        },
        n_targets: result.mean.len(),
        mspe: score,
    };
    out.json("predict.json", &report)?;
    match score {
        Some(m) => eprintln!(
            "{} predictions with {}; MSPE {} (root {})",
            report.n_targets,
            result.method,
            sig6(m),
            sig6(m.sqrt())
        ),
        None => eprintln!("{} predictions with {}", report.n_targets, result.method),
    }
    Ok(())
}

fn write_predictions(
    out: &Out,
    r: &PredictionResult,
    truth: Option<&DVector<f64>>,
) -> Result<(), CliError> {
    let n = r.mean.len();
    let mut headers = vec!["x", "y", "mean", "sd", "lower95", "upper95"];
    if truth.is_some() {
        headers.extend(["value", "error"]);
    }
    let rows = (0..n).map(|i| {
        let (m, s) = (r.mean[i], r.sd[i]);
        let mut row = vec![
            cell(r.coords_pred[i][0]),
            cell(r.coords_pred[i][1]),
            cell(m),
            cell(s),
        ];
        row.extend([cell(m - 1.96 * s), cell(m + 1.96 * s)]);
        if let Some(t) = truth {
            row.extend([cell(t[i]), cell(t[i] - m)]);
        }
        row
    });
    out.write("predictions.csv", &table_csv(&headers, rows)?)?;
    let mean: Vec<f64> = r.mean.iter().copied().collect();
    let sd: Vec<f64> = r.sd.iter().copied().collect();
    let t: Option<Vec<f64>> = truth.map(|t| t.iter().copied().collect());
    let title = format!("{} predictions with 95% bands", r.method);
    out.write(
        "predictions.svg",
        &svg::band_plot(&title, &mean, &sd, t.as_deref()),
    )?;
    if let Some((xs, ys)) = grid_axes(&r.coords_pred) {
        let pos = |i: usize, j: usize| {
            r.coords_pred
                .iter()
                .position(|c| c[0] == xs[i] && c[1] == ys[j])
                .expect("complete grid")
        };
        let mean_at = |i: usize, j: usize| r.mean[pos(i, j)];
        let sd_at = |i: usize, j: usize| r.sd[pos(i, j)];
        out.write(
            "intensity_mean.svg",
            &svg::grid_plot("predicted mean", &xs, &ys, &mean_at),
        )?;
        out.write(
            "intensity_sd.svg",
            &svg::grid_plot("prediction sd", &xs, &ys, &sd_at),
        )?;
    }
    Ok(())
}

// crossval

#[derive(Serialize)]
struct MethodResult {
    method: Method,
    mspe: Option<f64>,
    fold_mspe: Vec<f64>,
    error: Option<String>,
    rows: Vec<usize>,
    fold: Vec<usize>,
    observed: Vec<f64>,
    predicted: Vec<f64>,
    sd: Vec<f64>,
}

#[derive(Serialize)]
struct CrossValReport<'a> {
    header: Header,
    config: &'a CrossValRunConfig,
    results: Vec<MethodResult>,
}

pub fn crossval(data_path: &Path, cfg: CrossValRunConfig, out_dir: &Path) -> Result<(), CliError> {
    cfg.model.validate()?;
    if cfg.methods.is_empty() {
        return Err(CliError::Input("no methods requested".into()));
    }
    let out = Out::new(out_dir)?;
    let data = read_dataset(data_path)?;
    let spec = cfg.model.spec();
    let mut results = Vec::new();
    let mut first_err = None;
    for &method in &cfg.methods {
        let cv = CrossValConfig {
            method,
            folds: cfg.folds,
            seed: cfg.seed,
            saem: cfg.saem.clone(),
            seminaive: cfg.seminaive,
            plug_in: cfg.plug_in.clone(),
            execution: cfg.saem.execution,
        };
        match cross_validate(&data.value, cfg.model.trend, &spec, &cv) {
            Ok(r) => results.push(method_result(r)),
            Err(e) => {
                eprintln!("{method}: {e}");
                results.push(MethodResult {
                    method,
                    mspe: None,
                    fold_mspe: Vec::new(),
                    error: Some(e.to_string()),
                    rows: Vec::new(),
                    fold: Vec::new(),
                    observed: Vec::new(),
                    predicted: Vec::new(),
                    sd: Vec::new(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if results.iter().all(|r| r.error.is_some()) {
        return Err(first_err.expect("at least one method").into());
    }
    let rows = results.iter().map(|r| {
        let m = r.mspe.unwrap_or(f64::NAN);
        vec![
            r.method.to_string(),
            cfg.folds.to_string(),
            cell(m),
            cell(m.sqrt()),
            r.error.clone().unwrap_or_default(),
        ]
    });
    out.write(
        "mspe.csv",
        &table_csv(&["method", "folds", "mspe", "rmspe", "error"], rows)?,
    )?;
    let report = CrossValReport {
        header: Header::new("crossval", &data.fingerprint),
        config: &cfg,
        results,
    };
    out.json("crossval.json", &report)?;
    for r in &report.results {
        if let Some(m) = r.mspe {
            eprintln!("{:<10} MSPE {}", r.method.to_string(), sig6(m));
        }
    }
    Ok(())
}

fn method_result(r: CrossValidation) -> MethodResult {
    MethodResult {
        method: r.method,
        mspe: finite(r.mspe),
        fold_mspe: r.fold_mspe,
        error: None,
        rows: r.rows,
        fold: r.fold_of,
        observed: r.observed,
        predicted: r.predicted,
        sd: r.sd,
    }
}

// diagnose

#[derive(Serialize)]
struct SchemeOut {
    scheme: Scheme,
    benchmark: f64,
    flagged: Vec<usize>,
    rank: usize,
    top_eigenvalues: Vec<f64>,
    m0: Vec<f64>,
}

#[derive(Serialize)]
struct DiagnoseReport<'a> {
    header: Header,
    config: &'a DiagnoseConfig,
    fit_config: FitConfig,
    schemes: Vec<SchemeOut>,
    failures: Vec<(Scheme, String)>,
}

pub fn diagnose(
    fit_path: &Path,
    data_path: &Path,
    cfg: DiagnoseConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    if !(cfg.c_star.is_finite() && cfg.c_star >= 0.0) {
        return Err(CliError::Input(format!(
            "c_star must be a nonnegative number, got {}",
            cfg.c_star
        )));
    }
    let out = Out::new(out_dir)?;
    let (report, model, fp) = load_fit(fit_path, data_path)?;
    let pt = QPoint::new(
        report.zhat(),
        report.zzhat()?,
        model.x.clone(),
        &model.dist,
        &model.spec,
        report.estimates.params(),
    )?;
    let infl: InfluenceReport = local_influence_at(&pt, cfg.c_star, report.config.saem.execution);
    if infl.failures.len() == Scheme::ALL.len() {
        let (_, msg) = &infl.failures[0];
        let mut msg = msg
            .strip_prefix("numerical failure: ")
            .unwrap_or(msg)
            .to_owned();
        let e = &report.estimates;
        if !report.config.model.fix_nugget && e.tau2 <= 1e-3 * e.sigma2 {
            msg.push_str("; the nugget estimate sits on the boundary, refit with a fixed nugget");
        }
        return Err(spatcens::Error::Numerical(msg).into());
    }
    let mut schemes = Vec::new();
    for s in Scheme::ALL {
        let Some(r) = infl.get(s) else { continue };
        let m0: Vec<f64> = r.curvature.m0.iter().copied().collect();
        let title = format!(
            "{} perturbation (benchmark {})",
            s.name(),
            sig6(r.benchmark)
        );
        out.write(
            &format!("m0_{}.svg", s.name()),
            &svg::index_plot(&title, &m0, r.benchmark, &r.flags),
        )?;
        eprintln!("{:<12} flagged {:?}", s.name(), r.flagged());
        schemes.push(SchemeOut {
            scheme: s,
            benchmark: r.benchmark,
            flagged: r.flagged(),
            rank: r.curvature.rank,
            top_eigenvalues: r.curvature.top_eigenvalues.clone(),
            m0,
        });
    }
    for (s, msg) in &infl.failures {
        eprintln!("{:<12} failed: {msg}", s.name());
    }
    let rep = DiagnoseReport {
        header: Header::new("diagnose", &fp),
        config: &cfg,
        fit_config: report.config.clone(),
        schemes,
        failures: infl.failures.clone(),
    };
    out.json("influence.json", &rep)
}

// variogram

#[derive(Serialize)]
struct VariogramReport<'a> {
    header: Header,
    config: &'a VariogramConfig,
    /// Rows used: the uncensored ones.
    n_used: usize,
    centers: Vec<f64>,
    semivariance: Vec<f64>,
    counts: Vec<usize>,
    fitted: Option<CovParams>,
}

pub fn variogram(data_path: &Path, cfg: VariogramConfig, out_dir: &Path) -> Result<(), CliError> {
    if let Some(m) = &cfg.fit {
        m.validate()?;
    }
    let out = Out::new(out_dir)?;
    let data = read_dataset(data_path)?;
    let d: &SpatialDataset = &data.value;
    let obs: Vec<usize> = (0..d.n()).filter(|&i| !d.cens[i]).collect();
    let coords: Vec<[f64; 2]> = obs.iter().map(|&i| d.coords[i]).collect();
    let z = DVector::from_iterator(obs.len(), obs.iter().map(|&i| d.value[i]));
    let v = empirical_variogram(&coords, &z, cfg.bins, cfg.max_dist)?;
    let fitted = match &cfg.fit {
        Some(m) => Some(wls_variofit(&v, &m.spec())?),
        None => None,
    };
    let rows = (0..v.centers.len()).map(|k| {
        vec![
            cell(v.centers[k]),
            cell(v.semivariance[k]),
            v.counts[k].to_string(),
        ]
    });
    out.write(
        "variogram.csv",
        &table_csv(&["distance", "semivariance", "pairs"], rows)?,
    )?;
    let spec = cfg.fit.as_ref().map(|m| m.spec());
    let curve = |h: f64| match (&spec, &fitted) {
        (Some(s), Some(c)) => model_semivariance(s, c, h),
        _ => f64::NAN,
    };
    let model: Option<&dyn Fn(f64) -> f64> = if fitted.is_some() { Some(&curve) } else { None };
    out.write(
        "variogram.svg",
        &svg::variogram_plot(
            "empirical semivariogram",
            &v.centers,
            &v.semivariance,
            model,
        ),
    )?;
    let rep = VariogramReport {
        header: Header::new("variogram", &data.fingerprint),
        config: &cfg,
        n_used: obs.len(),
        centers: v.centers.clone(),
        semivariance: v.semivariance.clone(),
        counts: v.counts.clone(),
        fitted,
    };
    out.json("variogram.json", &rep)
}
