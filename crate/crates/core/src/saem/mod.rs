//! SAEM estimation of `θ = (β, σ², φ, τ²)` for the spatial censored linear model.

mod cm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovParams, CovarianceSpec};
use crate::error::{Error, Result};
use crate::linalg::select;
use crate::model::{criteria, Criteria, LogLik, ModelParams, SclModel, SpatialDataset, Trend};
use crate::mvn::{GibbsSampler, RectProbOptions, Rectangle, RngState};
use crate::optim::NelderMead;
use crate::parallel::Execution;

pub use cm::{cm_step, gaussian_ml, q_function};
use cm::{Moments, Profile};

const LOGLIK_STREAM: u64 = 1;
const FINAL_LOGLIK_STREAM: u64 = 2;

/// Box for the inner search: `φ` and the relative nugget `ν² = τ²/σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub phi: [f64; 2],
    pub nu2: [f64; 2],
}

impl SearchBox {
    /// A box scaled to the largest inter-site distance.
    pub fn for_distance(max_dist: f64) -> Self {
        let d = if max_dist > 0.0 && max_dist.is_finite() {
            max_dist
        } else {
            1.0
        };
        Self {
            phi: [1e-4 * d, 10.0 * d],
            nu2: [1e-4, 1e2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("phi", self.phi), ("nu2", self.nu2)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "search box for {name} must satisfy 0 < lower < upper"
                )));
            }
        }
        Ok(())
    }

    fn clamp(&self, cov: CovParams, spec: &CovarianceSpec) -> CovParams {
        let phi = cov.phi.clamp(self.phi[0], self.phi[1]);
        if spec.nugget_fixed {
            CovParams::new(cov.sigma2, phi, spec.fixed_nugget_value)
        } else {
            CovParams::from_nu2(cov.sigma2, phi, cov.nu2().clamp(self.nu2[0], self.nu2[1]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaemConfig {
    /// Monte-Carlo sample size per iteration.
    pub m: usize,
    /// Iteration cap `W`.
    pub max_iter: usize,
    /// Fraction of `W` run with `δ = 1`.
    pub pc: f64,
    /// Leading fraction of the trace dropped by [`SaemFit::trace_mean`].
    pub perc: f64,
    /// Starting covariance parameters; `None` uses the variogram initializer.
    pub init: Option<CovParams>,
    /// `None` picks [`SearchBox::for_distance`].
    pub search: Option<SearchBox>,
    pub tol: f64,
    pub seed: u64,
    /// Gibbs sweeps discarded after each parameter update.
    pub gibbs_burn_in: usize,
    /// Lattice points for the per-iteration likelihood used by the stopping rule.
    pub trace_loglik_points: usize,
    /// Simplex size (log scale) at which the inner search stops.
    pub inner_xtol: f64,
    pub inner_max_evals: usize,
    pub execution: Execution,
}

impl Default for SaemConfig {
    fn default() -> Self {
        Self {
            m: 15,
            max_iter: 300,
            pc: 0.2,
            perc: 0.25,
            init: None,
            search: None,
            tol: 1e-4,
            seed: 1,
            gibbs_burn_in: 20,
            trace_loglik_points: 2000,
            inner_xtol: 1e-5,
            inner_max_evals: 300,
            execution: Execution::default(),
        }
    }
}

impl SaemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.max_iter == 0 {
            return Err(Error::Config("M and max_iter must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.pc) || !(0.0..1.0).contains(&self.perc) {
            return Err(Error::Config("pc and perc must lie in [0, 1)".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.inner_xtol > 0.0) || self.inner_max_evals == 0 || self.trace_loglik_points == 0 {
            return Err(Error::Config(
                "inner search settings must be positive".into(),
            ));
        }
        if let Some(init) = &self.init {
            init.validate()?;
        }
        if let Some(b) = &self.search {
            b.validate()?;
        }
        Ok(())
    }

    /// Non-fatal advice about the settings.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.m > 20 {
            w.push(format!(
                "M = {} is above the recommended 20; iterations will be slow",
                self.m
            ));
        }
        w
    }

    fn warm_up(&self) -> usize {
        warm_up(self.max_iter, self.pc)
    }
}

fn warm_up(w: usize, pc: f64) -> usize {
    // guard against 0.2 * 200 landing just above 40
    (pc * w as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Step size `δ_k`: 1 for `k ≤ ⌈pc·W⌉`, then `1/(k − ⌈pc·W⌉)`.
pub fn delta_schedule(k: usize, w: usize, pc: f64) -> f64 {
    let k0 = warm_up(w, pc);
    if k <= k0 {
        1.0
    } else {
        1.0 / (k - k0) as f64
    }
}

/// One row of the parameter history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub delta: f64,
    pub beta: Vec<f64>,
    pub cov: CovParams,
    /// Only recorded on iterations where the stopping rule looked at it.
    pub loglik: Option<f64>,
}

/// Stochastic-approximation state carried across iterations.
#[derive(Debug, Clone)]
pub struct EStepState {
    pub zhat: DVector<f64>,
    pub zzhat: DMatrix<f64>,
    chain: Option<DVector<f64>>,
}

impl EStepState {
    /// Starts from `z`, which must agree with the data on observed rows.
    pub fn new(z: DVector<f64>) -> Self {
        let zzhat = &z * z.transpose();
        Self {
            zhat: z,
            zzhat,
            chain: None,
        }
    }
}

/// Simulates the censored block given the current parameters and moves `(Ẑ, ẐẐᵀ)`
/// a step `delta` toward the Monte-Carlo averages.
pub fn e_step(
    state: &mut EStepState,
    model: &SclModel,
    params: &ModelParams,
    m: usize,
    burn_in: usize,
    delta: f64,
    rng: &mut RngState,
) -> Result<()> {
    let part = &model.partition;
    let v = &model.data.value;
    let cidx = &part.cens_idx;
    if cidx.is_empty() {
        state.zhat = v.clone();
        state.zzhat = v * v.transpose();
        return Ok(());
    }
    let (mu, s) = model.conditional_cens_given_obs(params)?;
    let rect = Rectangle::new(
        select(&model.data.lower, cidx),
        select(&model.data.upper, cidx),
    )?;
    let mut sampler = GibbsSampler::new(&mu, &s, &rect, state.chain.as_ref())?;
    let draws = sampler.run(m, burn_in, 1, rng);
    state.chain = Some(sampler.state().clone());

    let nc = cidx.len();
    let mf = m as f64;
    let mean_c = DVector::from_fn(nc, |a, _| draws.column(a).sum() / mf);
    let second_c = draws.transpose() * &draws / mf;
    for (a, &i) in cidx.iter().enumerate() {
        state.zhat[i] += delta * (mean_c[a] - state.zhat[i]);
    }
    for (a, &i) in cidx.iter().enumerate() {
        for (b, &j) in cidx.iter().enumerate() {
            let cur = state.zzhat[(i, j)];
            state.zzhat[(i, j)] = cur + delta * (second_c[(a, b)] - cur);
        }
    }
    // symmetric rounding: average the two triangles
    for a in 0..nc {
        for b in 0..a {
            let (i, j) = (cidx[a], cidx[b]);
            let avg = 0.5 * (state.zzhat[(i, j)] + state.zzhat[(j, i)]);
            state.zzhat[(i, j)] = avg;
            state.zzhat[(j, i)] = avg;
        }
    }
    // observed × censored entries are products with fixed values, so they follow Ẑ exactly
    for &o in &part.obs_idx {
        for &c in cidx {
            let val = v[o] * state.zhat[c];
            state.zzhat[(o, c)] = val;
            state.zzhat[(c, o)] = val;
        }
    }
    Ok(())
}

/// A completed SAEM fit.
#[derive(Debug, Clone)]
pub struct SaemFit {
    pub params: ModelParams,
    /// `Ẑ` used by the final CM-step.
    pub zhat: DVector<f64>,
    pub zzhat: DMatrix<f64>,
    pub loglik: LogLik,
    pub criteria: Criteria,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
    /// Resolved configuration (initial values and search box filled in).
    pub config: SaemConfig,
    pub model: SclModel,
}

impl SaemFit {
    /// Mean of `(β, σ², φ, τ²)` over the trace after discarding its first `perc` share.
    pub fn trace_mean(&self) -> Vec<f64> {
        let skip = (self.config.perc * self.trace.len() as f64).floor() as usize;
        let rows = &self.trace[skip.min(self.trace.len().saturating_sub(1))..];
        let p = self.params.beta.len();
        let mut acc = vec![0.0; p + 3];
        for r in rows {
            for (a, b) in acc.iter_mut().zip(
                r.beta
                    .iter()
                    .chain([r.cov.sigma2, r.cov.phi, r.cov.tau2].iter()),
            ) {
                *a += b;
            }
        }
        acc.iter().map(|a| a / rows.len() as f64).collect()
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.model.spec
    }
}

fn trace_opts(config: &SaemConfig) -> RectProbOptions {
    RectProbOptions {
        eps: 0.0,
        relative: true,
        max_points: config.trace_loglik_points,
        shifts: 10,
        exec: config.execution,
    }
}

/// Likelihood precision used for the reported value.
pub fn final_loglik_options(exec: Execution) -> RectProbOptions {
    RectProbOptions {
        eps: 1e-3,
        relative: true,
        max_points: 200_000,
        shifts: 10,
        exec,
    }
}

/// Starting parameters: caller-supplied covariance with GLS `β`, or the variogram initializer.
fn initial_params(
    model: &SclModel,
    config: &SaemConfig,
    search: &SearchBox,
) -> Result<ModelParams> {
    let z = crate::predict::naive_fill(&model.data);
    let cov = match config.init {
        Some(c) => c,
        None => crate::predict::initial_cov(model, &z)?,
    };
    let cov = search.clamp(cov, &model.spec);
    let sigma = model.sigma(&cov)?;
    let f = crate::linalg::SpdFactor::new(&sigma)?;
    let lx = f.half_solve_mat(&model.x);
    let lz = f.half_solve_vec(&z);
    let beta =
        crate::linalg::SpdFactor::new(&(lx.transpose() * &lx))?.solve_vec(&(lx.transpose() * lz));
    Ok(ModelParams::new(beta, cov))
}

/// Fits the model to `data` by SAEM.
pub fn saem_fit(
    data: &SpatialDataset,
    trend: Trend,
    spec: &CovarianceSpec,
    config: &SaemConfig,
) -> Result<SaemFit> {
    let model = SclModel::new(data.clone(), trend, *spec)?;
    saem_fit_model(model, config)
}

pub fn saem_fit_model(model: SclModel, config: &SaemConfig) -> Result<SaemFit> {
    config.validate()?;
    let search = config
        .search
        .unwrap_or_else(|| SearchBox::for_distance(model.dist.max()));
    search.validate()?;
    let mut params = initial_params(&model, config, &search)?;
    let mut resolved = config.clone();
    resolved.search = Some(search);
    resolved.init = Some(params.cov);

    let w = config.max_iter;
    let k0 = config.warm_up();
    let exact = model.partition.cens_idx.is_empty();
    let mut rng = RngState::new(config.seed);
    let mut state = EStepState::new(crate::predict::naive_fill(&model.data));
    let mut trace = Vec::with_capacity(w);
    let mut prev: Option<(usize, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut final_moments = (state.zhat.clone(), state.zzhat.clone());

    for k in 1..=w {
        let wrap = |e: Error| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        };
        let delta = delta_schedule(k, w, config.pc);
        e_step(
            &mut state,
            &model,
            &params,
            config.m,
            config.gibbs_burn_in,
            delta,
            &mut rng,
        )
        .map_err(wrap)?;

        let nm = NelderMead {
            max_evals: config.inner_max_evals,
            xtol: config.inner_xtol,
            ftol: 1e-10,
            initial_step: if k == 1 { 0.5 } else { 0.1 },
        };
        let mom = Moments {
            zhat: &state.zhat,
            idx: model.partition.cens_idx.clone(),
            excess: excess(&state, &model),
        };
        let prof = Profile::new(&model.x, &model.dist, &model.spec, mom);
        params = prof.maximize(&params.cov, &search, &nm).map_err(wrap)?.1;
        final_moments = (state.zhat.clone(), state.zzhat.clone());
        iterations = k;

        let check = exact || k > k0 || k % 5 == 0;
        let loglik = if check {
            let mut lrng = RngState::new(config.seed).split(LOGLIK_STREAM);
            let l = model
                .loglik(&params, &mut lrng, &trace_opts(config))
                .map_err(wrap)?;
            Some(l.value)
        } else {
            None
        };
        trace.push(TraceRow {
            iteration: k,
            delta,
            beta: params.beta.iter().copied().collect(),
            cov: params.cov,
            loglik,
        });
        if let Some(l) = loglik {
            if let Some((pk, pl)) = prev {
                if pk + 1 == k
                    && (exact || k > k0)
                    && l.is_finite()
                    && pl.is_finite()
                    && (l / pl - 1.0).abs() < config.tol
                {
                    converged = true;
                    break;
                }
            }
            prev = Some((k, l));
        }
    }

    let mut lrng = RngState::new(config.seed).split(FINAL_LOGLIK_STREAM);
    let loglik = model.loglik(&params, &mut lrng, &final_loglik_options(config.execution))?;
    let crit = criteria(loglik.value, model.n_params(), model.n());
    let (zhat, zzhat) = final_moments;
    Ok(SaemFit {
        params,
        zhat,
        zzhat,
        loglik,
        criteria: crit,
        trace,
        converged,
        iterations,
        config: resolved,
        model,
    })
}

fn excess(state: &EStepState, model: &SclModel) -> DMatrix<f64> {
    let c = &model.partition.cens_idx;
    DMatrix::from_fn(c.len(), c.len(), |a, b| {
        state.zzhat[(c[a], c[b])] - state.zhat[c[a]] * state.zhat[c[b]]
    })
}
