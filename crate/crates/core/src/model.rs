//! The spatial censored linear model: data, trend, censoring partition and likelihood.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_sigma, CovParams, CovarianceSpec, DistanceMatrix};
use crate::error::{Error, Result};
use crate::linalg::{column_rank, select, select_rows, submatrix, SpdFactor};
use crate::mvn::{logpdf_with, mvn_rect_prob, RectProbOptions, Rectangle, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensType {
    Left,
    Right,
    Interval,
}

impl fmt::Display for CensType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CensType::Left => "left",
            CensType::Right => "right",
            CensType::Interval => "interval",
        })
    }
}

impl FromStr for CensType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(CensType::Left),
            "right" => Ok(CensType::Right),
            "interval" => Ok(CensType::Interval),
            other => Err(Error::Config(format!("unknown censoring type `{other}`"))),
        }
    }
}

/// Observed spatial data `(V, C)`: exact values where `C_i = 0`, intervals where `C_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    pub coords: Vec<[f64; 2]>,
    /// Observed value, or the detection limit for censored rows.
    pub value: DVector<f64>,
    pub cens: Vec<bool>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Extra covariates (`n × q`), used by [`Trend::Other`].
    pub covariates: Option<DMatrix<f64>>,
    pub cens_type: CensType,
}

impl SpatialDataset {
    /// Builds and validates a dataset. The censoring type is inferred from the bounds of
    /// the censored rows.
    pub fn new(
        coords: Vec<[f64; 2]>,
        value: DVector<f64>,
        cens: Vec<bool>,
        lower: DVector<f64>,
        upper: DVector<f64>,
        covariates: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = coords.len();
        if value.len() != n || cens.len() != n || lower.len() != n || upper.len() != n {
            return Err(Error::InvalidInput(
                "dataset columns differ in length".into(),
            ));
        }
        if let Some(c) = &covariates {
            if c.nrows() != n {
                return Err(Error::InvalidInput(
                    "covariate rows do not match the data".into(),
                ));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("covariates must be finite".into()));
            }
        }
        for i in 0..n {
            if !coords[i][0].is_finite() || !coords[i][1].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "row {i}: non-finite coordinates"
                )));
            }
            if cens[i] {
                if !(lower[i] < upper[i]) {
                    return Err(Error::InvalidInput(format!(
                        "row {i}: censored row needs lower < upper, got [{}, {}]",
                        lower[i], upper[i]
                    )));
                }
            } else if !value[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "row {i}: uncensored value must be finite"
                )));
            }
        }
        let all_left = (0..n)
            .filter(|&i| cens[i])
            .all(|i| lower[i] == f64::NEG_INFINITY);
        let all_right = (0..n)
            .filter(|&i| cens[i])
            .all(|i| upper[i] == f64::INFINITY);
        let cens_type = match (all_left, all_right) {
            (true, _) => CensType::Left,
            (false, true) => CensType::Right,
            _ => CensType::Interval,
        };
        Ok(Self {
            coords,
            value,
            cens,
            lower,
            upper,
            covariates,
            cens_type,
        })
    }

    /// Left-censored data: rows flagged in `cens` carry their detection limit in `value`.
    pub fn left_censored(
        coords: Vec<[f64; 2]>,
        value: DVector<f64>,
        cens: Vec<bool>,
        covariates: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = value.len();
        let lower = DVector::from_element(n, f64::NEG_INFINITY);
        let upper = DVector::from_iterator(
            n,
            (0..n).map(|i| if cens[i] { value[i] } else { f64::INFINITY }),
        );
        Self::new(coords, value, cens, lower, upper, covariates)
    }

    /// Fully observed data.
    pub fn uncensored(
        coords: Vec<[f64; 2]>,
        value: DVector<f64>,
        covariates: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = value.len();
        Self::left_censored(coords, value, vec![false; n], covariates)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn n_censored(&self) -> usize {
        self.cens.iter().filter(|&&c| c).count()
    }

    pub fn partition(&self) -> Partition {
        partition(self)
    }

    /// Rows `idx` as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.coords[i]).collect(),
            select(&self.value, idx),
            idx.iter().map(|&i| self.cens[i]).collect(),
            select(&self.lower, idx),
            select(&self.upper, idx),
            self.covariates.as_ref().map(|c| select_rows(c, idx)),
        )
    }

    /// The detection limit of censored row `i`: the finite bound of a one-sided interval.
    pub fn detection_limit(&self, i: usize) -> Option<f64> {
        if !self.cens[i] {
            return None;
        }
        match (self.lower[i].is_finite(), self.upper[i].is_finite()) {
            (false, true) => Some(self.upper[i]),
            (true, false) => Some(self.lower[i]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    /// Constant mean.
    Cte,
    /// Linear in the coordinates.
    First,
    /// Intercept plus user covariates.
    Other,
}

impl FromStr for Trend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cte" => Ok(Trend::Cte),
            "first" | "1st" => Ok(Trend::First),
            "other" => Ok(Trend::Other),
            other => Err(Error::Config(format!(
                "unknown trend `{other}` (cte|first|other)"
            ))),
        }
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Cte => "cte",
            Trend::First => "first",
            Trend::Other => "other",
        })
    }
}

/// Trend design matrix: `[1]`, `[1, x, y]` or `[1, covariates]`.
pub fn build_trend(
    coords: &[[f64; 2]],
    covariates: Option<&DMatrix<f64>>,
    trend: Trend,
) -> Result<DMatrix<f64>> {
    let n = coords.len();
    let x = match trend {
        Trend::Cte => DMatrix::from_element(n, 1, 1.0),
        Trend::First => DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => coords[i][0],
            _ => coords[i][1],
        }),
        Trend::Other => {
            let c = covariates
                .ok_or_else(|| Error::ModelSpec("trend `other` needs covariates".into()))?;
            if c.nrows() != n {
                return Err(Error::ModelSpec(
                    "covariate rows do not match coordinates".into(),
                ));
            }
            DMatrix::from_fn(
                n,
                c.ncols() + 1,
                |i, j| if j == 0 { 1.0 } else { c[(i, j - 1)] },
            )
        }
    };
    if column_rank(&x) < x.ncols() {
        return Err(Error::ModelSpec(format!(
            "trend matrix ({} columns) is rank deficient",
            x.ncols()
        )));
    }
    Ok(x)
}

/// Regression coefficients and covariance parameters `θ = (β, σ², φ, τ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub beta: DVector<f64>,
    pub cov: CovParams,
}

impl ModelParams {
    pub fn new(beta: DVector<f64>, cov: CovParams) -> Self {
        Self { beta, cov }
    }

    /// `(β, σ², φ, τ²)` flattened.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.beta.iter().copied().collect();
        v.extend([self.cov.sigma2, self.cov.phi, self.cov.tau2]);
        v
    }
}

/// Observed/censored index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub obs_idx: Vec<usize>,
    pub cens_idx: Vec<usize>,
}

impl Partition {
    /// Reordered position → original row (`obs` first, then `cens`).
    pub fn permutation(&self) -> Vec<usize> {
        self.obs_idx
            .iter()
            .chain(self.cens_idx.iter())
            .copied()
            .collect()
    }

    /// `(Σ^{oo}, Σ^{oc}, Σ^{cc})`.
    pub fn blocks(&self, sigma: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            submatrix(sigma, &self.obs_idx, &self.obs_idx),
            submatrix(sigma, &self.obs_idx, &self.cens_idx),
            submatrix(sigma, &self.cens_idx, &self.cens_idx),
        )
    }
}

pub fn partition(data: &SpatialDataset) -> Partition {
    let (cens_idx, obs_idx): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| data.cens[i]);
    Partition { obs_idx, cens_idx }
}

/// Observed-data log-likelihood with the Monte-Carlo error of its censored factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    /// Standard error of `value` (delta method on the rectangle probability).
    pub std_error: f64,
    /// The censored-block probability estimate was zero.
    pub zero_probability: bool,
}

/// Everything about a dataset that stays fixed while parameters change.
#[derive(Debug, Clone)]
pub struct SclModel {
    pub data: SpatialDataset,
    pub trend: Trend,
    pub spec: CovarianceSpec,
    pub x: DMatrix<f64>,
    pub dist: DistanceMatrix,
    pub partition: Partition,
}

impl SclModel {
    pub fn new(data: SpatialDataset, trend: Trend, spec: CovarianceSpec) -> Result<Self> {
        spec.validate()?;
        let x = build_trend(&data.coords, data.covariates.as_ref(), trend)?;
        if data.n() < x.ncols() + 2 {
            return Err(Error::InvalidInput(format!(
                "{} rows are too few for {} trend columns (need at least p + 2)",
                data.n(),
                x.ncols()
            )));
        }
        let dist = DistanceMatrix::from_coords(&data.coords);
        let partition = data.partition();
        Ok(Self {
            data,
            trend,
            spec,
            x,
            dist,
            partition,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of free parameters `k = p + 3` (or `p + 2` with a fixed nugget).
    pub fn n_params(&self) -> usize {
        self.p() + self.spec.n_free()
    }

    pub fn sigma(&self, cov: &CovParams) -> Result<DMatrix<f64>> {
        build_sigma(&self.dist, &self.spec, cov)
    }

    /// Conditional law `Z^c | Z^o ~ N(μ, S)` of the censored block.
    pub fn conditional_cens_given_obs(
        &self,
        params: &ModelParams,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let sigma = self.sigma(&params.cov)?;
        self.conditional_with_sigma(params, &sigma)
    }

    pub(crate) fn conditional_with_sigma(
        &self,
        params: &ModelParams,
        sigma: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let part = &self.partition;
        let mean = &self.x * &params.beta;
        let mu_c = select(&mean, &part.cens_idx);
        let (s_oo, s_oc, s_cc) = part.blocks(sigma);
        if part.cens_idx.is_empty() {
            return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
        }
        if part.obs_idx.is_empty() {
            return Ok((mu_c, s_cc));
        }
        let f = SpdFactor::new(&s_oo)?;
        let resid = select(&self.data.value, &part.obs_idx) - select(&mean, &part.obs_idx);
        let w = f.solve_vec(&resid);
        let mu = mu_c + s_oc.transpose() * w;
        let half = f.half_solve_mat(&s_oc);
        let s = crate::linalg::symmetrize(&(s_cc - half.transpose() * half));
        Ok((mu, s))
    }

    /// `log φ(Z^o; X^oβ, Σ^{oo}) + log P(Z^c ∈ V^c | Z^o)`.
    pub fn loglik(
        &self,
        params: &ModelParams,
        rng: &mut RngState,
        opts: &RectProbOptions,
    ) -> Result<LogLik> {
        let sigma = self.sigma(&params.cov)?;
        let part = &self.partition;
        let mean = &self.x * &params.beta;
        let mut value = 0.0;
        if !part.obs_idx.is_empty() {
            let s_oo = submatrix(&sigma, &part.obs_idx, &part.obs_idx);
            let f = SpdFactor::new(&s_oo)?;
            let resid = select(&self.data.value, &part.obs_idx) - select(&mean, &part.obs_idx);
            value += logpdf_with(&f, &resid);
        }
        if part.cens_idx.is_empty() {
            return Ok(LogLik {
                value,
                std_error: 0.0,
                zero_probability: false,
            });
        }
        let (mu, s) = self.conditional_with_sigma(params, &sigma)?;
        let rect = Rectangle::new(
            select(&self.data.lower, &part.cens_idx),
            select(&self.data.upper, &part.cens_idx),
        )?;
        let p = mvn_rect_prob(&mu, &s, &rect, rng, opts)?;
        if !(p.prob > 0.0) {
            return Ok(LogLik {
                value: f64::NEG_INFINITY,
                std_error: f64::INFINITY,
                zero_probability: true,
            });
        }
        Ok(LogLik {
            value: value + p.prob.ln(),
            std_error: p.std_error / p.prob,
            zero_probability: false,
        })
    }
}

/// Closed-form Gaussian log-likelihood of fully observed data `z`.
pub fn gaussian_loglik(
    z: &DVector<f64>,
    x: &DMatrix<f64>,
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    params: &ModelParams,
) -> Result<f64> {
    let sigma = build_sigma(dist, spec, &params.cov)?;
    let f = SpdFactor::new(&sigma)?;
    Ok(logpdf_with(&f, &(z - x * &params.beta)))
}

/// Likelihood-based information criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    /// Undefined when `n ≤ k + 1`.
    pub aicc: Option<f64>,
}

/// AIC, BIC and the small-sample corrected AIC for `k` parameters and `n` sites.
pub fn criteria(loglik: f64, k: usize, n: usize) -> Criteria {
    let kf = k as f64;
    let aic = -2.0 * loglik + 2.0 * kf;
    let bic = if n == 0 {
        -2.0 * loglik
    } else {
        -2.0 * loglik + kf * (n as f64).ln()
    };
    let aicc = (n > k + 1).then(|| aic + 2.0 * kf * (kf + 1.0) / (n as f64 - kf - 1.0));
    Criteria { aic, bic, aicc }
}
