//! Censored Gaussian random fields for tests, benchmarks and simulation studies.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_sigma, CovFamily, CovParams, CovarianceSpec, DistanceMatrix};
use crate::error::{Error, Result};
use crate::linalg::{select, select_rows, SpdFactor};
use crate::model::{build_trend, CensType, SpatialDataset, Trend};
use crate::mvn::RngState;

/// Where the sites come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSource {
    Supplied(Vec<[f64; 2]>),
    /// Uniform over `[x0, x1] × [y0, y1]`.
    Uniform {
        x: [f64; 2],
        y: [f64; 2],
    },
    /// Each axis drawn without replacement from `points` equally spaced values on `[lo, hi]`.
    AxisSample {
        lo: f64,
        hi: f64,
        points: usize,
    },
}

/// Covariates entering a [`Trend::Other`] design (the intercept is added separately).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSource {
    None,
    Supplied(DMatrix<f64>),
    /// One column per range, uniform on `[a, b]`.
    Uniform(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_est: usize,
    pub n_pred: usize,
    pub trend: Trend,
    pub beta: Vec<f64>,
    pub cov: CovParams,
    pub spec: CovarianceSpec,
    /// Share of the estimation block that is censored.
    pub cens_level: f64,
    pub cens_type: CensType,
    pub coords: CoordSource,
    pub covariates: CovariateSource,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::matern_outlier_design(1)
    }
}

impl SimConfig {
    /// 200 estimation and 100 prediction sites on a 1..30 square, Matérn (κ = 0.3) errors with
    /// `σ² = 3, φ = 0.3`, no nugget, `β = (5, 3, 1)` on `[1, U(0,1), U(2,3)]` and 15% left censoring.
    pub fn matern_outlier_design(seed: u64) -> Self {
        Self {
            n_est: 200,
            n_pred: 100,
            trend: Trend::Other,
            beta: vec![5.0, 3.0, 1.0],
            cov: CovParams::new(3.0, 0.3, 0.0),
            spec: CovarianceSpec::new(CovFamily::Matern, 0.3).with_fixed_nugget(0.0),
            cens_level: 0.15,
            cens_type: CensType::Left,
            coords: CoordSource::AxisSample {
                lo: 1.0,
                hi: 30.0,
                points: 400,
            },
            covariates: CovariateSource::Uniform(vec![[0.0, 1.0], [2.0, 3.0]]),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_est < 2 {
            return Err(Error::Config("n_est must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.cens_level) {
            return Err(Error::Config(format!(
                "cens_level must lie in [0, 1), got {}",
                self.cens_level
            )));
        }
        if self.cens_type == CensType::Interval {
            return Err(Error::Config("simulation censors on one side only".into()));
        }
        self.spec.validate()?;
        self.cov.validate()?;
        let n = self.n_est + self.n_pred;
        match &self.coords {
            CoordSource::Supplied(c) if c.len() != n => {
                return Err(Error::Config(format!(
                    "{} coordinates supplied for {n} sites",
                    c.len()
                )))
            }
            CoordSource::AxisSample { points, .. } if *points < n => {
                return Err(Error::Config(format!(
                    "{points} axis values cannot give {n} distinct draws"
                )))
            }
            CoordSource::Uniform { x, y } if !(x[0] < x[1] && y[0] < y[1]) => {
                return Err(Error::Config("empty coordinate box".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Output of [`simulate_scl`].
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Estimation block with censoring applied.
    pub data: SpatialDataset,
    /// Latent responses of the estimation block before censoring.
    pub latent: DVector<f64>,
    pub coords_pred: Vec<[f64; 2]>,
    pub x_pred: DMatrix<f64>,
    /// Covariates of the prediction block (for [`Trend::Other`]).
    pub covariates_pred: Option<DMatrix<f64>>,
    pub z_pred: DVector<f64>,
    /// Detection limit, `None` without censoring.
    pub lod: Option<f64>,
}

fn axis_values(lo: f64, hi: f64, points: usize, n: usize, rng: &mut RngState) -> Vec<f64> {
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    sample(rng, points, n)
        .into_iter()
        .map(|k| lo + step * k as f64)
        .collect()
}

fn draw_coords(src: &CoordSource, n: usize, rng: &mut RngState) -> Vec<[f64; 2]> {
    match src {
        CoordSource::Supplied(c) => c.clone(),
        CoordSource::Uniform { x, y } => (0..n)
            .map(|_| {
                let u = rng.uniform_open();
                let v = rng.uniform_open();
                [x[0] + (x[1] - x[0]) * u, y[0] + (y[1] - y[0]) * v]
            })
            .collect(),
        CoordSource::AxisSample { lo, hi, points } => {
            let xs = axis_values(*lo, *hi, *points, n, rng);
            let ys = axis_values(*lo, *hi, *points, n, rng);
            xs.into_iter().zip(ys).map(|(a, b)| [a, b]).collect()
        }
    }
}

fn draw_covariates(
    src: &CovariateSource,
    n: usize,
    rng: &mut RngState,
) -> Result<Option<DMatrix<f64>>> {
    Ok(match src {
        CovariateSource::None => None,
        CovariateSource::Supplied(m) => {
            if m.nrows() != n {
                return Err(Error::Config(format!(
                    "{} covariate rows supplied for {n} sites",
                    m.nrows()
                )));
            }
            Some(m.clone())
        }
        CovariateSource::Uniform(ranges) => {
            let mut m = DMatrix::zeros(n, ranges.len());
            for (j, r) in ranges.iter().enumerate() {
                for i in 0..n {
                    m[(i, j)] = r[0] + (r[1] - r[0]) * rng.uniform_open();
                }
            }
            Some(m)
        }
    })
}

/// Draws `Z ~ N(Xβ, Σ)` at all sites and censors the estimation block at the
/// `⌈α·n_est⌉`-th order statistic.
pub fn simulate_scl(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let n = cfg.n_est + cfg.n_pred;
    let mut rng = RngState::new(cfg.seed);
    let coords = draw_coords(&cfg.coords, n, &mut rng);
    for i in 0..n {
        for j in 0..i {
            if coords[i] == coords[j] {
                return Err(Error::Config(format!("sites {j} and {i} coincide")));
            }
        }
    }
    let covs = draw_covariates(&cfg.covariates, n, &mut rng)?;
    let x = build_trend(&coords, covs.as_ref(), cfg.trend)?;
    if x.ncols() != cfg.beta.len() {
        return Err(Error::Config(format!(
            "beta has {} entries, the trend has {} columns",
            cfg.beta.len(),
            x.ncols()
        )));
    }
    let beta = DVector::from_column_slice(&cfg.beta);
    let sigma = build_sigma(&DistanceMatrix::from_coords(&coords), &cfg.spec, &cfg.cov)?;
    let l = SpdFactor::new(&sigma)?.l();
    let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let z = &x * beta + l * e;

    let est: Vec<usize> = (0..cfg.n_est).collect();
    let pred: Vec<usize> = (cfg.n_est..n).collect();
    let latent = select(&z, &est);
    let k = (cfg.cens_level * cfg.n_est as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = est.clone();
    match cfg.cens_type {
        CensType::Left => order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b))),
        _ => order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]).then(a.cmp(&b))),
    }
    let mut cens = vec![false; cfg.n_est];
    let mut value = latent.clone();
    let mut lower = DVector::from_element(cfg.n_est, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(cfg.n_est, f64::INFINITY);
    let lod = (k > 0).then(|| latent[order[k - 1]]);
    if let Some(lod) = lod {
        for &i in &order[..k] {
            cens[i] = true;
            value[i] = lod;
            match cfg.cens_type {
                CensType::Left => upper[i] = lod,
                _ => lower[i] = lod,
            }
        }
    }
    let covs_est = covs.as_ref().map(|c| select_rows(c, &est));
    let data = SpatialDataset::new(
        coords[..cfg.n_est].to_vec(),
        value,
        cens,
        lower,
        upper,
        covs_est,
    )?;
    Ok(Simulation {
        data,
        latent,
        coords_pred: coords[cfg.n_est..].to_vec(),
        x_pred: select_rows(&x, &pred),
        covariates_pred: covs.as_ref().map(|c| select_rows(c, &pred)),
        z_pred: select(&z, &pred),
        lod,
    })
}

/// Adds `magnitude_sd · sd(V)` to the indexed responses; `sd` is taken once, before any shift.
pub fn inject_outliers(
    data: &SpatialDataset,
    indices: &[usize],
    magnitude_sd: f64,
) -> Result<SpatialDataset> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidInput(
            "need at least two rows to compute a standard deviation".into(),
        ));
    }
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidInput(format!(
                "index {i} is out of range for {n} rows"
            )));
        }
        if data.cens[i] {
            return Err(Error::InvalidInput(format!("row {i} is censored")));
        }
    }
    let mean = data.value.mean();
    let sd = (data.value.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut out = data.clone();
    for &i in indices {
        out.value[i] += magnitude_sd * sd;
    }
    Ok(out)
}
