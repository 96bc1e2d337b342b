//! Empirical semivariogram and a weighted least-squares fit of the parametric model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{dist, CovParams, CovarianceSpec};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::model::SclModel;
use crate::optim::NelderMead;

/// Binned Matheron semivariogram. Empty bins are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub centers: Vec<f64>,
    pub semivariance: Vec<f64>,
    pub counts: Vec<usize>,
}

/// `γ̂(h) = 1/(2N_h) Σ (z_i − z_j)²` over `n_bins` equal-width bins on `[0, max_dist]`.
/// Without `max_dist` half of the largest distance is used.
pub fn empirical_variogram(
    coords: &[[f64; 2]],
    z: &DVector<f64>,
    n_bins: usize,
    max_dist: Option<f64>,
) -> Result<Variogram> {
    let n = coords.len();
    if n < 2 || z.len() != n {
        return Err(Error::InvalidInput(
            "variogram needs at least two sites with one value each".into(),
        ));
    }
    if n_bins == 0 {
        return Err(Error::Config("variogram needs at least one bin".into()));
    }
    let max_dist = match max_dist {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => {
            return Err(Error::Config(format!(
                "variogram cutoff must be positive, got {d}"
            )))
        }
        None => {
            let mut m: f64 = 0.0;
            for i in 0..n {
                for j in 0..i {
                    m = m.max(dist(coords[i], coords[j]));
                }
            }
            if m > 0.0 {
                0.5 * m
            } else {
                1.0
            }
        }
    };
    let width = max_dist / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for i in 0..n {
        for j in 0..i {
            let h = dist(coords[i], coords[j]);
            if h > max_dist {
                continue;
            }
            let b = ((h / width) as usize).min(n_bins - 1);
            sums[b] += (z[i] - z[j]).powi(2);
            counts[b] += 1;
        }
    }
    let mut v = Variogram {
        centers: Vec::new(),
        semivariance: Vec::new(),
        counts: Vec::new(),
    };
    for b in 0..n_bins {
        if counts[b] > 0 {
            v.centers.push((b as f64 + 0.5) * width);
            v.semivariance.push(sums[b] / (2.0 * counts[b] as f64));
            v.counts.push(counts[b]);
        }
    }
    Ok(v)
}

/// Model semivariance `τ² + σ²(1 − ρ(h))` for `h > 0`.
pub fn model_semivariance(spec: &CovarianceSpec, cov: &CovParams, h: f64) -> f64 {
    if h == 0.0 {
        0.0
    } else {
        cov.tau2 + cov.sigma2 * (1.0 - spec.correlation(h, cov.phi))
    }
}

/// Best `(σ², τ²)` for a given `φ`, with the weighted residual sum of squares.
fn linear_part(v: &Variogram, spec: &CovarianceSpec, phi: f64) -> (f64, f64, f64) {
    let g: Vec<f64> = v
        .centers
        .iter()
        .map(|&h| 1.0 - spec.correlation(h, phi))
        .collect();
    let w: Vec<f64> = v.counts.iter().map(|&c| c as f64).collect();
    let y = &v.semivariance;
    let sse = |s: f64, t: f64| -> f64 {
        (0..g.len())
            .map(|i| w[i] * (y[i] - s * g[i] - t).powi(2))
            .sum()
    };
    let floor = 1e-10 * y.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let fit_sigma = |t: f64| -> f64 {
        let num: f64 = (0..g.len()).map(|i| w[i] * g[i] * (y[i] - t)).sum();
        let den: f64 = (0..g.len()).map(|i| w[i] * g[i] * g[i]).sum();
        if den > 0.0 {
            (num / den).max(floor)
        } else {
            floor
        }
    };
    if spec.nugget_fixed {
        let t = spec.fixed_nugget_value;
        let s = fit_sigma(t);
        return (s, t, sse(s, t));
    }
    let a = DMatrix::from_fn(2, 2, |r, c| {
        (0..g.len())
            .map(|i| {
                let br = if r == 0 { g[i] } else { 1.0 };
                let bc = if c == 0 { g[i] } else { 1.0 };
                w[i] * br * bc
            })
            .sum()
    });
    let b = DVector::from_fn(2, |r, _| {
        (0..g.len())
            .map(|i| w[i] * if r == 0 { g[i] } else { 1.0 } * y[i])
            .sum()
    });
    let sol = SpdFactor::new(&a).ok().map(|f| f.solve_vec(&b));
    match sol {
        Some(s) if s[0] > 0.0 && s[1] >= 0.0 => (s[0], s[1], sse(s[0], s[1])),
        _ => {
            let s = fit_sigma(0.0);
            (s, 0.0, sse(s, 0.0))
        }
    }
}

/// Weighted least-squares fit (weights = pair counts) of the covariance model to `v`.
pub fn wls_variofit(v: &Variogram, spec: &CovarianceSpec) -> Result<CovParams> {
    spec.validate()?;
    if v.centers.len() < 3 {
        return Err(Error::Numerical(format!(
            "variogram fit needs at least 3 nonempty bins, got {}",
            v.centers.len()
        )));
    }
    let hmax = v.centers.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = ((hmax * 1e-3).ln(), (hmax * 10.0).ln());
    let obj = |lp: f64| linear_part(v, spec, lp.exp()).2;
    let grid = 40;
    let mut best = (lo, f64::INFINITY);
    for g in 0..=grid {
        let lp = lo + (hi - lo) * g as f64 / grid as f64;
        let f = obj(lp);
        if f < best.1 {
            best = (lp, f);
        }
    }
    let nm = NelderMead {
        max_evals: 200,
        xtol: 1e-8,
        ftol: 0.0,
        initial_step: (hi - lo) / grid as f64,
    };
    let m = nm.minimize(|x| obj(x[0]), &[best.0], &[lo], &[hi])?;
    let phi = m.x[0].exp();
    let (s, t, _) = linear_part(v, spec, phi);
    Ok(CovParams::new(s, phi, t))
}

/// Starting covariance parameters from the residual variogram of `z` after OLS on the trend.
pub(crate) fn initial_cov(model: &SclModel, z: &DVector<f64>) -> Result<CovParams> {
    let x = &model.x;
    let xtx = x.transpose() * x;
    let beta = SpdFactor::new(&xtx)?.solve_vec(&(x.transpose() * z));
    let resid = z - x * beta;
    let n = resid.len() as f64;
    let var = (resid.norm_squared() / (n - 1.0).max(1.0)).max(1e-12);
    let max_d = model.dist.max();
    let fallback = CovParams::new(
        var,
        (max_d / 10.0).max(1e-6),
        if model.spec.nugget_fixed {
            model.spec.fixed_nugget_value
        } else {
            0.1 * var
        },
    );
    let fitted = empirical_variogram(&model.data.coords, &resid, 12, Some(0.5 * max_d))
        .and_then(|v| wls_variofit(&v, &model.spec));
    let mut cov = match fitted {
        Ok(c) if c.validate().is_ok() && c.sigma2 > 1e-6 * var => c,
        _ => fallback,
    };
    if !model.spec.nugget_fixed && cov.tau2 < 0.01 * cov.sigma2 {
        cov.tau2 = 0.01 * cov.sigma2;
    }
    Ok(cov)
}
