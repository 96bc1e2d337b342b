//! Gibbs sampling from truncated multivariate normals.

use nalgebra::{DMatrix, DVector};

use super::{Rectangle, RngState};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::special::{norm_cdf, norm_ppf, norm_sf};

/// Beyond this many standard deviations into a tail the inverse CDF is replaced by
/// exponential rejection sampling.
const TAIL_SWITCH: f64 = 7.0;

/// Draws `Z ~ N(0, 1)` conditioned on `a ≤ Z ≤ b`.
///
/// Inverse-CDF sampling on the side of zero that keeps the interval mass away from 1;
/// intervals entirely beyond [`TAIL_SWITCH`] use Robert's (1995) translated-exponential
/// rejection sampler, which needs no tail probabilities at all. The result always lies
/// in `[a, b]`.
pub fn sample_truncated_std(a: f64, b: f64, rng: &mut RngState) -> f64 {
    debug_assert!(a < b);
    if a >= TAIL_SWITCH {
        return tail_rejection(a, b, rng);
    }
    if b <= -TAIL_SWITCH {
        return -tail_rejection(-b, -a, rng);
    }
    let u = rng.uniform_open();
    let z = if a > 0.0 {
        let sa = norm_sf(a);
        -norm_ppf(sa - u * (sa - norm_sf(b)))
    } else if b < 0.0 {
        let cb = norm_cdf(b);
        norm_ppf(cb - u * (cb - norm_cdf(a)))
    } else {
        let ca = norm_cdf(a);
        norm_ppf(ca + u * (norm_cdf(b) - ca))
    };
    if z.is_finite() {
        z.clamp(a, b)
    } else if a.is_finite() && b.is_finite() {
        0.5 * (a + b)
    } else if a.is_finite() {
        a
    } else {
        b
    }
}

fn tail_rejection(a: f64, b: f64, rng: &mut RngState) -> f64 {
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    let width = b - a;
    // mass of the exponential proposal inside [a, b]
    let trunc = if width.is_finite() {
        1.0 - (-lambda * width).exp()
    } else {
        1.0
    };
    for _ in 0..10_000 {
        let u = rng.uniform_open();
        let x = a - (1.0 - u * trunc).ln() / lambda;
        let accept = (-0.5 * (x - lambda).powi(2)).exp();
        if rng.uniform_open() <= accept {
            return x.clamp(a, b);
        }
    }
    // Acceptance is above 0.7 for every a ≥ TAIL_SWITCH, so this is unreachable in practice.
    a
}

/// Coordinate-wise Gibbs sampler for `TN(mean, cov; rect)` that keeps its chain state,
/// so consecutive calls continue the same Markov chain.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    cond_sd: DVector<f64>,
    rect: Rectangle,
    state: DVector<f64>,
}

impl GibbsSampler {
    /// `start` seeds the chain; it is projected into the rectangle. Without it the chain
    /// starts from the mean projected into the rectangle.
    pub fn new(
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        rect: &Rectangle,
        start: Option<&DVector<f64>>,
    ) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || rect.dim() != n {
            return Err(Error::InvalidInput(
                "dimension mismatch in truncated normal sampler".into(),
            ));
        }
        let precision = SpdFactor::new(cov)?.inverse();
        let cond_sd = DVector::from_iterator(n, (0..n).map(|i| precision[(i, i)].recip().sqrt()));
        let init = start.filter(|s| s.len() == n).unwrap_or(mean);
        let state = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let v = init[i];
                if v.is_finite() {
                    v.clamp(rect.lower[i], rect.upper[i])
                } else if rect.lower[i].is_finite() {
                    rect.lower[i]
                } else {
                    rect.upper[i]
                }
            }),
        );
        Ok(Self {
            mean: mean.clone(),
            precision,
            cond_sd,
            rect: rect.clone(),
            state,
        })
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// One systematic-scan sweep over all coordinates.
    pub fn sweep(&mut self, rng: &mut RngState) {
        let n = self.mean.len();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    s += self.precision[(i, j)] * (self.state[j] - self.mean[j]);
                }
            }
            let mu = self.mean[i] - s / self.precision[(i, i)];
            let sd = self.cond_sd[i];
            let a = (self.rect.lower[i] - mu) / sd;
            let b = (self.rect.upper[i] - mu) / sd;
            let z = sample_truncated_std(a, b, rng);
            let x = (mu + sd * z).clamp(self.rect.lower[i], self.rect.upper[i]);
            self.state[i] = x;
        }
    }

    /// Runs `burn_in` sweeps, then records `n_samples` states taken every `thin` sweeps.
    pub fn run(
        &mut self,
        n_samples: usize,
        burn_in: usize,
        thin: usize,
        rng: &mut RngState,
    ) -> DMatrix<f64> {
        let n = self.mean.len();
        let thin = thin.max(1);
        for _ in 0..burn_in {
            self.sweep(rng);
        }
        let mut out = DMatrix::zeros(n_samples, n);
        for r in 0..n_samples {
            for _ in 0..thin {
                self.sweep(rng);
            }
            out.row_mut(r).copy_from(&self.state.transpose());
        }
        out
    }
}

/// `n_samples × n` draws from `TN(mean, cov; rect)`.
pub fn tmvn_gibbs(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rect: &Rectangle,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    rng: &mut RngState,
) -> Result<DMatrix<f64>> {
    let mut sampler = GibbsSampler::new(mean, cov, rect, None)?;
    Ok(sampler.run(n_samples, burn_in, thin, rng))
}

/// Monte-Carlo truncated moments with batch-means standard errors.
#[derive(Debug, Clone)]
pub struct TmvnMoments {
    pub first: DVector<f64>,
    /// Uncentred second moment `E[ZZᵀ]`.
    pub second: DMatrix<f64>,
    pub first_se: DVector<f64>,
    pub second_se: DMatrix<f64>,
}

/// First and second moments of `TN(mean, cov; rect)` from a Gibbs chain
/// (burn-in 100 sweeps, no thinning).
pub fn tmvn_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rect: &Rectangle,
    n_samples: usize,
    rng: &mut RngState,
) -> Result<TmvnMoments> {
    let draws = tmvn_gibbs(mean, cov, rect, n_samples, 100, 1, rng)?;
    Ok(moments_from_draws(&draws))
}

pub(crate) fn moments_from_draws(draws: &DMatrix<f64>) -> TmvnMoments {
    let (m, n) = draws.shape();
    let batches = if m >= 40 { 20 } else { m.max(1) };
    let per = m / batches;
    let mut first = DVector::zeros(n);
    let mut second = DMatrix::zeros(n, n);
    let mut b_first: Vec<DVector<f64>> = Vec::with_capacity(batches);
    let mut b_second: Vec<DMatrix<f64>> = Vec::with_capacity(batches);
    for b in 0..batches {
        let mut f = DVector::zeros(n);
        let mut s = DMatrix::zeros(n, n);
        for r in b * per..(b + 1) * per {
            let z = draws.row(r).transpose();
            s += &z * z.transpose();
            f += z;
        }
        b_first.push(f / per as f64);
        b_second.push(s / per as f64);
    }
    for r in 0..m {
        let z = draws.row(r).transpose();
        second += &z * z.transpose();
        first += z;
    }
    let inv = 1.0 / m.max(1) as f64;
    first *= inv;
    second *= inv;
    second = crate::linalg::symmetrize(&second);
    let k = batches as f64;
    let bf_mean = b_first.iter().fold(DVector::zeros(n), |acc, v| acc + v) / k;
    let bs_mean = b_second.iter().fold(DMatrix::zeros(n, n), |acc, v| acc + v) / k;
    let denom = (k * (k - 1.0)).max(1.0);
    let first_se = b_first
        .iter()
        .fold(DVector::zeros(n), |acc: DVector<f64>, v| {
            acc + (v - &bf_mean).map(|d| d * d)
        })
        .map(|v| (v / denom).sqrt());
    let second_se = b_second
        .iter()
        .fold(DMatrix::zeros(n, n), |acc: DMatrix<f64>, v| {
            acc + (v - &bs_mean).map(|d| d * d)
        })
        .map(|v| (v / denom).sqrt());
    TmvnMoments {
        first,
        second,
        first_se,
        second_se,
    }
}
