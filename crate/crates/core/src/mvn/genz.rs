//! Rectangle probabilities by Genz's separation-of-variables transform, integrated
//! with randomly shifted Richtmyer lattice rules.

use nalgebra::{DMatrix, DVector};

use super::{Rectangle, RngState};
use crate::error::{Error, Result};
use crate::parallel::{map_range, Execution};
use crate::special::{norm_cdf, norm_pdf, norm_ppf, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectProbOptions {
    /// Target standard error. Absolute, or relative to the estimate when `relative`.
    pub eps: f64,
    pub relative: bool,
    /// Cap on the total number of integrand evaluations.
    pub max_points: usize,
    /// Number of independent random lattice shifts (standard error is taken across them).
    pub shifts: usize,
    pub exec: Execution,
}

impl Default for RectProbOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            relative: false,
            max_points: 100_000,
            shifts: 10,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectProb {
    pub prob: f64,
    pub std_error: f64,
    pub n_points: usize,
    /// The point cap was hit before the error target.
    pub cap_reached: bool,
}

/// `P(lower ≤ X ≤ upper)` for `X ~ N(mean, cov)`.
pub fn mvn_rect_prob(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rect: &Rectangle,
    rng: &mut RngState,
    opts: &RectProbOptions,
) -> Result<RectProb> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n || rect.dim() != n {
        return Err(Error::InvalidInput(
            "dimension mismatch in mvn_rect_prob".into(),
        ));
    }
    let a = &rect.lower - mean;
    let b = &rect.upper - mean;
    let exact = |p: f64| RectProb {
        prob: p,
        std_error: 0.0,
        n_points: 0,
        cap_reached: false,
    };
    if n == 0 {
        return Ok(exact(1.0));
    }
    // Unbounded coordinates drop out of the marginal of the rest.
    let active: Vec<usize> = (0..n)
        .filter(|&i| a[i].is_finite() || b[i].is_finite())
        .collect();
    if active.is_empty() {
        return Ok(exact(1.0));
    }
    let a = crate::linalg::select(&a, &active);
    let b = crate::linalg::select(&b, &active);
    let cov = crate::linalg::submatrix(cov, &active, &active);
    if active.len() == 1 {
        let s = cov[(0, 0)].sqrt();
        return Ok(exact(interval_prob(a[0] / s, b[0] / s)));
    }

    let prep = Prepared::new(&a, &b, &cov)?;
    let dim = prep.n - 1;
    let gen: Vec<f64> = primes(dim)
        .iter()
        .map(|&p| (p as f64).sqrt().fract())
        .collect();
    let shifts: Vec<Vec<f64>> = (0..opts.shifts.max(2))
        .map(|_| (0..dim).map(|_| rng.uniform_open()).collect())
        .collect();

    let mut sums = vec![0.0; shifts.len()];
    let mut per_shift = 0usize;
    let mut batch = 64usize;
    loop {
        let start = per_shift;
        let stop = per_shift + batch;
        let partial = map_range(opts.exec, shifts.len(), |s| {
            let mut w = vec![0.0; dim];
            let mut y = vec![0.0; prep.n];
            let mut acc = 0.0;
            for k in start..stop {
                for j in 0..dim {
                    let x = ((k + 1) as f64 * gen[j] + shifts[s][j]).fract();
                    w[j] = (2.0 * x - 1.0).abs();
                }
                acc += prep.integrand(&w, &mut y);
            }
            acc
        });
        for (s, v) in partial.into_iter().enumerate() {
            sums[s] += v;
        }
        per_shift = stop;
        let means: Vec<f64> = sums.iter().map(|s| s / per_shift as f64).collect();
        let k = means.len() as f64;
        let prob = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - prob).powi(2)).sum::<f64>() / (k - 1.0);
        let std_error = (var / k).sqrt();
        let n_points = per_shift * shifts.len();
        let target = if opts.relative {
            opts.eps * prob.abs()
        } else {
            opts.eps
        };
        let done = std_error <= target && per_shift >= 64;
        let cap = n_points >= opts.max_points;
        if done || cap {
            return Ok(RectProb {
                prob,
                std_error,
                n_points,
                cap_reached: cap && !done,
            });
        }
        batch = per_shift
            .min(opts.max_points.saturating_sub(n_points) / shifts.len())
            .max(1);
    }
}

/// `Φ(hi) − Φ(lo)` evaluated on the side of zero that avoids cancellation.
fn interval_prob(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        (norm_sf(lo) - norm_sf(hi)).max(0.0)
    } else {
        (norm_cdf(hi) - norm_cdf(lo)).max(0.0)
    }
}

/// Inverse-CDF draw from the standard normal restricted to `[lo, hi]` at uniform `w`.
fn interval_quantile(lo: f64, hi: f64, w: f64) -> f64 {
    let y = if lo > 0.0 {
        let sl = norm_sf(lo);
        -norm_ppf(sl - w * (sl - norm_sf(hi)))
    } else {
        let cl = norm_cdf(lo);
        norm_ppf(cl + w * (norm_cdf(hi) - cl))
    };
    y.clamp(lo, hi)
}

struct Prepared {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Row-major lower Cholesky factor of the reordered covariance.
    l: Vec<f64>,
}

impl Prepared {
    /// Cholesky factorization with the Genz–Bretz variable prioritization: at each step
    /// the variable with the smallest conditional interval probability goes first.
    fn new(a: &DVector<f64>, b: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let n = a.len();
        let mut a: Vec<f64> = a.iter().copied().collect();
        let mut b: Vec<f64> = b.iter().copied().collect();
        let mut c = cov.clone();
        let mut l = vec![0.0f64; n * n];
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut best = i;
            let mut best_p = f64::INFINITY;
            for j in i..n {
                let var = c[(j, j)] - (0..i).map(|k| l[j * n + k].powi(2)).sum::<f64>();
                if var <= 0.0 {
                    continue;
                }
                let t: f64 = (0..i).map(|k| l[j * n + k] * y[k]).sum();
                let s = var.sqrt();
                let p = interval_prob((a[j] - t) / s, (b[j] - t) / s);
                if p < best_p {
                    best_p = p;
                    best = j;
                }
            }
            if best != i {
                a.swap(i, best);
                b.swap(i, best);
                c.swap_rows(i, best);
                c.swap_columns(i, best);
                for k in 0..i {
                    l.swap(i * n + k, best * n + k);
                }
            }
            let var = c[(i, i)] - (0..i).map(|k| l[i * n + k].powi(2)).sum::<f64>();
            if !(var > 0.0) {
                return Err(Error::SingularCovariance(
                    "rectangle probability covariance".into(),
                ));
            }
            let lii = var.sqrt();
            l[i * n + i] = lii;
            for j in i + 1..n {
                let s: f64 = (0..i).map(|k| l[j * n + k] * l[i * n + k]).sum();
                l[j * n + i] = (c[(j, i)] - s) / lii;
            }
            let t: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            let lo = (a[i] - t) / lii;
            let hi = (b[i] - t) / lii;
            let p = interval_prob(lo, hi);
            y[i] = if p > 1e-300 {
                (pdf_or_zero(lo) - pdf_or_zero(hi)) / p
            } else if lo.is_finite() {
                lo
            } else {
                hi
            };
        }
        Ok(Self { n, a, b, l })
    }

    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let n = self.n;
        let mut f = 1.0;
        for i in 0..n {
            let t: f64 = (0..i).map(|k| self.l[i * n + k] * y[k]).sum();
            let lii = self.l[i * n + i];
            let lo = (self.a[i] - t) / lii;
            let hi = (self.b[i] - t) / lii;
            let p = interval_prob(lo, hi);
            f *= p;
            if f == 0.0 {
                return 0.0;
            }
            if i + 1 < n {
                y[i] = interval_quantile(lo, hi, w[i]);
            }
        }
        f
    }
}

fn pdf_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        norm_pdf(x)
    } else {
        0.0
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out
            .iter()
            .take_while(|&&p| p * p <= k)
            .all(|&p| !k.is_multiple_of(p))
        {
            out.push(k);
        }
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(l: &[f64], u: &[f64]) -> Rectangle {
        Rectangle::new(DVector::from_row_slice(l), DVector::from_row_slice(u)).unwrap()
    }

    #[test]
    fn univariate_half_line() {
        let mut rng = RngState::new(1);
        let p = mvn_rect_prob(
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            &rect(&[0.0], &[f64::INFINITY]),
            &mut rng,
            &RectProbOptions::default(),
        )
        .unwrap();
        assert!((p.prob - 0.5).abs() < 1e-12);
    }

    #[test]
    fn independent_quadrant() {
        let mut rng = RngState::new(2);
        let p = mvn_rect_prob(
            &DVector::zeros(2),
            &DMatrix::identity(2, 2),
            &rect(&[0.0, 0.0], &[f64::INFINITY, f64::INFINITY]),
            &mut rng,
            &RectProbOptions::default(),
        )
        .unwrap();
        assert!((p.prob - 0.25).abs() < 1e-4, "{p:?}");
    }

    #[test]
    fn correlated_quadrant_closed_form() {
        // P(X>0, Y>0) = 1/4 + asin(ρ)/(2π)
        let rho: f64 = 0.5;
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let mut rng = RngState::new(3);
        let p = mvn_rect_prob(
            &DVector::zeros(2),
            &cov,
            &rect(&[0.0, 0.0], &[f64::INFINITY, f64::INFINITY]),
            &mut rng,
            &RectProbOptions::default(),
        )
        .unwrap();
        let exact = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        assert!(
            (p.prob - exact).abs() < 3.0 * p.std_error.max(1e-6),
            "{p:?} vs {exact}"
        );
    }

    #[test]
    fn whole_space_is_one() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let mut rng = RngState::new(4);
        let p = mvn_rect_prob(
            &DVector::zeros(3),
            &cov,
            &Rectangle::unbounded(3),
            &mut rng,
            &Default::default(),
        )
        .unwrap();
        assert!((p.prob - 1.0).abs() < 1e-10);
    }

    #[test]
    fn deterministic_given_seed() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.3, 0.6, 1.0, 0.6, 0.3, 0.6, 1.0]);
        let r = rect(&[-1.0, f64::NEG_INFINITY, 0.0], &[1.0, 0.5, 2.0]);
        let run = |seed| {
            let mut rng = RngState::new(seed);
            mvn_rect_prob(&DVector::zeros(3), &cov, &r, &mut rng, &Default::default()).unwrap()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn far_tail_stays_finite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let mut rng = RngState::new(5);
        let p = mvn_rect_prob(
            &DVector::zeros(2),
            &cov,
            &rect(&[9.0, 9.0], &[f64::INFINITY, f64::INFINITY]),
            &mut rng,
            &RectProbOptions {
                eps: 1e-3,
                relative: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(p.prob > 0.0 && p.prob < norm_sf(9.0));
    }
}
