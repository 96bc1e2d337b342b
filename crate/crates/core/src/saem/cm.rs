//! Conditional maximization of `Q(θ | θ̂)` given the approximated sufficient statistics.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{correlation_matrix, CovParams, CovarianceSpec, DistanceMatrix};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::model::ModelParams;
use crate::optim::NelderMead;

use super::SearchBox;

/// How the covariance parameters enter the inner search.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    /// `(log φ, log ν²)` with `σ²` profiled.
    Free,
    /// `log φ` with `Σ = σ² R(φ)` and `σ²` profiled.
    ZeroNugget,
    /// `(log φ, log σ²)` with the nugget held at the given value.
    FixedNugget(f64),
}

impl Mode {
    fn of(spec: &CovarianceSpec) -> Self {
        match (spec.nugget_fixed, spec.fixed_nugget_value) {
            (false, _) => Mode::Free,
            (true, 0.0) => Mode::ZeroNugget,
            (true, t) => Mode::FixedNugget(t),
        }
    }
}

/// `Ẑ` and the part of `ẐẐᵀ` that is not the outer product of `Ẑ`.
///
/// Only rows touched by the Monte-Carlo step carry an excess, so it is kept as a
/// small block on `idx`.
#[derive(Debug, Clone)]
pub(crate) struct Moments<'a> {
    pub zhat: &'a DVector<f64>,
    pub idx: Vec<usize>,
    pub excess: DMatrix<f64>,
}

impl<'a> Moments<'a> {
    pub fn new(zhat: &'a DVector<f64>, zzhat: &DMatrix<f64>) -> Self {
        let n = zhat.len();
        let idx: Vec<usize> = (0..n)
            .filter(|&i| (0..n).any(|j| zzhat[(i, j)] != zhat[i] * zhat[j]))
            .collect();
        let excess = DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            let (i, j) = (idx[a], idx[b]);
            zzhat[(i, j)] - zhat[i] * zhat[j]
        });
        Self { zhat, idx, excess }
    }

    pub fn exact(zhat: &'a DVector<f64>) -> Self {
        Self {
            zhat,
            idx: Vec::new(),
            excess: DMatrix::zeros(0, 0),
        }
    }
}

/// GLS fit of `Ẑ` against a covariance `M`.
struct Gls {
    beta: DVector<f64>,
    /// `tr(ẐẐᵀM⁻¹) − 2ẐᵀM⁻¹Xβ + βᵀXᵀM⁻¹Xβ` at the GLS `β`.
    quad: f64,
    log_det: f64,
}

fn gls(m: &DMatrix<f64>, x: &DMatrix<f64>, mom: &Moments<'_>) -> Result<Gls> {
    let f = SpdFactor::new(m)?;
    let lx = f.half_solve_mat(x);
    let lz = f.half_solve_vec(mom.zhat);
    let xtx = lx.transpose() * &lx;
    let beta = SpdFactor::new(&xtx)?.solve_vec(&(lx.transpose() * &lz));
    let u = lz - &lx * &beta;
    let mut quad = u.norm_squared();
    if !mom.idx.is_empty() {
        let n = m.nrows();
        let mut e = DMatrix::zeros(n, mom.idx.len());
        for (a, &i) in mom.idx.iter().enumerate() {
            e[(i, a)] = 1.0;
        }
        let y = f.half_solve_mat(&e);
        let ye = &y * &mom.excess;
        quad += ye.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(Gls {
        beta,
        quad,
        log_det: f.log_det(),
    })
}

/// Profiled `Q` as a function of the inner search variables.
pub(crate) struct Profile<'a> {
    x: &'a DMatrix<f64>,
    dist: &'a DistanceMatrix,
    spec: &'a CovarianceSpec,
    mom: Moments<'a>,
    mode: Mode,
}

impl<'a> Profile<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        dist: &'a DistanceMatrix,
        spec: &'a CovarianceSpec,
        mom: Moments<'a>,
    ) -> Self {
        Self {
            x,
            dist,
            spec,
            mom,
            mode: Mode::of(spec),
        }
    }

    fn n(&self) -> f64 {
        self.mom.zhat.len() as f64
    }

    /// `Q` up to the `−n/2·log 2π` constant, and the parameters attaining it.
    pub fn eval(&self, v: &[f64]) -> Result<(f64, ModelParams)> {
        let phi = v[0].exp();
        let r = correlation_matrix(self.dist, self.spec, phi);
        let n = self.n();
        match self.mode {
            Mode::Free | Mode::ZeroNugget => {
                let nu2 = if self.mode == Mode::Free {
                    v[1].exp()
                } else {
                    0.0
                };
                let mut psi = r;
                for i in 0..psi.nrows() {
                    psi[(i, i)] += nu2;
                }
                let g = gls(&psi, self.x, &self.mom)?;
                let sigma2 = g.quad / n;
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "profiled variance {sigma2} at phi = {phi}"
                    )));
                }
                let q = -0.5 * (n * sigma2.ln() + g.log_det + n);
                Ok((
                    q,
                    ModelParams::new(g.beta, CovParams::from_nu2(sigma2, phi, nu2)),
                ))
            }
            Mode::FixedNugget(tau2) => {
                let sigma2 = v[1].exp();
                let mut s = r * sigma2;
                for i in 0..s.nrows() {
                    s[(i, i)] += tau2;
                }
                let g = gls(&s, self.x, &self.mom)?;
                let q = -0.5 * (g.log_det + g.quad);
                Ok((
                    q,
                    ModelParams::new(g.beta, CovParams::new(sigma2, phi, tau2)),
                ))
            }
        }
    }

    /// Search-space coordinates of `cov` and the box around them.
    fn coordinates(&self, cov: &CovParams, search: &SearchBox) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut lo = vec![search.phi[0].ln()];
        let mut hi = vec![search.phi[1].ln()];
        let mut x = vec![cov.phi.ln()];
        match self.mode {
            Mode::Free => {
                lo.push(search.nu2[0].ln());
                hi.push(search.nu2[1].ln());
                x.push(cov.nu2().max(search.nu2[0]).ln());
            }
            Mode::ZeroNugget => {}
            Mode::FixedNugget(_) => {
                let s = cov.sigma2.ln();
                lo.push(s - 25.0);
                hi.push(s + 25.0);
                x.push(s);
            }
        }
        for ((v, l), h) in x.iter_mut().zip(&lo).zip(&hi) {
            *v = v.clamp(*l, *h);
        }
        (x, lo, hi)
    }

    /// Maximizes the profile from `start` over the search box.
    pub fn maximize(
        &self,
        start: &CovParams,
        search: &SearchBox,
        nm: &NelderMead,
    ) -> Result<(f64, ModelParams)> {
        let (x0, lo, hi) = self.coordinates(start, search);
        let min = nm.minimize(
            |v| self.eval(v).map(|(q, _)| -q).unwrap_or(f64::INFINITY),
            &x0,
            &lo,
            &hi,
        )?;
        self.eval(&min.x)
    }
}

/// One CM-step: GLS `β`, profiled `σ²` and a box-constrained search over the rest.
#[allow(clippy::too_many_arguments)]
pub fn cm_step(
    zhat: &DVector<f64>,
    zzhat: &DMatrix<f64>,
    x: &DMatrix<f64>,
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    search: &SearchBox,
    start: &CovParams,
    nm: &NelderMead,
) -> Result<ModelParams> {
    check_shapes(zhat, Some(zzhat), x, dist)?;
    let prof = Profile::new(x, dist, spec, Moments::new(zhat, zzhat));
    Ok(prof.maximize(start, search, nm)?.1)
}

/// Gaussian maximum likelihood for fully observed `z`.
pub fn gaussian_ml(
    z: &DVector<f64>,
    x: &DMatrix<f64>,
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    search: &SearchBox,
    start: &CovParams,
) -> Result<ModelParams> {
    check_shapes(z, None, x, dist)?;
    let prof = Profile::new(x, dist, spec, Moments::exact(z));
    let nm = NelderMead {
        max_evals: 600,
        xtol: 1e-7,
        ftol: 1e-11,
        initial_step: 0.5,
    };
    Ok(prof.maximize(start, search, &nm)?.1)
}

/// `Q(θ | θ̂)` at arbitrary parameters, up to the `−n/2·log 2π` constant.
pub fn q_function(
    zhat: &DVector<f64>,
    zzhat: &DMatrix<f64>,
    x: &DMatrix<f64>,
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    params: &ModelParams,
) -> Result<f64> {
    check_shapes(zhat, Some(zzhat), x, dist)?;
    let sigma = crate::covariance::sigma_matrix(dist, spec, &params.cov);
    let f = SpdFactor::new(&sigma)?;
    let inv = f.inverse();
    let xb = x * &params.beta;
    let t = crate::linalg::trace_prod(zzhat, &inv);
    let cross = (zhat.transpose() * &inv * &xb)[(0, 0)];
    let quad = (xb.transpose() * &inv * &xb)[(0, 0)];
    Ok(-0.5 * (f.log_det() + t - 2.0 * cross + quad))
}

fn check_shapes(
    z: &DVector<f64>,
    zz: Option<&DMatrix<f64>>,
    x: &DMatrix<f64>,
    dist: &DistanceMatrix,
) -> Result<()> {
    let n = z.len();
    let zz_ok = zz.is_none_or(|m| m.nrows() == n && m.ncols() == n);
    if x.nrows() != n || dist.n() != n || !zz_ok {
        return Err(Error::InvalidInput(
            "moment statistics do not match the design".into(),
        ));
    }
    Ok(())
}
