//! Isotropic spatial covariance families and their parameter derivatives.
//!
//! The covariance of the process is `Σ = τ² I + σ² R(φ)`, where `R` is built from one of
//! the correlation families below. Parameters are always ordered `(σ², φ, τ²)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::parallel::{map_range, Execution};
use crate::special::{bessel_k, ln_matern_const};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovFamily {
    Exponential,
    Gaussian,
    Spherical,
    Matern,
    PoweredExponential,
}

impl CovFamily {
    pub fn name(self) -> &'static str {
        match self {
            CovFamily::Exponential => "exponential",
            CovFamily::Gaussian => "gaussian",
            CovFamily::Spherical => "spherical",
            CovFamily::Matern => "matern",
            CovFamily::PoweredExponential => "powered-exponential",
        }
    }

    pub const ALL: [CovFamily; 5] = [
        CovFamily::Exponential,
        CovFamily::Gaussian,
        CovFamily::Spherical,
        CovFamily::Matern,
        CovFamily::PoweredExponential,
    ];
}

impl fmt::Display for CovFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CovFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(CovFamily::Exponential),
            "gaussian" => Ok(CovFamily::Gaussian),
            "spherical" => Ok(CovFamily::Spherical),
            "matern" => Ok(CovFamily::Matern),
            "powered-exponential" | "powered.exponential" | "powexp" => {
                Ok(CovFamily::PoweredExponential)
            }
            other => Err(Error::Config(format!(
                "unsupported covariance family `{other}`"
            ))),
        }
    }
}

/// Covariance family plus nugget policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub family: CovFamily,
    /// Smoothness (Matérn) or power (powered exponential); ignored otherwise.
    pub kappa: f64,
    pub nugget_fixed: bool,
    /// Nugget variance used when `nugget_fixed` is set.
    pub fixed_nugget_value: f64,
}

impl CovarianceSpec {
    pub fn new(family: CovFamily, kappa: f64) -> Self {
        Self {
            family,
            kappa,
            nugget_fixed: false,
            fixed_nugget_value: 0.0,
        }
    }

    pub fn with_fixed_nugget(mut self, tau2: f64) -> Self {
        self.nugget_fixed = true;
        self.fixed_nugget_value = tau2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            CovFamily::Matern if !(self.kappa > 0.0 && self.kappa.is_finite()) => {
                return Err(Error::Config(format!(
                    "matern requires kappa > 0, got {}",
                    self.kappa
                )))
            }
            CovFamily::PoweredExponential if !(self.kappa > 0.0 && self.kappa <= 2.0) => {
                return Err(Error::Config(format!(
                    "powered-exponential requires kappa in (0, 2], got {}",
                    self.kappa
                )))
            }
            _ => {}
        }
        if self.nugget_fixed
            && !(self.fixed_nugget_value >= 0.0 && self.fixed_nugget_value.is_finite())
        {
            return Err(Error::Config(format!(
                "fixed nugget must be a nonnegative number, got {}",
                self.fixed_nugget_value
            )));
        }
        Ok(())
    }

    /// Number of free covariance parameters (3, or 2 with a fixed nugget).
    pub fn n_free(&self) -> usize {
        if self.nugget_fixed {
            2
        } else {
            3
        }
    }

    /// Free covariance parameters in canonical order.
    pub fn free_params(&self) -> &'static [CovParam] {
        if self.nugget_fixed {
            &[CovParam::Sigma2, CovParam::Phi]
        } else {
            &[CovParam::Sigma2, CovParam::Phi, CovParam::Tau2]
        }
    }

    #[inline]
    pub fn correlation(&self, h: f64, phi: f64) -> f64 {
        correlation(self.family, self.kappa, h, phi)
    }
}

/// `(σ², φ, τ²)`: partial sill, range and nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovParams {
    pub sigma2: f64,
    pub phi: f64,
    pub tau2: f64,
}

impl CovParams {
    pub fn new(sigma2: f64, phi: f64, tau2: f64) -> Self {
        Self { sigma2, phi, tau2 }
    }

    /// Builds the parameters from the relative nugget `ν² = τ²/σ²`.
    pub fn from_nu2(sigma2: f64, phi: f64, nu2: f64) -> Self {
        Self {
            sigma2,
            phi,
            tau2: nu2 * sigma2,
        }
    }

    pub fn nu2(&self) -> f64 {
        self.tau2 / self.sigma2
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma2 > 0.0
            && self.phi > 0.0
            && self.tau2 >= 0.0
            && self.sigma2.is_finite()
            && self.phi.is_finite()
            && self.tau2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "covariance parameters need sigma2 > 0, phi > 0, tau2 >= 0 (got {:?})",
                self
            )))
        }
    }

    pub fn get(&self, k: CovParam) -> f64 {
        match k {
            CovParam::Sigma2 => self.sigma2,
            CovParam::Phi => self.phi,
            CovParam::Tau2 => self.tau2,
        }
    }

    pub fn with(mut self, k: CovParam, value: f64) -> Self {
        match k {
            CovParam::Sigma2 => self.sigma2 = value,
            CovParam::Phi => self.phi = value,
            CovParam::Tau2 => self.tau2 = value,
        }
        self
    }
}

/// Index into the covariance parameter vector `α = (σ², φ, τ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovParam {
    Sigma2,
    Phi,
    Tau2,
}

/// Symmetric matrix of Euclidean distances between sites.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    pub fn from_coords(coords: &[[f64; 2]]) -> Self {
        let n = coords.len();
        Self(DMatrix::from_fn(n, n, |i, j| dist(coords[i], coords[j])))
    }

    /// Wraps a precomputed matrix; symmetry and a zero diagonal are checked.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput("distance matrix must be square".into()));
        }
        for i in 0..m.nrows() {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(
                    "distance matrix needs a zero diagonal".into(),
                ));
            }
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] || !(m[(i, j)] >= 0.0) {
                    return Err(Error::InvalidInput(
                        "distance matrix must be symmetric and nonnegative".into(),
                    ));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self(crate::linalg::submatrix(&self.0, idx, idx))
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

#[inline]
pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `m × n` matrix of distances from each row of `a` to each row of `b`.
pub fn cross_distances(a: &[[f64; 2]], b: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| dist(a[i], b[j]))
}

/// Correlation `ρ(h; φ)` of the given family.
pub fn correlation(family: CovFamily, kappa: f64, h: f64, phi: f64) -> f64 {
    debug_assert!(phi > 0.0 && h >= 0.0);
    if h == 0.0 {
        return 1.0;
    }
    let t = h / phi;
    match family {
        CovFamily::Exponential => (-t).exp(),
        CovFamily::Gaussian => (-t * t).exp(),
        CovFamily::Spherical => {
            if t <= 1.0 {
                1.0 - 1.5 * t + 0.5 * t * t * t
            } else {
                0.0
            }
        }
        CovFamily::PoweredExponential => (-t.powf(kappa)).exp(),
        CovFamily::Matern => {
            let k = bessel_k(kappa, t);
            if k == 0.0 {
                0.0
            } else {
                (ln_matern_const(kappa) + kappa * t.ln() + k.ln())
                    .exp()
                    .min(1.0)
            }
        }
    }
}

/// `∂ρ/∂φ`.
pub fn correlation_dphi(family: CovFamily, kappa: f64, h: f64, phi: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let t = h / phi;
    match family {
        CovFamily::Exponential => t * (-t).exp() / phi,
        CovFamily::Gaussian => 2.0 * t * t * (-t * t).exp() / phi,
        CovFamily::PoweredExponential => {
            let u = t.powf(kappa);
            kappa * u * (-u).exp() / phi
        }
        CovFamily::Spherical => {
            if t <= 1.0 {
                1.5 * t * (1.0 - t * t) / phi
            } else {
                0.0
            }
        }
        CovFamily::Matern => {
            // d/dx [x^κ K_κ(x)] = -x^κ K_{κ-1}(x), with x = h/φ.
            let k = bessel_k(kappa - 1.0, t);
            if k == 0.0 {
                0.0
            } else {
                (ln_matern_const(kappa) + (kappa + 1.0) * t.ln() + k.ln()).exp() / phi
            }
        }
    }
}

/// `∂²ρ/∂φ²`.
pub fn correlation_d2phi(family: CovFamily, kappa: f64, h: f64, phi: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let t = h / phi;
    let powexp = |kappa: f64| {
        let u = t.powf(kappa);
        kappa * u * (-u).exp() * (kappa * u - kappa - 1.0) / (phi * phi)
    };
    match family {
        CovFamily::Exponential => powexp(1.0),
        CovFamily::Gaussian => powexp(2.0),
        CovFamily::PoweredExponential => powexp(kappa),
        CovFamily::Spherical => {
            if t <= 1.0 {
                3.0 * t * (2.0 * t * t - 1.0) / (phi * phi)
            } else {
                0.0
            }
        }
        CovFamily::Matern => {
            let step = phi * 1e-6;
            (correlation_dphi(family, kappa, h, phi + step)
                - correlation_dphi(family, kappa, h, phi - step))
                / (2.0 * step)
        }
    }
}

// Matérn rows are worth spreading over threads; the closed-form families are not.
fn elementwise(
    spec: &CovarianceSpec,
    dist: &DistanceMatrix,
    f: impl Fn(f64) -> f64 + Sync,
) -> DMatrix<f64> {
    let n = dist.n();
    let d = dist.matrix();
    let exec = if spec.family == CovFamily::Matern && n >= 64 {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let rows: Vec<Vec<f64>> = map_range(exec, n, |i| (0..i).map(|j| f(d[(i, j)])).collect());
    let diag = f(0.0);
    let mut m = DMatrix::from_element(n, n, diag);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Correlation matrix `R(φ)`.
pub fn correlation_matrix(dist: &DistanceMatrix, spec: &CovarianceSpec, phi: f64) -> DMatrix<f64> {
    elementwise(spec, dist, |h| spec.correlation(h, phi))
}

/// `Σ = τ² I + σ² R(φ)` without a definiteness check.
pub fn sigma_matrix(dist: &DistanceMatrix, spec: &CovarianceSpec, p: &CovParams) -> DMatrix<f64> {
    let mut s = correlation_matrix(dist, spec, p.phi) * p.sigma2;
    for i in 0..s.nrows() {
        s[(i, i)] += p.tau2;
    }
    s
}

/// Covariance matrix of the sites, checked for positive definiteness.
///
/// A jitter of `1e-10·(σ²+τ²)` is added to the diagonal if the first factorization fails.
pub fn build_sigma(
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    p: &CovParams,
) -> Result<DMatrix<f64>> {
    p.validate()?;
    let mut s = sigma_matrix(dist, spec, p);
    let f = SpdFactor::new(&s)?;
    if f.jitter > 0.0 {
        for i in 0..s.nrows() {
            s[(i, i)] += f.jitter;
        }
    }
    Ok(s)
}

/// `∂Σ/∂α_k`.
pub fn dsigma(
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    p: &CovParams,
    k: CovParam,
) -> DMatrix<f64> {
    match k {
        CovParam::Sigma2 => correlation_matrix(dist, spec, p.phi),
        CovParam::Phi => elementwise(spec, dist, |h| {
            p.sigma2 * correlation_dphi(spec.family, spec.kappa, h, p.phi)
        }),
        CovParam::Tau2 => DMatrix::identity(dist.n(), dist.n()),
    }
}

/// `∂²Σ/∂α_k∂α_l`.
pub fn d2sigma(
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    p: &CovParams,
    k: CovParam,
    l: CovParam,
) -> DMatrix<f64> {
    use CovParam::*;
    let n = dist.n();
    match (k, l) {
        (Sigma2, Phi) | (Phi, Sigma2) => elementwise(spec, dist, |h| {
            correlation_dphi(spec.family, spec.kappa, h, p.phi)
        }),
        (Phi, Phi) => elementwise(spec, dist, |h| {
            p.sigma2 * correlation_d2phi(spec.family, spec.kappa, h, p.phi)
        }),
        _ => DMatrix::zeros(n, n),
    }
}

/// `∂Σ⁻¹/∂α_k = −Σ⁻¹ (∂Σ/∂α_k) Σ⁻¹`.
pub fn dsigma_inv(sigma_inv: &DMatrix<f64>, dsig: &DMatrix<f64>) -> DMatrix<f64> {
    -(sigma_inv * dsig * sigma_inv)
}

/// `∂²Σ⁻¹/∂α_k∂α_l`.
pub fn d2sigma_inv(
    sigma_inv: &DMatrix<f64>,
    dsig_k: &DMatrix<f64>,
    dsig_l: &DMatrix<f64>,
    d2sig_kl: &DMatrix<f64>,
) -> DMatrix<f64> {
    let a_k = sigma_inv * dsig_k;
    let a_l = sigma_inv * dsig_l;
    let out = &a_l * &a_k * sigma_inv + &a_k * &a_l * sigma_inv - sigma_inv * d2sig_kl * sigma_inv;
    crate::linalg::symmetrize(&out)
}

/// Σ, Σ⁻¹ and their first and second derivatives for the free parameters.
#[derive(Debug, Clone)]
pub struct SigmaDerivatives {
    pub params: Vec<CovParam>,
    pub sigma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub log_det: f64,
    /// `∂Σ/∂α_k`, indexed like `params`.
    pub d: Vec<DMatrix<f64>>,
    /// `∂Σ⁻¹/∂α_k`.
    pub dinv: Vec<DMatrix<f64>>,
    /// `∂²Σ⁻¹/∂α_k∂α_l`, row-major over `params × params`.
    pub d2inv: Vec<DMatrix<f64>>,
    /// `∂²Σ/∂α_k∂α_l`, same layout.
    pub d2: Vec<DMatrix<f64>>,
}

impl SigmaDerivatives {
    pub fn new(dist: &DistanceMatrix, spec: &CovarianceSpec, p: &CovParams) -> Result<Self> {
        let params = spec.free_params().to_vec();
        let sigma = build_sigma(dist, spec, p)?;
        let f = SpdFactor::new(&sigma)?;
        let sigma_inv = f.inverse();
        let d: Vec<_> = params.iter().map(|&k| dsigma(dist, spec, p, k)).collect();
        let dinv: Vec<_> = d.iter().map(|dk| dsigma_inv(&sigma_inv, dk)).collect();
        let q = params.len();
        let mut d2 = Vec::with_capacity(q * q);
        let mut d2inv = Vec::with_capacity(q * q);
        for (a, &k) in params.iter().enumerate() {
            for (b, &l) in params.iter().enumerate() {
                let m = d2sigma(dist, spec, p, k, l);
                d2inv.push(d2sigma_inv(&sigma_inv, &d[a], &d[b], &m));
                d2.push(m);
            }
        }
        Ok(Self {
            params,
            sigma,
            sigma_inv,
            log_det: f.log_det(),
            d,
            dinv,
            d2inv,
            d2,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn d2inv(&self, a: usize, b: usize) -> &DMatrix<f64> {
        &self.d2inv[a * self.params.len() + b]
    }

    pub fn d2(&self, a: usize, b: usize) -> &DMatrix<f64> {
        &self.d2[a * self.params.len() + b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn coords() -> Vec<[f64; 2]> {
        vec![
            [0.0, 0.0],
            [1.0, 0.3],
            [0.2, 1.7],
            [2.1, 2.2],
            [1.4, 0.9],
            [3.0, 0.5],
        ]
    }

    fn specs() -> Vec<CovarianceSpec> {
        vec![
            CovarianceSpec::new(CovFamily::Exponential, 0.0),
            CovarianceSpec::new(CovFamily::Gaussian, 0.0),
            CovarianceSpec::new(CovFamily::Spherical, 0.0),
            CovarianceSpec::new(CovFamily::Matern, 0.3),
            CovarianceSpec::new(CovFamily::Matern, 1.7),
            CovarianceSpec::new(CovFamily::PoweredExponential, 1.4),
        ]
    }

    #[test]
    fn zero_lag_is_one() {
        for s in specs() {
            assert_eq!(s.correlation(0.0, 0.7), 1.0);
        }
    }

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(
            correlation(CovFamily::Gaussian, 0.0, 2.5, 2.5),
            (-1f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(correlation(CovFamily::Spherical, 0.0, 1.3, 1.0), 0.0);
        for i in 1..50 {
            let h = i as f64 * 0.13;
            let m = correlation(CovFamily::Matern, 0.5, h, 0.8);
            assert!((m - (-h / 0.8f64).exp()).abs() < 1e-10, "h={h}");
        }
    }

    #[test]
    fn sigma_entries() {
        let dist = DistanceMatrix::from_coords(&[[0.0, 0.0], [1.0, 0.0]]);
        let s = build_sigma(
            &dist,
            &CovarianceSpec::new(CovFamily::Exponential, 0.0),
            &CovParams::new(2.0, 1.0, 0.5),
        )
        .unwrap();
        assert_relative_eq!(s[(0, 1)], 2.0 * (-1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(s[(1, 1)], 2.5, epsilon = 1e-15);

        let one = DistanceMatrix::from_coords(&[[4.0, 2.0]]);
        let s = build_sigma(
            &one,
            &CovarianceSpec::new(CovFamily::Matern, 0.3),
            &CovParams::new(1.5, 2.0, 0.25),
        )
        .unwrap();
        assert_eq!(s[(0, 0)], 1.75);
    }

    #[test]
    fn monotone_in_distance() {
        for s in specs()
            .into_iter()
            .filter(|s| s.family != CovFamily::PoweredExponential)
        {
            let mut prev = 1.0;
            for i in 1..400 {
                let r = s.correlation(i as f64 * 0.02, 1.1);
                assert!(r <= prev + 1e-15, "{:?} at {i}", s.family);
                prev = r;
            }
        }
    }

    #[test]
    fn bad_kappa_rejected() {
        assert!(CovarianceSpec::new(CovFamily::Matern, 0.0)
            .validate()
            .is_err());
        assert!(CovarianceSpec::new(CovFamily::PoweredExponential, 2.5)
            .validate()
            .is_err());
        assert!(CovarianceSpec::new(CovFamily::Gaussian, 0.0)
            .validate()
            .is_ok());
        assert!("cauchy".parse::<CovFamily>().is_err());
    }

    #[test]
    fn first_derivatives_match_central_differences() {
        let dist = DistanceMatrix::from_coords(&coords());
        let p = CovParams::new(1.3, 1.2, 0.4);
        for s in specs() {
            for k in [CovParam::Sigma2, CovParam::Phi, CovParam::Tau2] {
                let h = p.get(k) * 1e-5;
                let fd = (sigma_matrix(&dist, &s, &p.with(k, p.get(k) + h))
                    - sigma_matrix(&dist, &s, &p.with(k, p.get(k) - h)))
                    / (2.0 * h);
                let an = dsigma(&dist, &s, &p, k);
                let err = (&fd - &an).amax() / an.amax().max(1e-300);
                assert!(err < 1e-5, "{:?} {:?} err {err}", s.family, k);
            }
        }
    }

    #[test]
    fn second_derivatives_match_central_differences() {
        let dist = DistanceMatrix::from_coords(&coords());
        let p = CovParams::new(1.3, 1.2, 0.4);
        let all = [CovParam::Sigma2, CovParam::Phi, CovParam::Tau2];
        for s in specs() {
            for k in all {
                for l in all {
                    let h = p.get(l) * 1e-5;
                    let fd = (dsigma(&dist, &s, &p.with(l, p.get(l) + h), k)
                        - dsigma(&dist, &s, &p.with(l, p.get(l) - h), k))
                        / (2.0 * h);
                    let an = d2sigma(&dist, &s, &p, k, l);
                    assert_eq!(an, d2sigma(&dist, &s, &p, l, k));
                    let scale = an.amax().max(fd.amax()).max(1e-12);
                    assert!(
                        (&fd - &an).amax() / scale < 1e-5,
                        "{:?} {:?} {:?}",
                        s.family,
                        k,
                        l
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_derivatives() {
        let dist = DistanceMatrix::from_coords(&coords());
        let p = CovParams::new(1.3, 0.9, 0.2);
        for s in specs() {
            let d = SigmaDerivatives::new(&dist, &s, &p).unwrap();
            for (a, &k) in d.params.iter().enumerate() {
                let back = &d.sigma * &d.dinv[a] * &d.sigma;
                assert!((back + &d.d[a]).amax() < 1e-8);
                let h = p.get(k) * 1e-5;
                let inv = |q: CovParams| {
                    SpdFactor::new(&sigma_matrix(&dist, &s, &q))
                        .unwrap()
                        .inverse()
                };
                let fd = (inv(p.with(k, p.get(k) + h)) - inv(p.with(k, p.get(k) - h))) / (2.0 * h);
                assert!((&fd - &d.dinv[a]).amax() / d.dinv[a].amax() < 1e-5);
                for (b, &l) in d.params.iter().enumerate() {
                    let h = p.get(l) * 1e-5;
                    let dinv_at = |q: CovParams| {
                        let si = SpdFactor::new(&sigma_matrix(&dist, &s, &q))
                            .unwrap()
                            .inverse();
                        dsigma_inv(&si, &dsigma(&dist, &s, &q, k))
                    };
                    let fd = (dinv_at(p.with(l, p.get(l) + h)) - dinv_at(p.with(l, p.get(l) - h)))
                        / (2.0 * h);
                    let an = d.d2inv(a, b);
                    assert!(
                        (&fd - an).amax() / an.amax().max(1e-12) < 1e-5,
                        "{:?} {:?} {:?}",
                        s.family,
                        k,
                        l
                    );
                }
            }
        }
    }

    #[test]
    fn nugget_derivatives_are_trivial() {
        let dist = DistanceMatrix::from_coords(&coords());
        let s = CovarianceSpec::new(CovFamily::Spherical, 0.0);
        let p = CovParams::new(2.0, 1.5, 0.0);
        assert_eq!(
            dsigma(&dist, &s, &p, CovParam::Tau2),
            DMatrix::identity(6, 6)
        );
        let sig = build_sigma(&dist, &s, &p).unwrap();
        assert!((dsigma(&dist, &s, &p, CovParam::Sigma2) - sig / 2.0).amax() < 1e-15);
        assert_eq!(
            d2sigma(&dist, &s, &p, CovParam::Tau2, CovParam::Tau2),
            DMatrix::zeros(6, 6)
        );
    }
}
