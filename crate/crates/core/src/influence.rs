//! Local influence diagnostics on the Q-function: Hessian, perturbation matrices `Δ`,
//! the aggregated curvature `M(0)` and benchmark flags.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceSpec, DistanceMatrix, SigmaDerivatives};
use crate::error::{Error, Result};
use crate::linalg::{sorted_eigen, symmetrize, trace_prod, SpdFactor};
use crate::model::ModelParams;
use crate::parallel::{join, Execution};
use crate::saem::SaemFit;

/// Everything the curvature computations read: `Ẑ`, `ẐẐᵀ`, the design and `θ̂`
/// together with `Σ` and its derivatives at `θ̂`.
#[derive(Debug, Clone)]
pub struct QPoint {
    pub zhat: DVector<f64>,
    pub zzhat: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub params: ModelParams,
    pub sd: SigmaDerivatives,
    /// `Xβ̂`.
    xb: DVector<f64>,
}

impl QPoint {
    pub fn new(
        zhat: DVector<f64>,
        zzhat: DMatrix<f64>,
        x: DMatrix<f64>,
        dist: &DistanceMatrix,
        spec: &CovarianceSpec,
        params: ModelParams,
    ) -> Result<Self> {
        let n = zhat.len();
        if zzhat.shape() != (n, n)
            || x.nrows() != n
            || dist.n() != n
            || params.beta.len() != x.ncols()
        {
            return Err(Error::InvalidInput(
                "influence inputs have inconsistent shapes".into(),
            ));
        }
        let sd = SigmaDerivatives::new(dist, spec, &params.cov)?;
        let xb = &x * &params.beta;
        Ok(Self {
            zhat,
            zzhat,
            x,
            params,
            sd,
            xb,
        })
    }

    pub fn from_fit(fit: &SaemFit) -> Result<Self> {
        Self::new(
            fit.zhat.clone(),
            fit.zzhat.clone(),
            fit.model.x.clone(),
            &fit.model.dist,
            &fit.model.spec,
            fit.params.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.zhat.len()
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of free parameters `p + 3`, or `p + 2` with a fixed nugget.
    pub fn dim(&self) -> usize {
        self.p() + self.sd.n_params()
    }

    fn resid(&self) -> DVector<f64> {
        &self.zhat - &self.xb
    }
}

/// Hessian of `Q(θ | θ̂)` in `(β, α)` at `θ̂`, symmetrized.
pub fn q_hessian(pt: &QPoint) -> DMatrix<f64> {
    let (p, q) = (pt.p(), pt.sd.n_params());
    let sd = &pt.sd;
    let si = &sd.sigma_inv;
    let mut h = DMatrix::zeros(p + q, p + q);
    let sx = si * &pt.x;
    h.view_mut((0, 0), (p, p))
        .copy_from(&(-(pt.x.transpose() * &sx)));
    let r = pt.resid();
    for k in 0..q {
        let col = pt.x.transpose() * (&sd.dinv[k] * &r);
        h.view_mut((0, p + k), (p, 1)).copy_from(&col);
        h.view_mut((p + k, 0), (1, p)).copy_from(&col.transpose());
    }
    let si_d: Vec<DMatrix<f64>> = sd.d.iter().map(|d| si * d).collect();
    for k in 0..q {
        for l in 0..=k {
            let d2i = sd.d2inv(k, l);
            let t1 = trace_prod(si, sd.d2(k, l));
            let t2 = trace_prod(&si_d[l], &si_d[k]);
            let t3 = trace_prod(&pt.zzhat, d2i);
            let d2i_xb = d2i * &pt.xb;
            let t4 = pt.zhat.dot(&d2i_xb);
            let t5 = pt.xb.dot(&d2i_xb);
            let v = -0.5 * (t1 - t2 + t3 - 2.0 * t4 + t5);
            h[(p + k, p + l)] = v;
            h[(p + l, p + k)] = v;
        }
    }
    symmetrize(&h)
}

/// `Δ` for the response perturbation `V(ω) = V + ω` at `ω₀ = 0`.
pub fn delta_response(pt: &QPoint) -> DMatrix<f64> {
    let (p, q, n) = (pt.p(), pt.sd.n_params(), pt.n());
    let mut d = DMatrix::zeros(p + q, n);
    let sx = &pt.sd.sigma_inv * &pt.x;
    d.view_mut((0, 0), (p, n)).copy_from(&(-sx.transpose()));
    let r = pt.resid();
    for k in 0..q {
        let ar = &pt.sd.dinv[k] * &r;
        d.view_mut((p + k, 0), (1, n)).copy_from(&ar.transpose());
    }
    d
}

/// `Δ` for the scale perturbation `Σ(ω) = D(ω)Σ` at `ω₀ = 1`.
pub fn delta_scale(pt: &QPoint) -> DMatrix<f64> {
    let (p, q, n) = (pt.p(), pt.sd.n_params(), pt.n());
    let si = &pt.sd.sigma_inv;
    let mut d = DMatrix::zeros(p + q, n);
    let si_z = si * &pt.zhat;
    let si_xb = si * &pt.xb;
    let si_x = si * &pt.x;
    for i in 0..n {
        for j in 0..p {
            d[(j, i)] = 0.5
                * (si_x[(i, j)] * (pt.xb[i] - pt.zhat[i]) + pt.x[(i, j)] * (si_xb[i] - si_z[i]));
        }
    }
    for k in 0..q {
        let a = &pt.sd.dinv[k];
        let az = a * &pt.zhat;
        let axb = a * &pt.xb;
        for i in 0..n {
            let azz_ii = a
                .row(i)
                .iter()
                .zip(pt.zzhat.column(i).iter())
                .map(|(u, v)| u * v)
                .sum::<f64>();
            d[(p + k, i)] =
                0.5 * (azz_ii - az[i] * pt.xb[i] - axb[i] * pt.zhat[i] + axb[i] * pt.xb[i]);
        }
    }
    d
}

/// `Δ` for the explanatory perturbation `X(ω) = X + ω1ᵀ` at `ω₀ = 0`.
pub fn delta_explanatory(pt: &QPoint) -> DMatrix<f64> {
    let (p, q, n) = (pt.p(), pt.sd.n_params(), pt.n());
    let si = &pt.sd.sigma_inv;
    let r = pt.resid();
    let si_r = si * &r;
    let si_x = si * &pt.x;
    let s = pt.params.beta.sum();
    let mut d = DMatrix::zeros(p + q, n);
    for i in 0..n {
        for j in 0..p {
            d[(j, i)] = si_r[i] - s * si_x[(i, j)];
        }
    }
    for k in 0..q {
        let ar = &pt.sd.dinv[k] * &r;
        for i in 0..n {
            d[(p + k, i)] = s * ar[i];
        }
    }
    d
}

/// Spectral summary of `2F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub m0: DVector<f64>,
    /// Number of eigenvalues above `1e-10·λ₁`.
    pub rank: usize,
    /// Leading eigenvalues of `2F`, at most `p + 3` of them.
    pub top_eigenvalues: Vec<f64>,
}

/// `F = Δᵀ(−Q̈)⁻¹Δ`, the curvature matrix of the Q-displacement.
pub fn curvature_matrix(q_hess: &DMatrix<f64>, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q_hess.nrows() != delta.nrows() || !q_hess.is_square() {
        return Err(Error::InvalidInput(
            "Hessian and perturbation matrix do not conform".into(),
        ));
    }
    let neg = -q_hess;
    let f = SpdFactor::new(&neg)
        .map_err(|_| Error::Numerical("the Q-function Hessian is not negative definite".into()))?;
    let w = f.half_solve_mat(delta);
    Ok(symmetrize(&(w.transpose() * w)))
}

/// Aggregated normalized curvature `M(0)_l = Σᵢ λ̃ᵢ a_{il}²` of `2F`.
pub fn m0(q_hess: &DMatrix<f64>, delta: &DMatrix<f64>) -> Result<Curvature> {
    m0_from_f(&curvature_matrix(q_hess, delta)?)
}

/// [`m0`] for a given curvature matrix `F`.
pub fn m0_from_f(f: &DMatrix<f64>) -> Result<Curvature> {
    let two_f = f * 2.0;
    let (vals, vecs) = sorted_eigen(&two_f);
    let lead = vals.iter().copied().next().unwrap_or(0.0);
    if !(lead > 0.0) {
        return Err(Error::Numerical(
            "curvature matrix has no positive eigenvalue".into(),
        ));
    }
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > 1e-10 * lead)
        .collect();
    let total: f64 = keep.iter().map(|&i| vals[i]).sum();
    let n = f.nrows();
    let mut m = DVector::zeros(n);
    for &i in &keep {
        let w = vals[i] / total;
        for l in 0..n {
            m[l] += w * vecs[(l, i)].powi(2);
        }
    }
    Ok(Curvature {
        m0: m,
        rank: keep.len(),
        top_eigenvalues: keep.iter().take(8).map(|&i| vals[i]).collect(),
    })
}

/// Benchmark `mean + c*·sd` (sample sd) and the strict exceedance flags.
pub fn classify(m0: &DVector<f64>, c_star: f64) -> (f64, Vec<bool>) {
    let n = m0.len();
    let mean = m0.mean();
    let sd = if n > 1 {
        (m0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let bench = mean + c_star * sd;
    (bench, m0.iter().map(|&v| v > bench).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Response,
    Scale,
    Explanatory,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Response, Scheme::Scale, Scheme::Explanatory];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Response => "response",
            Scheme::Scale => "scale",
            Scheme::Explanatory => "explanatory",
        }
    }

    pub fn delta(self, pt: &QPoint) -> DMatrix<f64> {
        match self {
            Scheme::Response => delta_response(pt),
            Scheme::Scale => delta_scale(pt),
            Scheme::Explanatory => delta_explanatory(pt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub curvature: Curvature,
    pub benchmark: f64,
    pub flags: Vec<bool>,
}

impl SchemeReport {
    /// Indices of flagged observations.
    pub fn flagged(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub c_star: f64,
    pub response: Option<SchemeReport>,
    pub scale: Option<SchemeReport>,
    pub explanatory: Option<SchemeReport>,
    /// Schemes that could not be computed, with the reason.
    pub failures: Vec<(Scheme, String)>,
}

impl InfluenceReport {
    pub fn get(&self, s: Scheme) -> Option<&SchemeReport> {
        match s {
            Scheme::Response => self.response.as_ref(),
            Scheme::Scale => self.scale.as_ref(),
            Scheme::Explanatory => self.explanatory.as_ref(),
        }
    }
}

fn run_scheme(pt: &QPoint, h: &DMatrix<f64>, s: Scheme, c_star: f64) -> Result<SchemeReport> {
    let curvature = m0(h, &s.delta(pt))?;
    let (benchmark, flags) = classify(&curvature.m0, c_star);
    Ok(SchemeReport {
        scheme: s,
        curvature,
        benchmark,
        flags,
    })
}

/// All three perturbation schemes at a [`QPoint`].
pub fn local_influence_at(pt: &QPoint, c_star: f64, exec: Execution) -> InfluenceReport {
    let h = q_hessian(pt);
    let (resp, (scale, expl)) = join(
        exec,
        || run_scheme(pt, &h, Scheme::Response, c_star),
        || {
            join(
                exec,
                || run_scheme(pt, &h, Scheme::Scale, c_star),
                || run_scheme(pt, &h, Scheme::Explanatory, c_star),
            )
        },
    );
    let mut failures = Vec::new();
    let mut keep = |s: Scheme, r: Result<SchemeReport>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push((s, e.to_string()));
            None
        }
    };
    let response = keep(Scheme::Response, resp);
    let scale = keep(Scheme::Scale, scale);
    let explanatory = keep(Scheme::Explanatory, expl);
    InfluenceReport {
        c_star,
        response,
        scale,
        explanatory,
        failures,
    }
}

/// Local influence report for a completed SAEM fit.
pub fn local_influence(fit: &SaemFit, c_star: f64) -> Result<InfluenceReport> {
    let pt = QPoint::from_fit(fit)?;
    Ok(local_influence_at(&pt, c_star, fit.config.execution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{CovFamily, CovParams};
    use crate::mvn::RngState;

    fn point(n: usize, spec: CovarianceSpec, seed: u64) -> QPoint {
        let mut rng = RngState::new(seed);
        let coords: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.uniform_open() * 5.0, rng.uniform_open() * 5.0])
            .collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { coords[i][1] });
        let z = DVector::from_fn(n, |_, _| rng.uniform_open() * 3.0);
        let zz = &z * z.transpose() + DMatrix::from_diagonal_element(n, n, 0.1);
        let params = ModelParams::new(
            DVector::from_vec(vec![1.0, 0.2]),
            CovParams::new(1.2, 1.5, 0.3),
        );
        QPoint::new(
            z,
            zz,
            x,
            &DistanceMatrix::from_coords(&coords),
            &spec,
            params,
        )
        .unwrap()
    }

    #[test]
    fn beta_block_is_gls_information() {
        let pt = point(8, CovarianceSpec::new(CovFamily::Exponential, 0.5), 1);
        let h = q_hessian(&pt);
        let inv = pt.sd.sigma.clone().try_inverse().unwrap();
        let expect = -(pt.x.transpose() * inv * &pt.x);
        assert!((h.view((0, 0), (2, 2)) - expect).amax() < 1e-12);
    }

    #[test]
    fn fixed_nugget_drops_a_row() {
        let pt = point(
            8,
            CovarianceSpec::new(CovFamily::Spherical, 0.5).with_fixed_nugget(0.3),
            2,
        );
        assert_eq!(q_hessian(&pt).shape(), (4, 4));
        assert_eq!(delta_scale(&pt).shape(), (4, 8));
    }

    #[test]
    fn response_beta_block() {
        let pt = point(6, CovarianceSpec::new(CovFamily::Gaussian, 0.5), 3);
        let d = delta_response(&pt);
        let inv = pt.sd.sigma_inv.clone();
        assert!((d.view((0, 0), (2, 6)) + pt.x.transpose() * inv).amax() < 1e-12);
    }

    #[test]
    fn zero_response_gives_zero_explanatory_delta() {
        let mut pt = point(6, CovarianceSpec::new(CovFamily::Exponential, 0.5), 4);
        pt.zhat = DVector::zeros(6);
        pt.zzhat = DMatrix::zeros(6, 6);
        pt.params.beta = DVector::zeros(2);
        pt.xb = DVector::zeros(6);
        assert_eq!(delta_explanatory(&pt).amax(), 0.0);
    }

    #[test]
    fn rank_one_curvature() {
        let mut f = DMatrix::zeros(4, 4);
        f[(2, 2)] = 3.0;
        let c = m0_from_f(&f).unwrap();
        assert_eq!(c.rank, 1);
        assert!((c.m0[2] - 1.0).abs() < 1e-14 && c.m0.sum() - 1.0 < 1e-14);
    }

    #[test]
    fn classify_examples() {
        let (b, f) = classify(&DVector::from_vec(vec![0.7, 0.1, 0.1, 0.1]), 1.0);
        assert!((b - 0.55).abs() < 1e-12);
        assert_eq!(f, vec![true, false, false, false]);
        let (_, f) = classify(&DVector::from_element(5, 0.2), 3.0);
        assert!(f.iter().all(|&x| !x));
    }

    #[test]
    fn report_sums_to_one() {
        let pt = point(12, CovarianceSpec::new(CovFamily::Matern, 1.2), 5);
        let rep = local_influence_at(&pt, 3.0, Execution::Sequential);
        for s in Scheme::ALL {
            if let Some(r) = rep.get(s) {
                assert!((r.curvature.m0.sum() - 1.0).abs() < 1e-10);
                assert!(r.curvature.m0.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
