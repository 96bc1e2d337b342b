//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails if any
//! non-waived criterion fails. Set `SPATCENS_ACCEPT=2,3` to run a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use spatcens::covariance::sigma_matrix;
use spatcens::influence::{
    delta_explanatory, delta_response, delta_scale, local_influence, m0_from_f, q_hessian, QPoint,
    Scheme,
};
use spatcens::mvn::tmvn_moments;
use spatcens::saem::saem_fit_model;
use spatcens::simulate::{inject_outliers, simulate_scl, SimConfig};
use spatcens::{
    krige, CovFamily, CovParams, CovarianceSpec, DistanceMatrix, Execution, ModelParams, Rectangle,
    RngState, SaemConfig, SclModel, SearchBox, Sites, SpatialDataset, Trend,
};

struct Outcome {
    status: Status,
    detail: String,
}

/// Number, title and check of one acceptance criterion.
type Criterion = (u32, &'static str, fn() -> Outcome);

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Waived,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn normal(rng: &mut RngState) -> f64 {
    let u = rng.uniform_open();
    let v = rng.uniform_open();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn normal_vec(rng: &mut RngState, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

fn uniform(rng: &mut RngState, a: f64, b: f64) -> f64 {
    a + (b - a) * rng.uniform_open()
}

fn random_coords(rng: &mut RngState, n: usize, side: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [uniform(rng, 0.0, side), uniform(rng, 0.0, side)])
        .collect()
}

// 1. Truncated moments against rejection sampling.

fn rejection_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rect: &Rectangle,
    n_accept: usize,
    rng: &mut RngState,
) -> (DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let l = cov.clone().cholesky().expect("spd").l();
    let mut s1: DVector<f64> = DVector::zeros(n);
    let mut s2: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut q1: DVector<f64> = DVector::zeros(n);
    let mut q2: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut got = 0;
    while got < n_accept {
        let z = mean + &l * normal_vec(rng, n);
        if !rect.contains(&z) {
            continue;
        }
        got += 1;
        for i in 0..n {
            s1[i] += z[i];
            q1[i] += z[i] * z[i];
            for j in 0..n {
                let v = z[i] * z[j];
                s2[(i, j)] += v;
                q2[(i, j)] += v * v;
            }
        }
    }
    let m = n_accept as f64;
    let first = &s1 / m;
    let second = &s2 / m;
    let first_se = DVector::from_fn(n, |i, _| ((q1[i] / m - first[i].powi(2)) / m).sqrt());
    let second_se = DMatrix::from_fn(n, n, |i, j| {
        ((q2[(i, j)] / m - second[(i, j)].powi(2)) / m).sqrt()
    });
    (first, second, first_se, second_se)
}

fn criterion_1() -> Outcome {
    let mut rng = RngState::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 2 + (rng.uniform_open() * 3.0) as usize;
        let a = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let mean = normal_vec(&mut rng, n);
        let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        for i in 0..n {
            let s = cov[(i, i)].sqrt();
            match (rng.uniform_open() * 3.0) as usize {
                0 => hi[i] = mean[i] + uniform(&mut rng, -0.5, 1.0) * s,
                1 => lo[i] = mean[i] + uniform(&mut rng, -1.0, 0.5) * s,
                _ => {
                    let c = mean[i] + uniform(&mut rng, -0.5, 0.5) * s;
                    lo[i] = c - s;
                    hi[i] = c + s;
                }
            }
        }
        let rect = Rectangle::new(lo, hi).expect("rectangle");
        let gibbs = tmvn_moments(&mean, &cov, &rect, 200_000, &mut rng).expect("gibbs moments");
        let (f, s, fse, sse) = rejection_moments(&mean, &cov, &rect, 200_000, &mut rng);
        for i in 0..n {
            let z = (gibbs.first[i] - f[i]).abs() / gibbs.first_se[i].hypot(fse[i]);
            worst = worst.max(z);
            for j in 0..n {
                let z = (gibbs.second[(i, j)] - s[(i, j)]).abs()
                    / gibbs.second_se[(i, j)].hypot(sse[(i, j)]);
                worst = worst.max(z);
            }
        }
    }
    verdict(
        worst <= 3.0,
        format!("largest standardized moment gap {worst:.2} (limit 3)"),
    )
}

// Shared random Q instances for criteria 2 and 3.

struct Instance {
    zhat: DVector<f64>,
    zzhat: DMatrix<f64>,
    x: DMatrix<f64>,
    dist: DistanceMatrix,
    spec: CovarianceSpec,
    params: ModelParams,
}

fn instance(seed: u64, n: usize, spec: CovarianceSpec) -> Instance {
    let mut rng = RngState::new(seed);
    let coords = random_coords(&mut rng, n, 4.0);
    let dist = DistanceMatrix::from_coords(&coords);
    let x = DMatrix::from_fn(n, 2, |_, j| {
        if j == 0 {
            1.0
        } else {
            uniform(&mut rng, -1.0, 1.0)
        }
    });
    let tau2 = if spec.nugget_fixed {
        spec.fixed_nugget_value
    } else {
        uniform(&mut rng, 0.1, 0.5)
    };
    let cov = CovParams::new(
        uniform(&mut rng, 0.8, 2.0),
        uniform(&mut rng, 0.5, 1.5),
        tau2,
    );
    let beta = DVector::from_vec(vec![
        uniform(&mut rng, -1.0, 1.0),
        uniform(&mut rng, -1.0, 1.0),
    ]);
    let zhat = &x * &beta + normal_vec(&mut rng, n) * 1.3;
    // Excess second moments on a few "censored" rows.
    let k = (n / 4).max(2);
    let mut excess = DMatrix::zeros(n, n);
    let a = DMatrix::from_fn(k, k, |_, _| normal(&mut rng) * 0.4);
    let b = &a * a.transpose();
    for i in 0..k {
        for j in 0..k {
            excess[(i, j)] = b[(i, j)];
        }
    }
    let zzhat = &zhat * zhat.transpose() + excess;
    Instance {
        zhat,
        zzhat,
        x,
        dist,
        spec,
        params: ModelParams::new(beta, cov),
    }
}

fn specs() -> Vec<CovarianceSpec> {
    vec![
        CovarianceSpec::new(CovFamily::Exponential, 0.5),
        CovarianceSpec::new(CovFamily::Gaussian, 0.5),
        CovarianceSpec::new(CovFamily::Spherical, 0.5),
        CovarianceSpec::new(CovFamily::Matern, 1.5),
        CovarianceSpec::new(CovFamily::PoweredExponential, 1.5),
        CovarianceSpec::new(CovFamily::Exponential, 0.5).with_fixed_nugget(0.0),
        CovarianceSpec::new(CovFamily::Gaussian, 0.5).with_fixed_nugget(0.2),
        CovarianceSpec::new(CovFamily::Spherical, 0.5).with_fixed_nugget(0.0),
        CovarianceSpec::new(CovFamily::Matern, 0.3).with_fixed_nugget(0.0),
        CovarianceSpec::new(CovFamily::PoweredExponential, 0.7).with_fixed_nugget(0.1),
    ]
}

/// Free parameters `θ = (β, α)` as a flat vector.
fn theta(inst: &Instance) -> Vec<f64> {
    let mut t: Vec<f64> = inst.params.beta.iter().copied().collect();
    t.extend(
        inst.spec
            .free_params()
            .iter()
            .map(|&k| inst.params.cov.get(k)),
    );
    t
}

fn params_from(inst: &Instance, t: &[f64]) -> ModelParams {
    let p = inst.x.ncols();
    let mut cov = inst.params.cov;
    for (j, &k) in inst.spec.free_params().iter().enumerate() {
        cov = cov.with(k, t[p + j]);
    }
    ModelParams::new(DVector::from_column_slice(&t[..p]), cov)
}

/// Explicit `Q` with a possibly non-symmetric covariance `S`, computed with a plain
/// inverse and determinant.
fn q_explicit(zhat: &DVector<f64>, zz: &DMatrix<f64>, mu: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let inv = s.clone().try_inverse().expect("invertible");
    let logdet = s.clone().lu().determinant().ln();
    let tr: f64 = (&inv * zz).trace();
    let a = (zhat.transpose() * &inv * mu)[(0, 0)];
    let b = (mu.transpose() * &inv * zhat)[(0, 0)];
    let c = (mu.transpose() * &inv * mu)[(0, 0)];
    -0.5 * (logdet + tr - a - b + c)
}

fn q_plain(inst: &Instance, t: &[f64]) -> f64 {
    let pm = params_from(inst, t);
    let s = sigma_matrix(&inst.dist, &inst.spec, &pm.cov);
    q_explicit(&inst.zhat, &inst.zzhat, &(&inst.x * &pm.beta), &s)
}

fn step(v: f64, rel: f64) -> f64 {
    rel * v.abs().max(0.1)
}

fn rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(1e-12);
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for (s, spec) in specs().into_iter().enumerate() {
        let inst = instance(200 + s as u64, 15 + 2 * s, spec);
        let t0 = theta(&inst);
        let d = t0.len();
        let mut fd = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                let (hj, hk) = (step(t0[j], 1e-4), step(t0[k], 1e-4));
                let f = |sj: f64, sk: f64| {
                    let mut t = t0.clone();
                    t[j] += sj * hj;
                    t[k] += sk * hk;
                    q_plain(&inst, &t)
                };
                fd[(j, k)] =
                    (f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0)) / (4.0 * hj * hk);
            }
        }
        let pt = QPoint::new(
            inst.zhat.clone(),
            inst.zzhat.clone(),
            inst.x.clone(),
            &inst.dist,
            &inst.spec,
            inst.params.clone(),
        )
        .expect("q point");
        worst = worst.max(rel_gap(&q_hessian(&pt), &fd));
    }
    verdict(
        worst <= 1e-4,
        format!("largest relative Hessian error {worst:.2e} over 10 instances (limit 1e-4)"),
    )
}

/// `Q` under each perturbation scheme, at parameters `t` and perturbation `w`.
fn q_perturbed(inst: &Instance, scheme: Scheme, t: &[f64], w: &DVector<f64>) -> f64 {
    let pm = params_from(inst, t);
    let s = sigma_matrix(&inst.dist, &inst.spec, &pm.cov);
    let mu = &inst.x * &pm.beta;
    match scheme {
        Scheme::Response => {
            let z = &inst.zhat - w;
            let zz = &inst.zzhat - &inst.zhat * w.transpose() - w * inst.zhat.transpose()
                + w * w.transpose();
            q_explicit(&z, &zz, &mu, &s)
        }
        Scheme::Scale => {
            let ds = DMatrix::from_diagonal(w) * s;
            q_explicit(&inst.zhat, &inst.zzhat, &mu, &ds)
        }
        Scheme::Explanatory => {
            let ones = DVector::from_element(inst.x.ncols(), 1.0);
            let xw = &inst.x + w * ones.transpose();
            q_explicit(&inst.zhat, &inst.zzhat, &(xw * &pm.beta), &s)
        }
    }
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for scheme in Scheme::ALL {
        let mut scheme_worst: f64 = 0.0;
        for (s, spec) in specs().into_iter().enumerate().step_by(2) {
            let inst = instance(300 + s as u64, 10, spec);
            let t0 = theta(&inst);
            let n = inst.zhat.len();
            let w0 = match scheme {
                Scheme::Scale => DVector::from_element(n, 1.0),
                _ => DVector::zeros(n),
            };
            let hw = 1e-3;
            let mut fd = DMatrix::zeros(t0.len(), n);
            for j in 0..t0.len() {
                let hj = step(t0[j], 1e-4);
                for i in 0..n {
                    let f = |sj: f64, si: f64| {
                        let mut t = t0.clone();
                        t[j] += sj * hj;
                        let mut w = w0.clone();
                        w[i] += si * hw;
                        q_perturbed(&inst, scheme, &t, &w)
                    };
                    fd[(j, i)] = (f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0))
                        / (4.0 * hj * hw);
                }
            }
            let pt = QPoint::new(
                inst.zhat.clone(),
                inst.zzhat.clone(),
                inst.x.clone(),
                &inst.dist,
                &inst.spec,
                inst.params.clone(),
            )
            .expect("q point");
            let analytic = match scheme {
                Scheme::Response => delta_response(&pt),
                Scheme::Scale => delta_scale(&pt),
                Scheme::Explanatory => delta_explanatory(&pt),
            };
            scheme_worst = scheme_worst.max(rel_gap(&analytic, &fd));
        }
        detail.push(format!("{} {scheme_worst:.2e}", scheme.name()));
        worst = worst.max(scheme_worst);
    }
    verdict(
        worst <= 1e-4,
        format!(
            "largest relative error per scheme: {} (limit 1e-4)",
            detail.join(", ")
        ),
    )
}

// 4. Zero censoring against a direct Gaussian ML oracle.

/// Gaussian log-likelihood with `β` at its GLS value, from a plain inverse and determinant.
fn profile_loglik(
    z: &DVector<f64>,
    x: &DMatrix<f64>,
    dist: &DistanceMatrix,
    spec: &CovarianceSpec,
    cov: &CovParams,
) -> Option<(f64, DVector<f64>)> {
    let s = sigma_matrix(dist, spec, cov);
    let inv = s.clone().try_inverse()?;
    let det = s.lu().determinant();
    if det.is_nan() || det <= 0.0 {
        return None;
    }
    let xtv = x.transpose() * &inv;
    let beta = (&xtv * x).try_inverse()? * (&xtv * z);
    let r = z - x * &beta;
    let n = z.len() as f64;
    Some((
        -0.5 * (n * std::f64::consts::TAU.ln() + det.ln() + (r.transpose() * &inv * &r)[(0, 0)]),
        beta,
    ))
}

/// Compass search with step halving on box-projected log coordinates.
fn compass_max(f: impl Fn(&[f64]) -> f64, mut x: Vec<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let clamp = |v: &mut Vec<f64>| {
        for i in 0..v.len() {
            v[i] = v[i].clamp(lo[i], hi[i]);
        }
    };
    clamp(&mut x);
    let mut fx = f(&x);
    let mut h = 0.5;
    while h > 1e-11 {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sign * h;
                clamp(&mut y);
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    x
}

fn criterion_4() -> Outcome {
    let spec = CovarianceSpec::new(CovFamily::Exponential, 0.5);
    let truth = CovParams::new(2.0, 1.5, 0.3);
    let mut rng = RngState::new(404);
    let n = 120;
    let coords = random_coords(&mut rng, n, 10.0);
    let dist = DistanceMatrix::from_coords(&coords);
    let l = sigma_matrix(&dist, &spec, &truth)
        .cholesky()
        .expect("spd")
        .l();
    let cov1 = DMatrix::from_fn(n, 1, |_, _| uniform(&mut rng, 0.0, 1.0));
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { cov1[(i, 0)] });
    let z = &x * DVector::from_vec(vec![1.0, 2.0]) + l * normal_vec(&mut rng, n);
    let data = SpatialDataset::uncensored(coords, z.clone(), Some(cov1)).expect("data");
    let init = CovParams::new(1.0, 1.0, 0.5);
    let search = SearchBox {
        phi: [0.01, 20.0],
        nu2: [1e-3, 10.0],
    };
    let cfg = SaemConfig {
        init: Some(init),
        search: Some(search),
        seed: 4,
        ..Default::default()
    };
    let t = Instant::now();
    let model = SclModel::new(data, Trend::Other, spec).expect("model");
    let fit = saem_fit_model(model, &cfg).expect("fit");
    let secs = t.elapsed().as_secs_f64();

    // Oracle over (log σ², log φ, log ν²) with the same start and box.
    let obj = |v: &[f64]| {
        let cov = CovParams::from_nu2(v[0].exp(), v[1].exp(), v[2].exp());
        profile_loglik(&z, &x, &dist, &spec, &cov).map_or(f64::NEG_INFINITY, |r| r.0)
    };
    let lo = [(-20.0f64), search.phi[0].ln(), search.nu2[0].ln()];
    let hi = [20.0f64, search.phi[1].ln(), search.nu2[1].ln()];
    let v = compass_max(
        obj,
        vec![init.sigma2.ln(), init.phi.ln(), init.nu2().ln()],
        &lo,
        &hi,
    );
    let cov = CovParams::from_nu2(v[0].exp(), v[1].exp(), v[2].exp());
    let (_, beta) = profile_loglik(&z, &x, &dist, &spec, &cov).expect("oracle optimum");
    let ours = fit.params.to_vec();
    let oracle: Vec<f64> = beta
        .iter()
        .copied()
        .chain([cov.sigma2, cov.phi, cov.tau2])
        .collect();
    let worst = ours
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    verdict(
        worst <= 1e-4 && secs < 30.0,
        format!("largest relative parameter gap {worst:.2e} (limit 1e-4), fit {secs:.1}s"),
    )
}

// 5. Exact interpolation.

fn criterion_5() -> Outcome {
    let mut rng = RngState::new(505);
    let n = 40;
    let coords = random_coords(&mut rng, n, 5.0);
    let x = DMatrix::from_fn(n, 1, |_, _| 1.0);
    let z = normal_vec(&mut rng, n);
    let mut worst_mean: f64 = 0.0;
    let mut worst_sd: f64 = 0.0;
    for spec in specs().into_iter().take(5) {
        let params = ModelParams::new(DVector::from_element(1, 0.3), CovParams::new(1.2, 0.8, 0.0));
        let obs = Sites::new(&coords, &x).expect("sites");
        let res = krige(&params, &spec, obs, &z, obs, Execution::Sequential).expect("krige");
        worst_mean = worst_mean.max((&res.mean - &z).amax());
        worst_sd = worst_sd.max(res.sd.amax());
    }
    verdict(
        worst_mean <= 1e-8 && worst_sd <= 1e-6,
        format!("max |mean - z| {worst_mean:.1e} (limit 1e-8), max sd {worst_sd:.1e} (limit 1e-6)"),
    )
}

// 6. Parameter recovery.

fn outlier_design_config(seed: u64, max_iter: usize) -> SaemConfig {
    SaemConfig {
        max_iter,
        init: Some(CovParams::new(2.0, 0.1, 0.0)),
        search: Some(SearchBox {
            phi: [1e-5, 50.0],
            nu2: [1e-4, 100.0],
        }),
        seed,
        ..Default::default()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let fits: Vec<ModelParams> = (0..20u64)
        .map(|seed| {
            let cfg = SimConfig::matern_outlier_design(1000 + seed);
            let sim = simulate_scl(&cfg).expect("simulation");
            let model = SclModel::new(sim.data, cfg.trend, cfg.spec).expect("model");
            saem_fit_model(model, &outlier_design_config(seed, 300))
                .expect("fit")
                .params
        })
        .collect();
    let truth = SimConfig::matern_outlier_design(0);
    let p = truth.beta.len();
    let sds: Vec<f64> = (0..p)
        .map(|j| {
            let m = fits.iter().map(|f| f.beta[j]).sum::<f64>() / 20.0;
            (fits.iter().map(|f| (f.beta[j] - m).powi(2)).sum::<f64>() / 19.0).sqrt()
        })
        .collect();
    let inside = fits
        .iter()
        .filter(|f| (0..p).all(|j| (f.beta[j] - truth.beta[j]).abs() <= 3.0 * sds[j]))
        .count();
    let phi = median(&mut fits.iter().map(|f| f.cov.phi).collect::<Vec<_>>());
    let s2 = median(&mut fits.iter().map(|f| f.cov.sigma2).collect::<Vec<_>>());
    let phi_rel = (phi / truth.cov.phi - 1.0).abs();
    let s2_rel = (s2 / truth.cov.sigma2 - 1.0).abs();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        inside >= 18 && phi_rel <= 0.3 && s2_rel <= 0.3 && secs < 600.0,
        format!(
            "beta inside 3 sd in {inside}/20 runs, median phi {phi:.3} ({:+.0}%), median sigma2 {s2:.3} ({:+.0}%), {secs:.0}s",
            100.0 * (phi / truth.cov.phi - 1.0),
            100.0 * (s2 / truth.cov.sigma2 - 1.0)
        ),
    )
}

// 7. Influence detection.

const OUTLIERS: [usize; 3] = [90, 125, 161];

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let mut runs = 0;
    let mut hits = 0;
    let mut clean_rates = Vec::new();
    let mut skipped = 0;
    let mut seed = 0u64;
    while runs < 20 {
        let cfg = SimConfig::matern_outlier_design(seed);
        let sim = simulate_scl(&cfg).expect("simulation");
        seed += 1;
        if OUTLIERS.iter().any(|&i| sim.data.cens[i]) {
            skipped += 1;
            continue;
        }
        runs += 1;
        let dirty = inject_outliers(&sim.data, &OUTLIERS, 5.0).expect("outliers");
        for (data, is_dirty) in [(sim.data.clone(), false), (dirty, true)] {
            let n = data.n() as f64;
            let model = SclModel::new(data, cfg.trend, cfg.spec).expect("model");
            let fit = saem_fit_model(model, &outlier_design_config(cfg.seed, 5)).expect("fit");
            let report = local_influence(&fit, 3.0).expect("influence");
            let flags = report
                .get(Scheme::Response)
                .expect("response scheme")
                .flagged();
            if is_dirty {
                hits += OUTLIERS.iter().all(|i| flags.contains(i)) as usize;
            } else {
                clean_rates.push(flags.len() as f64 / n);
            }
        }
    }
    let rate = hits as f64 / runs as f64;
    let clean = clean_rates.iter().sum::<f64>() / clean_rates.len() as f64;
    let secs = t.elapsed().as_secs_f64();
    verdict(
        rate >= 0.9 && clean <= 0.05 && secs < 600.0,
        format!(
            "all three outliers flagged in {hits}/{runs} runs (need 18), clean flag rate {:.1}% (limit 5%), \
             {skipped} seeds skipped with a censored target, {secs:.0}s",
            100.0 * clean
        ),
    )
}

// 8. M(0) identities.

fn criterion_8() -> Outcome {
    let mut rng = RngState::new(808);
    let mut worst_sum: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for k in 0..20 {
        let n = 8 + k;
        let r = 1 + k % 6;
        let a = DMatrix::from_fn(n, r, |_, _| normal(&mut rng));
        let f = &a * a.transpose();
        let m = m0_from_f(&f).expect("curvature").m0;
        worst_sum = worst_sum.max((m.sum() - 1.0).abs());
        // Conformal curvature along each coordinate direction: C = 2 dᵀ F d over tr(2F).
        let tr2 = 2.0 * f.trace();
        for l in 0..n {
            let mut d = DVector::zeros(n);
            d[l] = 1.0;
            let c = 2.0 * (d.transpose() * &f * &d)[(0, 0)];
            worst_b = worst_b.max((m[l] - c / tr2).abs());
        }
    }
    verdict(
        worst_sum <= 1e-8 && worst_b <= 1e-10,
        format!("max |sum M(0) - 1| {worst_sum:.1e} (limit 1e-8), max |M(0) - B| {worst_b:.1e} (limit 1e-10)"),
    )
}

// 10. CLI determinism.

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_spatcens"))
}

fn run(dir: &Path, args: &[&str]) {
    let out = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cli");
    assert!(
        out.status.success(),
        "spatcens {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    let log = dir.join(format!("{}.stdout", args[0]));
    let mut prev = std::fs::read(&log).unwrap_or_default();
    prev.extend_from_slice(&out.stdout);
    std::fs::write(log, prev).unwrap();
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let name = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((name, std::fs::read(&p).expect("read")));
            }
        }
    }
    let mut files = Vec::new();
    walk(root, root, &mut files);
    files.sort();
    files
}

fn cli_session(dir: &Path) {
    run(
        dir,
        &[
            "simulate",
            "--config",
            "sim.json",
            "--out-dir",
            "sim",
            "--seed",
            "7",
        ],
    );
    run(
        dir,
        &[
            "fit",
            "--data",
            "sim/data.csv",
            "--config",
            "fit.json",
            "--out-dir",
            "fit",
            "--seed",
            "7",
        ],
    );
    run(
        dir,
        &[
            "predict",
            "--data",
            "sim/data.csv",
            "--sites",
            "sim/truth.csv",
            "--fit",
            "fit/fit.json",
            "--out-dir",
            "pred",
        ],
    );
    run(
        dir,
        &[
            "predict",
            "--data",
            "sim/data.csv",
            "--sites",
            "sim/truth.csv",
            "--method",
            "seminaive",
            "--out-dir",
            "semi",
            "--seed",
            "7",
        ],
    );
    run(
        dir,
        &[
            "crossval",
            "--data",
            "sim/data.csv",
            "--config",
            "cv.json",
            "--folds",
            "3",
            "--out-dir",
            "cv",
            "--seed",
            "7",
        ],
    );
    run(
        dir,
        &[
            "diagnose",
            "--fit",
            "fit/fit.json",
            "--data",
            "sim/data.csv",
            "--out-dir",
            "diag",
        ],
    );
    run(
        dir,
        &[
            "variogram",
            "--data",
            "sim/data.csv",
            "--fit-model",
            "--out-dir",
            "vario",
        ],
    );
}

fn criterion_10() -> Outcome {
    let sim = r#"{
  "design": {
    "n_est": 40, "n_pred": 10, "trend": "cte", "beta": [1.0],
    "cov": { "sigma2": 1.0, "phi": 2.0, "tau2": 0.1 },
    "spec": { "family": "exponential", "kappa": 0.5, "nugget_fixed": false, "fixed_nugget_value": 0.0 },
    "cens_level": 0.2, "cens_type": "left",
    "coords": { "uniform": { "x": [0.0, 10.0], "y": [0.0, 10.0] } },
    "covariates": "none"
  }
}"#;
    let saem = r#"{ "m": 10, "max_iter": 20, "pc": 0.2, "init": { "sigma2": 1.0, "phi": 1.0, "tau2": 0.2 } }"#;
    let fit = format!(
        r#"{{ "model": {{ "trend": "cte", "cov_model": "exponential" }}, "saem": {saem} }}"#
    );
    let cv =
        format!(r#"{{ "methods": ["naive1", "naive2", "seminaive", "saem"], "saem": {saem} }}"#);
    let t = Instant::now();
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().expect("tempdir");
        std::fs::write(dir.path().join("sim.json"), sim).unwrap();
        std::fs::write(dir.path().join("fit.json"), &fit).unwrap();
        std::fs::write(dir.path().join("cv.json"), &cv).unwrap();
        cli_session(dir.path());
        snaps.push(snapshot(dir.path()));
    }
    let files = snaps[0].len();
    let same = snaps[0] == snaps[1];
    verdict(
        same && t.elapsed().as_secs_f64() < 60.0,
        format!("{files} output files over 7 commands byte-identical across two runs: {same}"),
    )
}

#[test]
fn acceptance() {
    let only: Option<Vec<u32>> = std::env::var("SPATCENS_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: Vec<Criterion> = vec![
        (1, "truncated-moment oracle", criterion_1),
        (2, "Hessian oracle", criterion_2),
        (3, "perturbation-matrix oracles", criterion_3),
        (4, "zero-censoring equivalence", criterion_4),
        (5, "exact interpolation", criterion_5),
        (6, "parameter recovery", criterion_6),
        (7, "influence detection", criterion_7),
        (8, "M(0) identities", criterion_8),
        (9, "rainfall reproduction", || Outcome {
            status: Status::Waived,
            detail: "the 143-site rainfall fixture is not available".into(),
        }),
        (10, "CLI determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let tag = match out.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Waived => "WAIVED",
        };
        println!(
            "criterion {id:>2} {tag:<6} {name}: {} [{:.1}s]",
            out.detail,
            t.elapsed().as_secs_f64()
        );
        if out.status == Status::Fail {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
