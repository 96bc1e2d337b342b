use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use spatcens::linalg::sorted_eigen;
use spatcens::model::build_trend;
use spatcens::predict::{
    fit_seminaive, predict_naive, prediction_covariance, PlugInOptions, SeminaiveConfig,
};
use spatcens::{
    krige, CovFamily, CovParams, CovarianceSpec, Execution, Method, ModelParams, SearchBox, Sites,
    SpatialDataset, Trend,
};

fn config_cases(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn sites(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), n)
        .prop_map(|v| v.into_iter().map(|(x, y)| [x, y]).collect::<Vec<_>>())
        .prop_filter("distinct sites", |c: &Vec<[f64; 2]>| {
            c.iter().enumerate().all(|(i, a)| {
                c[..i]
                    .iter()
                    .all(|b| (a[0] - b[0]).hypot(a[1] - b[1]) > 0.05)
            })
        })
}

fn family() -> impl Strategy<Value = CovFamily> {
    prop::sample::select(vec![
        CovFamily::Exponential,
        CovFamily::Gaussian,
        CovFamily::Spherical,
        CovFamily::Matern,
    ])
}

fn opts() -> PlugInOptions {
    PlugInOptions {
        init: Some(CovParams::new(1.0, 1.0, 0.2)),
        search: Some(SearchBox {
            phi: [0.05, 20.0],
            nu2: [1e-3, 10.0],
        }),
        ..Default::default()
    }
}

/// Left-censored dataset; the smallest `k` values are censored at `lod`.
fn censored(coords: &[[f64; 2]], z: &[f64], k: usize, lod: f64) -> SpatialDataset {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let mut cens = vec![false; z.len()];
    let mut v = DVector::from_column_slice(z);
    for &i in &order[..k] {
        cens[i] = true;
        v[i] = lod;
    }
    SpatialDataset::left_censored(coords.to_vec(), v, cens, None).unwrap()
}

proptest! {
    #![proptest_config(config_cases(40))]

    #[test]
    fn kriging_mean_is_linear_at_fixed_beta(
        obs in sites(4..15), pred in sites(1..8), f in family(),
        z1 in prop::collection::vec(-3.0..3.0f64, 15), z2 in prop::collection::vec(-3.0..3.0f64, 15),
        a in -2.0..2.0f64, b in -2.0..2.0f64, phi in 0.2..4.0f64, tau2 in 0.0..0.5f64,
    ) {
        let n = obs.len();
        let spec = CovarianceSpec::new(f, 1.2);
        let p = ModelParams::new(DVector::zeros(1), CovParams::new(1.3, phi, tau2 + 1e-3));
        let (xo, xp) = (DMatrix::from_element(n, 1, 1.0), DMatrix::from_element(pred.len(), 1, 1.0));
        let z1 = DVector::from_column_slice(&z1[..n]);
        let z2 = DVector::from_column_slice(&z2[..n]);
        let k = |z: &DVector<f64>| {
            krige(&p, &spec, Sites::new(&obs, &xo).unwrap(), z, Sites::new(&pred, &xp).unwrap(), Execution::Sequential)
                .unwrap()
        };
        let combo = k(&(&z1 * a + &z2 * b));
        let (r1, r2) = (k(&z1), k(&z2));
        let lin = &r1.mean * a + &r2.mean * b;
        let scale = 1.0 + z1.amax() + z2.amax();
        prop_assert!((&combo.mean - lin).amax() <= 1e-10 * scale);
        // the variance does not depend on the data
        prop_assert_eq!(&combo.sd, &r1.sd);
    }

    #[test]
    fn prediction_covariance_is_psd(
        obs in sites(3..12), pred in sites(1..10), f in family(),
        sigma2 in 0.2..5.0f64, phi in 0.1..5.0f64, tau2 in 0.0..1.0f64,
    ) {
        let spec = CovarianceSpec::new(f, 0.7);
        let p = ModelParams::new(DVector::zeros(1), CovParams::new(sigma2, phi, tau2 + 1e-4));
        let c = prediction_covariance(&p, &spec, &obs, &pred).unwrap();
        let (vals, _) = sorted_eigen(&c);
        prop_assert!(vals.min() >= -1e-8 * vals.max().max(1.0), "eigenvalue {}", vals.min());
        let (xo, xp) = (DMatrix::from_element(obs.len(), 1, 1.0), DMatrix::from_element(pred.len(), 1, 1.0));
        let z = DVector::zeros(obs.len());
        let r = krige(&p, &spec, Sites::new(&obs, &xo).unwrap(), &z, Sites::new(&pred, &xp).unwrap(), Execution::Parallel).unwrap();
        for (i, s) in r.sd.iter().enumerate() {
            prop_assert!(s.is_finite() && *s >= 0.0);
            prop_assert!((s * s - c[(i, i)].max(0.0)).abs() < 1e-8 * (sigma2 + tau2 + 1.0));
        }
    }

    #[test]
    fn seminaive_imputations_stay_in_range(
        coords in sites(12..20), z in prop::collection::vec(0.0..5.0f64, 20),
        k in 1usize..4, lod in 0.0..2.0f64, passes in 1usize..5,
    ) {
        let n = coords.len();
        let data = censored(&coords, &z[..n], k, lod);
        let cfg = SeminaiveConfig { max_iter: passes, ..Default::default() };
        let spec = CovarianceSpec::new(CovFamily::Exponential, 0.5);
        if let Ok(fit) = fit_seminaive(&data, Trend::Cte, &spec, &cfg, &opts()) {
            prop_assert!(fit.iterations <= passes);
            for i in (0..n).filter(|&i| data.cens[i]) {
                prop_assert!((0.0..=lod).contains(&fit.imputed[i]), "row {i}: {}", fit.imputed[i]);
            }
        }
    }

    #[test]
    fn extreme_detection_limits_never_give_nan(
        coords in sites(8..14), z in prop::collection::vec(-1.0..1.0f64, 14),
        lod in prop::sample::select(vec![-1e6, -1e12, -1e300, f64::MIN]), half in any::<bool>(),
    ) {
        let n = coords.len();
        let data = censored(&coords, &z[..n], 2, lod);
        let x = build_trend(&coords[..2], None, Trend::Cte).unwrap();
        let method = if half { Method::Naive2 } else { Method::Naive1 };
        let spec = CovarianceSpec::new(CovFamily::Exponential, 0.5);
        if let Ok(r) = predict_naive(&data, Trend::Cte, &spec, method, &coords[..2], &x, &opts()) {
            prop_assert!(r.mean.iter().chain(r.sd.iter()).all(|v| v.is_finite()));
        }
    }
}
