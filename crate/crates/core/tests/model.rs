use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use spatcens::linalg::SpdFactor;
use spatcens::model::gaussian_loglik;
use spatcens::mvn::RectProbOptions;
use spatcens::{
    CovFamily, CovParams, CovarianceSpec, Execution, ModelParams, RngState, SclModel,
    SpatialDataset, Trend,
};

#[derive(Debug, Clone)]
struct Instance {
    coords: Vec<[f64; 2]>,
    z: Vec<f64>,
    cens: Vec<bool>,
    cov: CovParams,
    beta: [f64; 3],
    family: CovFamily,
}

fn instance() -> impl Strategy<Value = Instance> {
    (5usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(
                (
                    0.0..10.0f64,
                    0.0..10.0f64,
                    -2.0..2.0f64,
                    prop::bool::weighted(0.3),
                ),
                n,
            ),
            (0.3..3.0f64, 0.3..4.0f64, 0.05..1.0f64),
            (-1.0..1.0f64, -0.3..0.3f64, -0.3..0.3f64),
            prop::sample::select(vec![
                CovFamily::Exponential,
                CovFamily::Gaussian,
                CovFamily::Matern,
                CovFamily::Spherical,
            ]),
        )
            .prop_map(|(rows, (s2, phi, t2), (b0, b1, b2), family)| Instance {
                coords: rows.iter().map(|r| [r.0, r.1]).collect(),
                z: rows.iter().map(|r| r.2).collect(),
                cens: rows.iter().map(|r| r.3).collect(),
                cov: CovParams::new(s2, phi, t2),
                beta: [b0, b1, b2],
                family,
            })
    })
}

impl Instance {
    fn model(&self, order: &[usize], censored: bool) -> SclModel {
        let coords = order.iter().map(|&i| self.coords[i]).collect();
        let z = DVector::from_iterator(order.len(), order.iter().map(|&i| self.z[i]));
        let cens = order.iter().map(|&i| censored && self.cens[i]).collect();
        let data = SpatialDataset::left_censored(coords, z, cens, None).unwrap();
        SclModel::new(data, Trend::First, CovarianceSpec::new(self.family, 0.8)).unwrap()
    }

    fn params(&self) -> ModelParams {
        ModelParams::new(DVector::from_column_slice(&self.beta), self.cov)
    }
}

fn opts() -> RectProbOptions {
    RectProbOptions {
        eps: 1e-4,
        relative: true,
        max_points: 100_000,
        shifts: 10,
        exec: Execution::Sequential,
    }
}

fn config_cases(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config_cases(48))]

    #[test]
    fn uncensored_loglik_is_the_gaussian_density(inst in instance()) {
        let id: Vec<usize> = (0..inst.z.len()).collect();
        let m = inst.model(&id, false);
        let l = m.loglik(&inst.params(), &mut RngState::new(1), &opts()).unwrap();
        let g = gaussian_loglik(&m.data.value, &m.x, &m.dist, &m.spec, &inst.params()).unwrap();
        prop_assert!((l.value - g).abs() <= 1e-10 * g.abs().max(1.0));
        prop_assert_eq!(l.std_error, 0.0);
    }

    #[test]
    fn loglik_ignores_row_order(inst in instance(), perm_seed in any::<u64>()) {
        let n = inst.z.len();
        let id: Vec<usize> = (0..n).collect();
        let mut perm = id.clone();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        for censored in [false, true] {
            let a = inst.model(&id, censored).loglik(&inst.params(), &mut RngState::new(3), &opts()).unwrap();
            let b = inst.model(&perm, censored).loglik(&inst.params(), &mut RngState::new(3), &opts()).unwrap();
            let tol = 1e-10 * a.value.abs().max(1.0) + 4.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            prop_assert!((a.value - b.value).abs() <= tol, "{} vs {} (censored {censored})", a.value, b.value);
        }
    }

    #[test]
    fn conditional_covariance_is_spd(inst in instance()) {
        let id: Vec<usize> = (0..inst.z.len()).collect();
        let m = inst.model(&id, true);
        let (mu, s) = m.conditional_cens_given_obs(&inst.params()).unwrap();
        prop_assert_eq!(mu.len(), m.partition.cens_idx.len());
        if !s.is_empty() {
            prop_assert!(SpdFactor::new(&s).is_ok());
            prop_assert!((&s - s.transpose()).amax() == 0.0);
        }
    }
}

#[test]
fn conditional_law_matches_dense_formula() {
    let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
    let z = DVector::from_vec(vec![0.4, -0.2, 0.1, 0.9]);
    let data =
        SpatialDataset::left_censored(coords, z.clone(), vec![false, true, false, true], None)
            .unwrap();
    let m = SclModel::new(
        data,
        Trend::Cte,
        CovarianceSpec::new(CovFamily::Exponential, 0.5),
    )
    .unwrap();
    let p = ModelParams::new(DVector::from_element(1, 0.2), CovParams::new(1.5, 1.2, 0.3));
    let (mu, s) = m.conditional_cens_given_obs(&p).unwrap();
    let sig = m.sigma(&p.cov).unwrap();
    let (o, c) = ([0usize, 2], [1usize, 3]);
    let block =
        |r: &[usize], k: &[usize]| DMatrix::from_fn(r.len(), k.len(), |i, j| sig[(r[i], k[j])]);
    let inv = block(&o, &o).try_inverse().unwrap();
    let resid = DVector::from_vec(vec![z[0] - 0.2, z[2] - 0.2]);
    let mu_ref = DVector::from_element(2, 0.2) + block(&c, &o) * &inv * resid;
    let s_ref = block(&c, &c) - block(&c, &o) * &inv * block(&o, &c);
    assert!((mu - mu_ref).amax() < 1e-12);
    assert!((s - s_ref).amax() < 1e-12);
}
