mod common;

use common::*;
use latentrate::model::{
    constrain, log_lik_call, log_lik_mixture, log_posterior, unconstrain, BaseParams, CallRecord, ModelKind,
    Params, PriorConfig, RatingDataset, UnconstrainedVector,
};
use latentrate::simulator::truncate_ratings;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn base_gradient_matches_finite_differences(seed in any::<u64>()) {
        let err = gradient_check(seed, ModelKind::Base, 1);
        prop_assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn extended_gradient_matches_finite_differences(seed in any::<u64>()) {
        let err = gradient_check(seed, ModelKind::Extended, 1);
        prop_assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn constrain_round_trips(seed in any::<u64>()) {
        let (err, in_range) = bijection_check(seed, 2);
        prop_assert!(err <= 1e-12, "round-trip error {err}");
        prop_assert!(in_range);
    }

    #[test]
    fn error_rates_stay_inside_the_open_interval(u0 in -30.0f64..30.0, u1 in -30.0f64..30.0) {
        let u = UnconstrainedVector::new(ModelKind::Base, vec![0.0, 0.0, u0, u1]).unwrap();
        let Params::Base(p) = constrain(&u).0 else { unreachable!() };
        prop_assert!(p.fpr > 0.0 && p.fpr < 0.5);
        prop_assert!(p.fnr > 0.0 && p.fnr < 0.5);
    }

    #[test]
    fn all_positive_likelihood_rises_with_theta(
        t1 in 0.001f64..0.998, dt in 0.0005f64..0.001,
        e0 in 0.01f64..0.49, e1 in 0.01f64..0.49, n in 1u32..=10,
    ) {
        let t2 = t1 + dt;
        prop_assert!(log_lik_mixture(t2, e0, e1, n, n).unwrap() > log_lik_mixture(t1, e0, e1, n, n).unwrap());
        prop_assert!(log_lik_mixture(t2, e0, e1, 0, n).unwrap() < log_lik_mixture(t1, e0, e1, 0, n).unwrap());
    }

    #[test]
    fn extended_model_nests_the_base_model(
        eta in -4.0f64..4.0, e0 in 0.01f64..0.49, e1 in 0.01f64..0.49,
        h in 0.0f64..1.0, n in 1u32..=10, kseed in any::<u32>(),
    ) {
        let k = kseed % (n + 1);
        let base = BaseParams { intercept: eta, betas: vec![], tau: 0.0, fpr: e0, fnr: e1 };
        let ext = nested_extended(&base, 1e-14);
        let rec = CallRecord::new("c", k, n, vec![], false).with_difficulty(h);
        let a = log_lik_call(&Params::Base(base), &rec).unwrap();
        let b = log_lik_call(&ext, &rec).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }

    #[test]
    fn posterior_ignores_record_order(seed in any::<u64>(), rot in 0usize..30) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, 12, 2, true);
        for kind in [ModelKind::Base, ModelKind::Extended] {
            let u = random_u(&mut r, kind, 2);
            let mut records = data.records().to_vec();
            let n = records.len();
            records.rotate_left(rot % n);
            records.reverse();
            let shuffled = RatingDataset::new(records, data.covariate_names().to_vec()).unwrap();
            let a = log_posterior(&u, &data, &PriorConfig::default()).unwrap();
            let b = log_posterior(&u, &shuffled, &PriorConfig::default()).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn truncation_composes(seed in any::<u64>(), a in 1u32..=10, b in 1u32..=10) {
        let mut r = rng(seed);
        let records = (0..8)
            .map(|c| {
                let rounds: Vec<u8> = (0..10).map(|_| u8::from(rand::Rng::random::<bool>(&mut r))).collect();
                CallRecord::from_rounds(format!("c{c}"), rounds, vec![], c % 2 == 0)
            })
            .collect();
        let data = RatingDataset::new(records, vec![]).unwrap();
        let (hi, lo) = (a.max(b), a.min(b));
        let twice = truncate_ratings(&truncate_ratings(&data, hi).unwrap(), lo).unwrap();
        prop_assert_eq!(twice, truncate_ratings(&data, lo).unwrap());
    }
}

#[test]
fn likelihood_matches_sequence_enumeration() {
    let worst = brute_force_check();
    assert!(worst <= 1e-12, "worst relative gap {worst}");
}

#[test]
fn boundary_rates_unconstrain_with_an_error() {
    for eps in [0.0, 0.5, 0.7] {
        let p = Params::Base(BaseParams { intercept: 0.0, betas: vec![], tau: 0.0, fpr: eps, fnr: 0.1 });
        assert!(unconstrain(&p).is_err());
    }
}
