use latentrate::model::{BaseParams, Params};
use latentrate::simulator::{simulate, true_ate, SimConfig};
use proptest::prelude::*;

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// Average of 0.5·σ(a + b·h) for h uniform on [lo, hi].
fn mean_half_logistic(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    0.5 * (softplus(a + b * hi) - softplus(a + b * lo)) / (b * (hi - lo))
}

/// Fraction of positive ratings among calls with the given state, and the number of ratings.
fn positive_rate(data: &latentrate::RatingDataset, states: &[u8], state: u8, keep: impl Fn(usize) -> bool) -> (f64, f64) {
    let (mut k, mut n) = (0u64, 0u64);
    for (i, (r, &d)) in data.records().iter().zip(states).enumerate() {
        if d == state && keep(i) {
            k += r.k_positive as u64;
            n += r.n_ratings as u64;
        }
    }
    (k as f64 / n as f64, n as f64)
}

#[test]
fn study1_states_and_error_rates() {
    let (data, truth) = simulate(&SimConfig::study1(2024)).unwrap();
    let c = data.len() as f64;
    let mean_d = truth.latent_states.iter().map(|&d| f64::from(d)).sum::<f64>() / c;
    let mean_theta = truth.theta_values.iter().sum::<f64>() / c;
    let se_d = (truth.theta_values.iter().map(|t| t * (1.0 - t)).sum::<f64>()).sqrt() / c;
    assert!((mean_d - mean_theta).abs() < 3.0 * se_d, "{mean_d} vs {mean_theta}");

    let (fpr, n0) = positive_rate(&data, &truth.latent_states, 0, |_| true);
    assert!((fpr - 0.15).abs() < 3.0 * (0.15 * 0.85 / n0).sqrt(), "fpr {fpr}");
    let (hit, n1) = positive_rate(&data, &truth.latent_states, 1, |_| true);
    assert!((1.0 - hit - 0.10).abs() < 3.0 * (0.10 * 0.90 / n1).sqrt(), "fnr {}", 1.0 - hit);
}

#[test]
fn noiseless_rater_reports_the_state() {
    let mut cfg = SimConfig::study1(5);
    if let Params::Base(p) = &mut cfg.truth {
        p.fpr = 0.0;
        p.fnr = 0.0;
    }
    let (data, truth) = simulate(&cfg).unwrap();
    for (r, &d) in data.records().iter().zip(&truth.latent_states) {
        assert_eq!(r.k_positive, r.n_ratings * u32::from(d));
    }
}

#[test]
fn study2_error_rates_rise_with_difficulty() {
    let (data, truth) = simulate(&SimConfig::study2(2024)).unwrap();
    let h: Vec<f64> = data.records().iter().map(|r| r.difficulty.unwrap()).collect();
    for (lo, hi) in [(0.0, 0.1), (0.9, 1.0)] {
        let (rate, n) = positive_rate(&data, &truth.latent_states, 0, |i| h[i] >= lo && h[i] < hi);
        let want = mean_half_logistic(-1.5, 3.5, lo, hi);
        let se = (want * (1.0 - want) / n).sqrt();
        assert!((rate - want).abs() < 3.0 * se, "decile [{lo}, {hi}): {rate} vs {want}");
    }
}

#[test]
fn decile_oracle_values() {
    assert!((mean_half_logistic(-1.5, 3.5, 0.0, 0.1) - 0.10524).abs() < 1e-4);
    assert!((mean_half_logistic(-1.5, 3.5, 0.9, 1.0) - 0.43030).abs() < 1e-4);
}

#[test]
fn true_effect_is_zero_without_treatment_effect() {
    let (data, _) = simulate(&SimConfig::study1(8)).unwrap();
    let p = Params::Base(BaseParams { intercept: -1.5, betas: vec![0.75, -0.5], tau: 0.0, fpr: 0.1, fnr: 0.1 });
    assert_eq!(true_ate(&p, &data).unwrap(), 0.0);
}

#[test]
fn study1_true_effect_is_near_the_population_value() {
    let (_, truth) = simulate(&SimConfig::study1(31)).unwrap();
    assert!((truth.true_ate + 0.087).abs() < 0.01, "{}", truth.true_ate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn simulation_is_seeded(seed in any::<u64>()) {
        let mut cfg = SimConfig::study2(seed);
        cfg.n_calls = 50;
        prop_assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}
