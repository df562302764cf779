mod common;

use common::*;
use latentrate::baselines::{logistic_fit, majority_vote, vote_error_rates, TieBreak};
use latentrate::model::{CallRecord, RatingDataset};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn rounds_dataset(r: &mut rand_chacha::ChaCha8Rng, calls: usize) -> RatingDataset {
    let records = (0..calls)
        .map(|c| {
            let n = r.random_range(1..=10usize);
            let rounds: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
            CallRecord::from_rounds(format!("c{c}"), rounds, vec![], false)
        })
        .collect();
    RatingDataset::new(records, vec![]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn votes_ignore_round_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let data = rounds_dataset(&mut r, 25);
        let permuted = RatingDataset::new(
            data.records()
                .iter()
                .map(|rec| {
                    let mut rounds = rec.rounds.clone().unwrap();
                    rounds.shuffle(&mut r);
                    CallRecord::from_rounds(rec.call_id.clone(), rounds, vec![], false)
                })
                .collect(),
            vec![],
        )
        .unwrap();
        for tie in [TieBreak::ToZero, TieBreak::ToOne] {
            prop_assert_eq!(majority_vote(&data, tie), majority_vote(&permuted, tie));
        }
    }

    #[test]
    fn flipping_ratings_and_votes_swaps_the_rates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let data = rounds_dataset(&mut r, 25);
        let votes = majority_vote(&data, TieBreak::ToZero);
        prop_assume!(votes.contains(&0) && votes.contains(&1));
        let flipped = RatingDataset::new(
            data.records()
                .iter()
                .map(|rec| CallRecord::new(rec.call_id.clone(), rec.n_ratings - rec.k_positive, rec.n_ratings, vec![], false))
                .collect(),
            vec![],
        )
        .unwrap();
        let flipped_votes: Vec<u8> = votes.iter().map(|v| 1 - v).collect();
        let (fpr, fnr) = vote_error_rates(&data, &votes).unwrap();
        let (fpr2, fnr2) = vote_error_rates(&flipped, &flipped_votes).unwrap();
        prop_assert_eq!(fpr, fnr2);
        prop_assert_eq!(fnr, fpr2);
    }

    #[test]
    fn votes_follow_the_strict_majority(k in 0u32..=12, extra in 0u32..=12, tie_one in any::<bool>()) {
        let n = (k + extra).max(1);
        let k = k.min(n);
        let data = RatingDataset::new(vec![CallRecord::new("c", k, n, vec![], false)], vec![]).unwrap();
        let tie = if tie_one { TieBreak::ToOne } else { TieBreak::ToZero };
        let want = if 2 * k > n { 1 } else if 2 * k == n { u8::from(tie_one) } else { 0 };
        prop_assert_eq!(majority_vote(&data, tie), vec![want]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn logistic_fit_matches_grid_search(seed in any::<u64>()) {
        let cells = logistic_grid_check(seed, 1);
        prop_assert!(cells <= 2.0, "fit lies {cells} grid cells from the grid maximizer");
    }

    #[test]
    fn log_likelihood_never_decreases(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(15..60);
        let (x, y) = logistic_problem(&mut r, n);
        let fit = logistic_fit(&design_2(&x), &y).unwrap();
        for w in fit.log_likelihood_trace.windows(2) {
            // steps in the rounding regime may move it by an ulp or two
            prop_assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()), "{:?}", fit.log_likelihood_trace);
        }
    }

    #[test]
    fn independent_covariate_gets_zero_slope(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (x, y) = independent_covariate_problem(&mut r, 30);
        let fit = logistic_fit(&x, &y).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.coefficients[2].abs() < 1e-6, "slope {}", fit.coefficients[2]);
    }
}
