mod common;

use common::*;
use latentrate::io::{read_ratings, write_long, write_wide, CsvFormat, TruthTable};
use latentrate::model::RatingDataset;
use latentrate::simulator::{simulate, SimConfig};
use proptest::prelude::*;

fn without_rounds(data: &RatingDataset) -> RatingDataset {
    let records = data
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.rounds = None;
            r
        })
        .collect();
    RatingDataset::new(records, data.covariate_names().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn long_format_round_trips(seed in any::<u64>(), calls in 1usize..30, n_cov in 0usize..4, difficulty in any::<bool>()) {
        let data = random_dataset(&mut rng(seed), calls, n_cov, difficulty);
        let mut buf = Vec::new();
        write_long(&data, &mut buf).unwrap();
        prop_assert_eq!(read_ratings(&buf[..], Some(CsvFormat::Long)).unwrap(), data.clone());
        prop_assert_eq!(read_ratings(&buf[..], None).unwrap(), data);
    }

    #[test]
    fn wide_format_round_trips(seed in any::<u64>(), calls in 1usize..30, n_cov in 0usize..4, difficulty in any::<bool>()) {
        let data = without_rounds(&random_dataset(&mut rng(seed), calls, n_cov, difficulty));
        let mut buf = Vec::new();
        write_wide(&data, &mut buf).unwrap();
        prop_assert_eq!(read_ratings(&buf[..], None).unwrap(), data);
    }
}

#[test]
fn simulated_data_round_trips_both_ways() {
    let (data, truth) = simulate(&SimConfig::study2(3)).unwrap();
    let mut long = Vec::new();
    write_long(&data, &mut long).unwrap();
    assert_eq!(read_ratings(&long[..], None).unwrap(), data);

    let table = TruthTable::from(&truth);
    let mut buf = Vec::new();
    latentrate::io::write_truth(&table, &mut buf).unwrap();
    let back = latentrate::io::read_truth(&buf[..]).unwrap();
    assert_eq!(back.states_for(&data).unwrap(), truth.latent_states);
}
