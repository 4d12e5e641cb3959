use std::fs;

use proptest::prelude::*;
use simfair::data::{
    gen_synthetic, load, manifest_for, rank_labels, split, split_indices, subsample_advantaged,
    write_csv, Manifest, SynthSpec,
};
use simfair::similarity::LabelVector;

fn small_spec(samples: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        samples,
        features: 4,
        labels: 4,
        seed,
        ..SynthSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_partitions_indices(n in 1usize..500, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let (train, test) = split_indices(n, frac, seed).unwrap();
        prop_assert_eq!(train.len(), (n as f64 * frac).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, frac, seed).unwrap(), (train, test));
    }

    #[test]
    fn ranking_counts_everything(codes in prop::collection::vec(0u8..8, 1..200)) {
        let labels: Vec<LabelVector> = codes
            .iter()
            .map(|c| LabelVector::new((0..3).map(|b| c >> b & 1 == 1).collect()))
            .collect();
        let ranked = rank_labels(&labels);
        prop_assert_eq!(ranked.iter().map(|r| r.1).sum::<usize>(), labels.len());
        for w in ranked.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        for (y, c) in &ranked {
            prop_assert_eq!(labels.iter().filter(|l| *l == y).count(), *c);
        }
    }

    #[test]
    fn subsampling_only_drops_advantaged_rows(seed in 0u64..50, keep in 0.01f64..=1.0) {
        let d = gen_synthetic(&small_spec(300, seed)).unwrap();
        let y_adv = rank_labels(d.labels())[0].0.clone();
        let s = subsample_advantaged(&d, &y_adv, keep, seed).unwrap();
        let expected_kept = ((keep * s.advantaged_total as f64).ceil() as usize).min(s.advantaged_total);
        prop_assert_eq!(s.advantaged_kept, expected_kept);
        prop_assert_eq!(s.dataset.len(), d.len() - s.advantaged_total + expected_kept);
        let others = |ds: &simfair::data::Dataset| -> Vec<(Vec<f64>, u32, LabelVector)> {
            (0..ds.len())
                .filter(|&i| ds.labels()[i] != y_adv)
                .map(|i| (ds.features().row(i).to_vec(), ds.sensitive()[i].value(), ds.labels()[i].clone()))
                .collect()
        };
        prop_assert_eq!(others(&s.dataset), others(&d));
    }
}

#[test]
fn split_standardizes_with_training_statistics() {
    let d = gen_synthetic(&small_spec(1000, 3)).unwrap();
    let (train, test) = split(&d, 0.7, 3).unwrap();
    assert_eq!(train.len() + test.len(), d.len());
    for j in 0..train.num_features() {
        let col: Vec<f64> = train.features().iter_rows().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
    }
}

#[test]
fn generated_data_survives_csv_round_trip() {
    let d = gen_synthetic(&small_spec(200, 9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("data.csv");
    write_csv(&d, fs::File::create(&csv_path).unwrap()).unwrap();
    let manifest_path = dir.path().join("data.manifest");
    fs::write(&manifest_path, manifest_for(&d, "data.csv")).unwrap();
    let loaded = load(&Manifest::from_file(&manifest_path).unwrap()).unwrap();
    assert_eq!(loaded, d);
}
