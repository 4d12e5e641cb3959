use std::path::{Path, PathBuf};

use simfair::data::{load, parse_manifest, rank_label_groups, SynthSpec};

fn repo_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(repo_file(name)).unwrap()
}

#[test]
fn manifests_parse() {
    let adult = parse_manifest(&read("manifests/adult.manifest"), Path::new("/data")).unwrap();
    assert_eq!(adult.csv_path, PathBuf::from("/data/adult.csv"));
    assert_eq!(adult.sensitive, "age");
    assert_eq!(adult.targets.len(), 3);
    let credit = parse_manifest(&read("manifests/credit.manifest"), Path::new("/data")).unwrap();
    assert_eq!(credit.targets[0].0, "default payment next month");
    assert_eq!(credit.num_groups, Some(2));
}

#[test]
fn benchmark_spec_matches_defaults() {
    let spec = SynthSpec::from_kv_text(&read("manifests/benchmark.synth")).unwrap();
    assert_eq!(spec, SynthSpec::default());
}

/// Needs the raw CSVs: `SIMFAIR_DATA_DIR=/path cargo test -- --ignored`.
#[test]
#[ignore]
fn real_datasets_have_published_sizes() {
    let dir = PathBuf::from(std::env::var("SIMFAIR_DATA_DIR").expect("SIMFAIR_DATA_DIR"));
    let adult = load(&parse_manifest(&read("manifests/adult.manifest"), &dir).unwrap()).unwrap();
    assert_eq!(adult.len(), 48_842);
    assert_eq!(rank_label_groups(&adult).len(), 152);
    let credit = load(&parse_manifest(&read("manifests/credit.manifest"), &dir).unwrap()).unwrap();
    assert_eq!(credit.len(), 30_000);
}
