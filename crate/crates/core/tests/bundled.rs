use std::path::PathBuf;

use kgbias::config::AuditConfig;
use kgbias::synth::{bundled_corpus, bundled_plan, desk_config};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

#[test]
fn shipped_corpus_matches_generator() {
    let corpus = bundled_corpus();
    let triples = std::fs::read_to_string(data_dir().join("triples.tsv")).unwrap();
    let labels = std::fs::read_to_string(data_dir().join("labels.tsv")).unwrap();
    assert_eq!(triples, corpus.triples_tsv());
    assert_eq!(labels, corpus.labels_tsv());
}

#[test]
fn shipped_config_matches_generator() {
    let mut shipped = AuditConfig::load(&data_dir().join("audit.json")).unwrap();
    shipped.base_dir = PathBuf::new();
    assert_eq!(shipped, desk_config(&bundled_plan()));
    shipped.validate().unwrap();
}
