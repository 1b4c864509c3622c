//! Corpus presets over the miniature replicas in `fixtures/corpora`.

use std::fs;
use std::path::{Path, PathBuf};

use ironylab_core::corpus::{load_corpus, DatasetSpec, Label};
use serde::Deserialize;

#[derive(Deserialize)]
struct Entry {
    preset: String,
    name: String,
    file: String,
    size: usize,
    ironic: usize,
    total_tokens: usize,
    intended: usize,
}

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpora")
}

#[test]
fn replicas_match_independent_manifest() {
    let manifest: Vec<Entry> = serde_json::from_str(&fs::read_to_string(dir().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.len(), DatasetSpec::PRESETS.len());
    for e in manifest {
        let loaded = load_corpus(&DatasetSpec::preset(&e.preset, dir().join(&e.file)).unwrap()).unwrap();
        let c = &loaded.corpus;
        assert!(loaded.skipped.is_empty(), "{}: {:?}", e.preset, loaded.skipped);
        assert_eq!(c.name(), e.name);
        assert_eq!(c.len(), e.size, "{}", e.preset);
        let ironic = c.records().iter().filter(|r| r.gold == Label::Ironic).count();
        assert_eq!(ironic, e.ironic, "{}", e.preset);
        let intended = c.records().iter().filter(|r| r.intended.is_some()).count();
        assert_eq!(intended, e.intended, "{}", e.preset);
        let s = c.stats();
        assert_eq!(s.ironic_ratio, e.ironic as f64 / e.size as f64);
        assert_eq!(s.avg_token_length, e.total_tokens as f64 / e.size as f64, "{}", e.preset);
    }
}

#[test]
fn quoted_fields_survive_loading() {
    let c = load_corpus(&DatasetSpec::preset("isarcasm", dir().join("isarcasm.csv")).unwrap())
        .unwrap()
        .corpus;
    assert!(c.records().iter().any(|r| r.text.contains(',') && r.text.contains('\n')));
    let s = load_corpus(&DatasetSpec::preset("semeval", dir().join("semeval.tsv")).unwrap())
        .unwrap()
        .corpus;
    assert!(s.records().iter().any(|r| r.text.contains('"')));
}

#[test]
fn jsonl_round_trip_preserves_records() {
    let c = load_corpus(&DatasetSpec::preset("reddit", dir().join("reddit.jsonl")).unwrap())
        .unwrap()
        .corpus;
    let tmp = tempfile::NamedTempFile::new().unwrap();
    c.write_jsonl(fs::File::create(tmp.path()).unwrap()).unwrap();
    let back = ironylab_core::corpus::Corpus::read_jsonl("Reddit", tmp.path()).unwrap();
    assert_eq!(back, c);
}
