use std::path::Path;

use serde::Deserialize;
use storyops::llm::{BpeCounter, HeuristicCounter, TokenCounter};

#[derive(Deserialize)]
struct Reference {
    text: String,
    cl100k: usize,
}

fn fixture() -> Vec<Reference> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/token_reference.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn heuristic_within_ten_percent_of_reference() {
    for r in fixture() {
        let est = HeuristicCounter.count(&r.text) as f64;
        let err = (est - r.cl100k as f64).abs() / r.cl100k as f64;
        assert!(
            err <= 0.10,
            "estimate {est} vs {} ({:.1}%): {}",
            r.cl100k,
            err * 100.0,
            r.text
        );
    }
}

/// Exact parity with the real vocabulary; runs when STORYOPS_BPE_VOCAB
/// points at a cl100k_base.tiktoken file.
#[test]
fn bpe_matches_reference_exactly() {
    let Ok(path) = std::env::var("STORYOPS_BPE_VOCAB") else {
        eprintln!("STORYOPS_BPE_VOCAB not set; skipping");
        return;
    };
    let bpe = BpeCounter::from_file(Path::new(&path)).unwrap();
    for r in fixture() {
        assert_eq!(bpe.count(&r.text), r.cl100k, "{}", r.text);
    }
}
