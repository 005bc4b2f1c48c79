//! Regenerates the committed end-to-end fixtures: the corpus file, the
//! recorded transcript store, and the golden score/report outputs.
//!
//! Ignored by default because it rewrites files under `tests/fixtures/`.
//! Run it after changing the fixture corpus, the scripted model, a prompt
//! template, or any output format:
//!
//! ```text
//! cargo test -p clozecheck-cli --test regen_fixtures -- --ignored
//! ```
//!
//! Then inspect the diff and commit the regenerated files together with the
//! change that motivated them.

mod common;

use std::fs;

use clozecheck::backend::{Client, TranscriptStore};
use clozecheck_cli::{
    cmd_evaluate, detect_with_client, load_passages, BackendMode, EvaluateOptions, ScoreFile,
};

#[test]
#[ignore = "rewrites the committed fixtures under tests/fixtures/"]
fn regenerate_recorded_fixtures() {
    let dir = common::fixture_dir();
    fs::create_dir_all(&dir).expect("create fixture dir");
    let corpus = dir.join("corpus.jsonl");
    let transcripts = dir.join("transcripts.jsonl");
    let golden = dir.join("golden");

    clozecheck::dataset::write_native(&corpus, &common::fixture_passages())
        .expect("write fixture corpus");
    if transcripts.exists() {
        fs::remove_file(&transcripts).expect("drop stale transcripts");
    }
    if golden.exists() {
        fs::remove_dir_all(&golden).expect("drop stale golden outputs");
    }

    // Mode is irrelevant here: the client is injected directly.
    let cfg = common::fixture_config(corpus, golden.clone(), BackendMode::Live);
    let store = TranscriptStore::open(&transcripts).expect("open transcript store");
    let client = Client::recording(common::scripted_backend(), store, cfg.parallelism);
    let passages = load_passages(&cfg).expect("load fixture corpus");

    let report = detect_with_client(&cfg, &client, &passages).expect("score fixture corpus");
    assert_eq!(report.done.len(), 3, "all passages scored");
    assert!(report.failed.is_empty(), "failures: {:?}", report.failed);

    verify_designed_scores(&golden);

    let opts = EvaluateOptions {
        prefix_analysis: true,
        ..EvaluateOptions::default()
    };
    let eval = cmd_evaluate(&cfg, &opts).expect("evaluate fixture scores");
    assert_eq!(eval.results.len(), 15, "5 roles x 3 tasks");
    for file in &eval.files {
        assert!(file.exists(), "missing evaluation output {}", file.display());
    }
    println!("regenerated fixtures under {}", dir.display());
}

/// The scripted model was designed around hand-computed score tables; check
/// the recorded run actually lands on them before blessing it as golden.
fn verify_designed_scores(golden: &std::path::Path) {
    const TOL: f64 = 1e-9;
    let mut files = std::collections::BTreeMap::new();
    for (id, role, want) in common::designed_scores() {
        let file: &ScoreFile = files.entry(id).or_insert_with(|| {
            let path = golden.join("scores").join(format!("{id}.json"));
            let text = fs::read_to_string(&path).expect("read score file");
            serde_json::from_str(&text).expect("parse score file")
        });
        let got = file
            .methods
            .get(role)
            .unwrap_or_else(|| panic!("{id}: no {role} vector"));
        assert_eq!(got.values().len(), want.len(), "{id}/{role} length");
        for (i, (g, w)) in got.values().iter().zip(&want).enumerate() {
            assert!(
                (g - w).abs() <= TOL,
                "{id}/{role}[{i}]: designed {w}, recorded {g}"
            );
        }
        assert!(file.warnings.is_empty(), "{id} warned: {:?}", file.warnings);
    }

    let aldous = &files["fixture-aldous"];
    assert_eq!(
        aldous.evidence.grade_completions.len(),
        4,
        "one grader slot per sentence"
    );
    assert!(
        aldous.evidence.grade_completions[3].is_none(),
        "nobody answered the last exam question, so no grading call was made"
    );
    for (id, variables) in [
        ("fixture-renata", 9),
        ("fixture-aldous", 11),
        ("fixture-mirelle", 8),
    ] {
        assert_eq!(
            files[id].evidence.exam_variables,
            Some(variables),
            "{id} exam variable count"
        );
    }
}
