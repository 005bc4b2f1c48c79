//! Benchmark dataset ingest: native records, upstream import, task labels.
//!
//! The native on-disk format is JSON Lines, one versioned record per passage
//! (`"schema": "passage.v1"`). Exports from the upstream annotated corpus are
//! accepted in the same file with their original field names
//! (`gpt3_sentences`, `annotation`, `gpt3_text_samples`, `wiki_bio_test_idx`)
//! plus a `concept` (or explicit `prompt`) field, since the prompt line has
//! to be reconstructible. A whole-file JSON array works too.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::passage::{AnnotationLabel, Passage};

/// Binary classification task over sentence annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Positive = major or minor inaccurate.
    NonFact,
    /// Positive = major inaccurate only.
    NonFactStar,
    /// Positive = accurate.
    Factual,
}

impl Task {
    /// All three tasks in reporting order.
    pub const ALL: [Task; 3] = [Task::NonFact, Task::NonFactStar, Task::Factual];

    /// Human-readable name used in reports.
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            Task::NonFact => "NonFact",
            Task::NonFactStar => "NonFact*",
            Task::Factual => "Factual",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary labels for a passage under the given task, aligned with sentences.
#[must_use]
pub fn task_labels(passage: &Passage, task: Task) -> Vec<bool> {
    passage
        .annotations
        .iter()
        .map(|a| match task {
            Task::NonFact => matches!(
                a,
                AnnotationLabel::MajorInaccurate | AnnotationLabel::MinorInaccurate
            ),
            Task::NonFactStar => matches!(a, AnnotationLabel::MajorInaccurate),
            Task::Factual => matches!(a, AnnotationLabel::Accurate),
        })
        .collect()
}

/// Passages excluded from evaluation by default (annotation defects upstream).
pub const DEFAULT_EXCLUDED_CONCEPTS: [&str; 2] =
    ["Vitaliano Brancati", "Emperor Wenxuan of Northern Qi"];

/// Dataset ingest and serialization errors.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {index}: unknown annotation label {label:?}")]
    UnknownLabel { index: usize, label: String },
    #[error("no usable passages in {path}")]
    Empty { path: String },
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
}

/// Counts reported by [`ingest`]; totals are reported, not asserted, so that
/// upstream accounting discrepancies surface without blocking a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    /// Records seen in the file.
    pub records_read: usize,
    /// Records skipped as structurally malformed (details in `warnings`).
    pub malformed: usize,
    /// Passages dropped by the exclusion list.
    pub excluded: usize,
    /// Passages kept.
    pub passages: usize,
    /// Sentences across all well-formed passages, before exclusion.
    pub sentences_read: usize,
    /// Sentences across kept passages.
    pub sentences: usize,
    /// Per-record skip notes.
    pub warnings: Vec<String>,
}

// ---- native schema ---------------------------------------------------------

const NATIVE_SCHEMA: &str = "passage.v1";

#[derive(Debug, Serialize, Deserialize)]
struct NativeRecord {
    schema: String,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concept: Option<String>,
    prompt: String,
    sentences: Vec<String>,
    annotations: Vec<String>,
    #[serde(default)]
    samples: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct UpstreamRecord {
    gpt3_sentences: Vec<String>,
    annotation: Vec<String>,
    #[serde(default)]
    gpt3_text_samples: Vec<String>,
    #[serde(default)]
    wiki_bio_test_idx: Option<u64>,
    #[serde(default)]
    concept: Option<String>,
    #[serde(default)]
    prompt: Option<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses one record in either schema into a passage.
///
/// Returns `Ok(None)` with a note pushed to `warnings` for structurally
/// malformed records; unknown annotation labels abort the ingest.
fn record_to_passage(
    index: usize,
    value: &serde_json::Value,
    warnings: &mut Vec<String>,
) -> Result<Option<Passage>, DatasetError> {
    // Warnings are 1-based like file line numbers.
    let mut skip = |msg: String| {
        warnings.push(format!("record {}: {msg}", index + 1));
        Ok(None)
    };
    let obj = match value.as_object() {
        Some(o) => o,
        None => return skip("not a JSON object".into()),
    };

    let (id, concept, prompt, sentences, raw_annotations, samples) = if obj.contains_key("schema") {
        let rec: NativeRecord = match serde_json::from_value(value.clone()) {
            Ok(r) => r,
            Err(e) => return skip(format!("bad native record: {e}")),
        };
        if rec.schema != NATIVE_SCHEMA {
            return Err(DatasetError::Record {
                index,
                message: format!("unsupported schema {:?}", rec.schema),
            });
        }
        (
            rec.id,
            rec.concept,
            rec.prompt,
            rec.sentences,
            rec.annotations,
            rec.samples,
        )
    } else if obj.contains_key("gpt3_sentences") {
        let rec: UpstreamRecord = match serde_json::from_value(value.clone()) {
            Ok(r) => r,
            Err(e) => return skip(format!("bad upstream record: {e}")),
        };
        let prompt = match (&rec.prompt, &rec.concept) {
            (Some(p), _) => p.clone(),
            (None, Some(c)) => format!("This is a Wikipedia passage about {c}:"),
            (None, None) => {
                return skip("upstream record has neither prompt nor concept".into())
            }
        };
        let id = rec
            .wiki_bio_test_idx
            .map(|i| i.to_string())
            .unwrap_or_else(|| format!("row{index}"));
        (
            id,
            rec.concept,
            prompt,
            rec.gpt3_sentences,
            rec.annotation,
            rec.gpt3_text_samples,
        )
    } else {
        return skip("record matches neither the native nor the upstream schema".into());
    };

    let mut annotations = Vec::with_capacity(raw_annotations.len());
    for label in &raw_annotations {
        match AnnotationLabel::parse(label) {
            Some(a) => annotations.push(a),
            None => {
                return Err(DatasetError::UnknownLabel {
                    index,
                    label: label.clone(),
                })
            }
        }
    }

    match Passage::new(id, concept, prompt, sentences, annotations, samples) {
        Ok(p) => Ok(Some(p)),
        Err(e) => skip(e.to_string()),
    }
}

fn parse_records(path: &Path, text: &str) -> Result<Vec<serde_json::Value>, DatasetError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        serde_json::from_str::<Vec<serde_json::Value>>(text).map_err(|e| DatasetError::Record {
            index: 0,
            message: format!("bad JSON array in {}: {e}", path.display()),
        })
    } else {
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value = serde_json::from_str(line).map_err(|e| DatasetError::Record {
                index: lineno,
                message: format!("bad JSON on line {}: {e}", lineno + 1),
            })?;
            out.push(value);
        }
        Ok(out)
    }
}

/// Reads a dataset file (native or upstream schema), applies the exclusion
/// list (matched against passage concept or id), and returns the passages in
/// file order together with the ingest accounting.
pub fn ingest(
    path: impl AsRef<Path>,
    exclusions: &[String],
) -> Result<(Vec<Passage>, IngestSummary), DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let records = parse_records(path, &text)?;

    let excluded_set: BTreeSet<&str> = exclusions.iter().map(|s| s.trim()).collect();
    let mut summary = IngestSummary::default();
    let mut passages = Vec::new();
    for (index, value) in records.iter().enumerate() {
        summary.records_read += 1;
        let Some(passage) = record_to_passage(index, value, &mut summary.warnings)? else {
            summary.malformed += 1;
            continue;
        };
        summary.sentences_read += passage.len();
        let concept_matches = passage
            .concept
            .as_deref()
            .is_some_and(|c| excluded_set.contains(c.trim()));
        if concept_matches || excluded_set.contains(passage.id.as_str()) {
            summary.excluded += 1;
            continue;
        }
        summary.sentences += passage.len();
        passages.push(passage);
    }
    summary.passages = passages.len();
    if passages.is_empty() {
        return Err(DatasetError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok((passages, summary))
}

/// Writes passages in the native JSONL schema.
pub fn write_native(path: impl AsRef<Path>, passages: &[Passage]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for p in passages {
        let rec = NativeRecord {
            schema: NATIVE_SCHEMA.to_string(),
            id: p.id.clone(),
            concept: p.concept.clone(),
            prompt: p.prompt.clone(),
            sentences: p.sentences.clone(),
            annotations: p.annotations.iter().map(|a| a.as_str().to_string()).collect(),
            samples: p.samples.clone(),
        };
        let line = serde_json::to_string(&rec).expect("native record serializes");
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// The default exclusion list as owned strings (convenience for callers).
#[must_use]
pub fn default_exclusions() -> Vec<String> {
    DEFAULT_EXCLUDED_CONCEPTS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upstream_line(concept: &str, sentences: &[&str], labels: &[&str], idx: u64) -> String {
        serde_json::json!({
            "gpt3_text": sentences.join(" "),
            "wiki_bio_text": "reference text",
            "gpt3_sentences": sentences,
            "annotation": labels,
            "wiki_bio_test_idx": idx,
            "gpt3_text_samples": ["sample one", "sample two"],
            "concept": concept,
        })
        .to_string()
    }

    fn write_temp(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn ingests_upstream_records_and_applies_exclusions() {
        let lines = vec![
            upstream_line("Ada Lovelace", &["s1.", "s2."], &["accurate", "major_inaccurate"], 1),
            upstream_line(
                "Vitaliano Brancati",
                &["x1.", "x2.", "x3."],
                &["accurate", "accurate", "accurate"],
                2,
            ),
            upstream_line("Alan Turing", &["t1."], &["minor_inaccurate"], 3),
        ];
        let f = write_temp(&lines);
        let (passages, summary) = ingest(f.path(), &default_exclusions()).unwrap();
        assert_eq!(passages.len(), 2);
        assert_eq!(summary.records_read, 3);
        assert_eq!(summary.excluded, 1);
        assert_eq!(summary.sentences_read, 6);
        assert_eq!(summary.sentences, 3);
        assert_eq!(passages[0].id, "1");
        assert_eq!(passages[0].prompt, "This is a Wikipedia passage about Ada Lovelace:");
        assert_eq!(passages[0].samples.len(), 2);
    }

    #[test]
    fn empty_exclusion_list_keeps_everything() {
        let lines = vec![
            upstream_line("Vitaliano Brancati", &["x."], &["accurate"], 9),
            upstream_line("Ada Lovelace", &["y."], &["accurate"], 10),
        ];
        let f = write_temp(&lines);
        let (passages, summary) = ingest(f.path(), &[]).unwrap();
        assert_eq!(passages.len(), 2);
        assert_eq!(summary.excluded, 0);
    }

    #[test]
    fn malformed_records_are_skipped_with_warnings() {
        let lines = vec![
            upstream_line("Ada Lovelace", &["s1."], &["accurate"], 1),
            // annotation list shorter than sentences
            upstream_line("Grace Hopper", &["a.", "b."], &["accurate"], 2),
            serde_json::json!({"something": "else"}).to_string(),
        ];
        let f = write_temp(&lines);
        let (passages, summary) = ingest(f.path(), &[]).unwrap();
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].id, "1");
        assert_eq!(summary.malformed, 2);
        assert_eq!(summary.warnings.len(), 2);
        assert!(summary.warnings[0].contains("record 2"));
        assert!(summary.warnings[1].contains("record 3"));
    }

    #[test]
    fn unknown_label_is_a_hard_error() {
        let lines = vec![upstream_line("Ada Lovelace", &["s1."], &["sort_of_accurate"], 1)];
        let f = write_temp(&lines);
        let err = ingest(f.path(), &[]).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownLabel { index: 0, .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest("/nonexistent/nowhere.jsonl", &[]).unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
    }

    #[test]
    fn all_records_malformed_is_empty_error() {
        let lines = vec![serde_json::json!({"x": 1}).to_string()];
        let f = write_temp(&lines);
        let err = ingest(f.path(), &[]).unwrap_err();
        assert!(matches!(err, DatasetError::Empty { .. }));
    }

    #[test]
    fn native_round_trip_preserves_passages() {
        let lines = vec![
            upstream_line("Ada Lovelace", &["s1.", "s2."], &["accurate", "minor_inaccurate"], 1),
        ];
        let f = write_temp(&lines);
        let (passages, _) = ingest(f.path(), &[]).unwrap();

        let out = tempfile::NamedTempFile::new().unwrap();
        write_native(out.path(), &passages).unwrap();
        let (reread, summary) = ingest(out.path(), &[]).unwrap();
        assert_eq!(reread, passages);
        assert_eq!(summary.records_read, 1);
    }

    #[test]
    fn task_labels_map_the_three_tasks() {
        let p = Passage::new(
            "p",
            None,
            "prompt:",
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                AnnotationLabel::MajorInaccurate,
                AnnotationLabel::MinorInaccurate,
                AnnotationLabel::Accurate,
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(task_labels(&p, Task::NonFact), vec![true, true, false]);
        assert_eq!(task_labels(&p, Task::NonFactStar), vec![true, false, false]);
        assert_eq!(task_labels(&p, Task::Factual), vec![false, false, true]);
    }

    #[test]
    fn nonfact_is_complement_of_factual() {
        let p = Passage::new(
            "p",
            None,
            "prompt:",
            vec!["a".into(), "b".into()],
            vec![AnnotationLabel::MinorInaccurate, AnnotationLabel::Accurate],
            vec![],
        )
        .unwrap();
        let nf = task_labels(&p, Task::NonFact);
        let fa = task_labels(&p, Task::Factual);
        assert!(nf.iter().zip(&fa).all(|(a, b)| *a != *b));
    }
}
