//! The multiple-fill-in-the-blank examination detector.
//!
//! Pipeline per passage, all through the same black-box model:
//!
//! 1. **Create** — one greedy completion turns the passage into an exam:
//!    each sentence gets a subject plus a list of concrete blanks.
//! 2. **Answer** — the masked passage is handed back in one request with
//!    `n` choices; each choice is an independent examinee filling in every
//!    variable from prior knowledge alone.
//! 3. **Score** — per sentence, a grader completion marks every examinee's
//!    answer against the original sentence (0–100).
//!
//! A sentence's hallucination score is one minus the mean normalized grade:
//! facts the model can reliably reproduce under masking grade high and
//! score low; confabulated facts cannot be recovered and score high.

mod parse;

pub use parse::{parse_answers, parse_grades, Exam, ExamBlank, ExamQuestion};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::backend::{BackendError, RunContext};
use crate::passage::Passage;
use crate::prompts::{render, Bindings, PromptError, TemplateId};
use crate::scoring::{ScoreError, ScoreVector};

/// Default number of examinees sitting the exam.
pub const DEFAULT_EXAMINEES: usize = 5;

const EXAMINEE_NAMES: [&str; 5] = ["Tom", "Amy", "Max", "Leo", "Ava"];

/// Name used for examinee `j` in grader prompts. The first five are fixed;
/// overflow examinees become `St1`, `St2`, …
#[must_use]
pub fn examinee_name(j: usize) -> String {
    match EXAMINEE_NAMES.get(j) {
        Some(name) => (*name).to_string(),
        None => format!("St{}", j - EXAMINEE_NAMES.len() + 1),
    }
}

/// Errors from the exam pipeline.
#[derive(Debug, Error)]
pub enum FibeError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("exam protocol: {0}")]
    Protocol(String),
}

/// Raw model output retained for auditing.
#[derive(Debug, Clone, Default)]
pub struct FibeEvidence {
    /// The exam-author completion.
    pub create_completion: String,
    /// One answer-sheet completion per examinee.
    pub answer_completions: Vec<String>,
    /// Grader completion per sentence; `None` when no grading call was made
    /// (nobody answered) or the call failed.
    pub grade_completions: Vec<Option<String>>,
}

/// Everything the exam produced for one passage.
#[derive(Debug, Clone)]
pub struct FibeOutcome {
    /// Per-sentence hallucination scores in [0, 1].
    pub scores: ScoreVector,
    /// The parsed exam (blanks, variables, masked sentences).
    pub exam: Exam,
    /// Grades per sentence and examinee; `None` marks a grading call that
    /// failed and was imputed as neutral.
    pub grades: Vec<Option<Vec<f64>>>,
    /// Human-readable notes about degraded steps.
    pub warnings: Vec<String>,
    /// Raw completions.
    pub evidence: FibeEvidence,
}

fn serial_lines(sentences: &[String]) -> String {
    sentences
        .iter()
        .enumerate()
        .map(|(k, s)| format!("\n[s{k}] {s}"))
        .collect()
}

fn serial_ids(n: usize) -> String {
    (0..n).map(|k| format!("[s{k}]")).collect::<Vec<_>>().join(",")
}

/// Step 1: ask the model to author the exam, then parse it.
pub fn create_exam(ctx: &RunContext<'_>, passage: &Passage) -> Result<(Exam, String), FibeError> {
    let bindings: Bindings<'_> = [
        ("context", passage.context_line()),
        ("sentences", serial_lines(&passage.sentences)),
        ("sids", serial_ids(passage.sentences.len())),
    ]
    .into_iter()
    .collect();
    let request =
        render(TemplateId::FibeCreate, &bindings)?.into_request_seeded(&ctx.model, 1, false, ctx.seed);
    let response = ctx.client.complete(&request)?;
    let completion = response.choices[0].clone();
    let exam = Exam::from_completion(&passage.sentences, &completion);
    Ok((exam, completion))
}

/// Step 2: have `n_examinees` independent examinees fill in the exam.
///
/// One request with `n` choices; each choice is parsed into serial → answer.
pub fn answer_exam(
    ctx: &RunContext<'_>,
    passage: &Passage,
    exam: &Exam,
    n_examinees: usize,
) -> Result<(Vec<BTreeMap<usize, String>>, Vec<String>), FibeError> {
    if n_examinees == 0 {
        return Err(FibeError::Protocol("at least one examinee is required".into()));
    }
    let n_sentences = passage.sentences.len();
    let bindings: Bindings<'_> = [
        ("context", passage.context_line()),
        ("source", exam.masked_source()),
        ("max_sentences", (n_sentences - 1).to_string()),
    ]
    .into_iter()
    .collect();
    let n = u32::try_from(n_examinees)
        .map_err(|_| FibeError::Protocol(format!("examinee count {n_examinees} out of range")))?;
    let request =
        render(TemplateId::FibeAnswer, &bindings)?.into_request_seeded(&ctx.model, n, false, ctx.seed);
    let response = ctx.client.complete(&request)?;
    let answers = response
        .choices
        .iter()
        .map(|choice| parse_answers(choice, n_sentences))
        .collect();
    Ok((answers, response.choices))
}

/// Step 3 for one sentence: grade the examinees that answered it.
///
/// Returns one grade per examinee (0 for anyone who skipped the sentence or
/// whom the grader failed to score) plus the grader completion.
pub fn grade_sentence(
    ctx: &RunContext<'_>,
    sentence: &str,
    answers: &[BTreeMap<usize, String>],
    sentence_index: usize,
) -> Result<(Vec<f64>, Option<String>), FibeError> {
    let present: Vec<(usize, String)> = answers
        .iter()
        .enumerate()
        .filter_map(|(j, a)| a.get(&sentence_index).map(|ans| (j, ans.clone())))
        .collect();
    if present.is_empty() {
        // Nobody answered: nothing to grade, everyone fails this sentence.
        return Ok((vec![0.0; answers.len()], None));
    }
    let names: Vec<String> = present.iter().map(|(j, _)| examinee_name(*j)).collect();
    let student_answers = present
        .iter()
        .zip(&names)
        .map(|((_, answer), name)| format!("[{name}] {answer}"))
        .collect::<Vec<_>>()
        .join("\n");
    let bindings: Bindings<'_> = [
        ("correct_answer", sentence.to_string()),
        ("student_answers", student_answers),
    ]
    .into_iter()
    .collect();
    let request =
        render(TemplateId::FibeScore, &bindings)?.into_request_seeded(&ctx.model, 1, false, ctx.seed);
    let response = ctx.client.complete(&request)?;
    let completion = response.choices[0].clone();
    let parsed = parse_grades(&completion, &names);
    let mut grades = vec![0.0; answers.len()];
    for ((j, _), grade) in present.iter().zip(parsed) {
        grades[*j] = grade;
    }
    Ok((grades, Some(completion)))
}

/// Converts per-sentence grade rows into the hallucination score vector:
/// `1 − mean(grade)/100`, with failed (imputed) rows scoring neutral 0.5.
pub fn score_vector_from_grades(
    grades: &[Option<Vec<f64>>],
    n_examinees: usize,
) -> Result<ScoreVector, ScoreError> {
    let values: Vec<f64> = grades
        .iter()
        .map(|row| match row {
            Some(g) => 1.0 - g.iter().sum::<f64>() / (100.0 * n_examinees as f64),
            None => 0.5,
        })
        .collect();
    ScoreVector::new("fibe", values)
}

/// Runs the full exam pipeline over one passage.
///
/// Failures on the passage-level calls (create, answer) abort the method;
/// a failed per-sentence grading call degrades to a neutral 0.5 score for
/// that sentence with a warning.
pub fn run_fibe(
    ctx: &RunContext<'_>,
    passage: &Passage,
    n_examinees: usize,
) -> Result<FibeOutcome, FibeError> {
    let (exam, create_completion) = create_exam(ctx, passage)?;
    let (answers, answer_completions) = answer_exam(ctx, passage, &exam, n_examinees)?;

    let mut warnings = Vec::new();
    let mut grades: Vec<Option<Vec<f64>>> = Vec::with_capacity(passage.sentences.len());
    let mut grade_completions = Vec::with_capacity(passage.sentences.len());
    for (i, sentence) in passage.sentences.iter().enumerate() {
        match grade_sentence(ctx, sentence, &answers, i) {
            Ok((row, completion)) => {
                grades.push(Some(row));
                grade_completions.push(completion);
            }
            Err(e) => {
                warnings.push(format!(
                    "passage {}: grading sentence {i} failed ({e}); scored neutral",
                    passage.id
                ));
                grades.push(None);
                grade_completions.push(None);
            }
        }
    }

    let scores = score_vector_from_grades(&grades, n_examinees)?;
    Ok(FibeOutcome {
        scores,
        exam,
        grades,
        warnings,
        evidence: FibeEvidence {
            create_completion,
            answer_completions,
            grade_completions,
        },
    })
}
