//! Shared fixture corpus and scripted model for the end-to-end tests.
//!
//! Three small annotated passages, each with hand-designed model behavior:
//! every prompt the pipeline can render gets a deterministic, parseable
//! completion. Recording this model once produces the committed transcript
//! store; replaying that store must reproduce the committed golden outputs
//! byte for byte.

use std::path::{Path, PathBuf};

use clozecheck::backend::{
    Backend, BackendError, CompletionRequest, CompletionResponse, FnBackend,
};
use clozecheck::detectors::{flatten_sample, DetectorConfig, Method};
use clozecheck::passage::{AnnotationLabel, Passage};
use clozecheck_cli::{
    BackendMode, RunConfig, SamplesSource, DEFAULT_BACKEND_URL, DEFAULT_CREDENTIAL_ENV,
    DEFAULT_MODEL,
};

/// Directory holding the committed fixtures.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// One fixture passage plus the scripted model's opinions about it.
struct Subject {
    id: &'static str,
    concept: &'static str,
    sentences: &'static [&'static str],
    labels: &'static [AnnotationLabel],
    /// Regenerated sample passages (two lines each).
    samples: &'static [&'static str],
    /// `supports[i]` lists the sample indices that support sentence `i`.
    supports: &'static [&'static [usize]],
    /// Direct-question verdict and first-token probability per sentence.
    direct: &'static [(&'static str, f64)],
    /// Exam-author completion.
    exam: &'static str,
    /// One answer-sheet completion per examinee.
    sheets: &'static [&'static str; 5],
    /// `grades[i][j]`: the grader's mark for examinee `j` on sentence `i`.
    /// An empty row marks a sentence nobody answered (no grading call).
    grades: &'static [&'static [u32]],
}

const EXAMINEES: [&str; 5] = ["Tom", "Amy", "Max", "Leo", "Ava"];

const RENATA: Subject = Subject {
    id: "fixture-renata",
    concept: "Renata Voss",
    sentences: &[
        "Renata Voss is a German marine biologist who studies bioluminescent plankton.",
        "She was born in Lübeck in 1968 and earned her doctorate at the University of Kiel in 1994.",
        "Voss leads the plankton ecology group at the Baltic Institute of Oceanography.",
    ],
    labels: &[
        AnnotationLabel::MinorInaccurate,
        AnnotationLabel::MajorInaccurate,
        AnnotationLabel::Accurate,
    ],
    samples: &[
        "Renata Voss is a German marine biologist.\nShe heads the plankton ecology group at the Baltic Institute of Oceanography.",
        "Renata Voss is a German marine biologist who studies bioluminescent plankton in the Baltic Sea.\nHer group works at the Baltic Institute of Oceanography.",
        "Renata Voss is a marine biologist from Germany known for research on glowing plankton.\nShe runs a group at the Baltic Institute of Oceanography.",
        "Renata Voss is a German biologist studying bioluminescent plankton.\nShe directs the plankton ecology group at the Baltic Institute of Oceanography.",
        "Renata Voss is a German marine biologist born in Lübeck in 1968.\nShe earned a doctorate at the University of Kiel and leads a research group in oceanography.",
    ],
    supports: &[&[0, 1, 2, 3], &[4], &[0, 1, 2, 3, 4]],
    direct: &[("Yes.", 0.8), ("No.", 0.7), ("Yes.", 1.0)],
    exam: "Text=[s0] Renata Voss is a German marine biologist who studies bioluminescent plankton.\n\
           Subject=<Renata Voss:person>\n\
           Blanks=<German:nationality>, <marine biologist:profession>, <bioluminescent plankton:organism>\n\
           ----\n\
           Text=[s1] She was born in Lübeck in 1968 and earned her doctorate at the University of Kiel in 1994.\n\
           Subject=<She:person>\n\
           Blanks=<Lübeck:city>, <1968:year>, <University of Kiel:university>, <1994:year>\n\
           ----\n\
           Text=[s2] Voss leads the plankton ecology group at the Baltic Institute of Oceanography.\n\
           Subject=<Voss:person>\n\
           Blanks=<plankton ecology:field>, <Baltic Institute of Oceanography:institute>",
    sheets: &[
        "[s0] Renata Voss is a German marine biologist who studies bioluminescent plankton.\n\
         [s1] She was born in Hamburg in 1975 and earned her doctorate at the University of Hamburg in 1999.\n\
         [s2] Voss leads the plankton ecology group at the Baltic Institute of Oceanography.",
        "[s0] Renata Voss is a German marine biologist who studies bioluminescent plankton.\n\
         [s1] She was born in Kiel in 1968 and earned her doctorate at the University of Kiel in 1996.\n\
         [s2] Voss leads the plankton ecology group at the Baltic Institute of Oceanography.",
        "[s0] Renata Voss is a European marine biologist who studies bioluminescent plankton.\n\
         [s1] She was born in Bremen in 1970 and earned her doctorate at the University of Bremen in 2001.\n\
         [s2] Voss leads the plankton ecology group at the Baltic Institute of Oceanography.",
        "[s0] Renata Voss is a German marine biologist who studies bioluminescent plankton.\n\
         [s1] She was born in Rostock in 1966 and earned her doctorate at the University of Rostock in 1992.\n\
         [s2] Voss leads the plankton research group at the Baltic Institute of Oceanography.",
        "[s0] Renata Voss is a German marine biologist who studies bioluminescent plankton.\n\
         [s1] She was born in Hamburg in 1972 and earned her doctorate at the University of Hamburg in 1997.\n\
         [s2] Voss leads the plankton ecology group at the Baltic Institute of Oceanography.",
    ],
    grades: &[
        &[100, 100, 80, 100, 100],
        &[0, 20, 0, 0, 0],
        &[100, 100, 100, 90, 100],
    ],
};

const ALDOUS: Subject = Subject {
    id: "fixture-aldous",
    concept: "Aldous Pemberton",
    sentences: &[
        "Aldous Pemberton was an English clockmaker active in the late eighteenth century.",
        "He kept a workshop on Fleet Street in London from 1782 until his retirement.",
        "Pemberton is remembered for a musical longcase clock that played seven melodies.",
        "In 1801 he was appointed royal clockmaker to King George III.",
    ],
    labels: &[
        AnnotationLabel::Accurate,
        AnnotationLabel::Accurate,
        AnnotationLabel::MinorInaccurate,
        AnnotationLabel::MajorInaccurate,
    ],
    samples: &[
        "Aldous Pemberton was an English clockmaker of the late eighteenth century.\nHe worked on Fleet Street in London until he retired.",
        "Aldous Pemberton was an English clockmaker.\nHis workshop stood on Fleet Street in London from 1782.",
        "Aldous Pemberton was an English clockmaker remembered for a musical longcase clock.\nHe kept premises on Fleet Street in London for decades.",
        "Aldous Pemberton was an English clockmaker active in the 1700s.\nHis longcase clocks played several melodies.",
        "Aldous Pemberton was an English clockmaker.\nLittle is recorded about his later years.",
    ],
    supports: &[&[0, 1, 2, 3, 4], &[0, 1, 2], &[2, 3], &[]],
    direct: &[("Yes.", 0.95), ("Yes.", 0.6), ("No.", 0.55), ("No.", 0.9)],
    exam: "Text=[s0] Aldous Pemberton was an English clockmaker active in the late eighteenth century.\n\
           Subject=<Aldous Pemberton:person>\n\
           Blanks=<English:nationality>, <clockmaker:profession>, <late eighteenth century:period>\n\
           ----\n\
           Text=[s1] He kept a workshop on Fleet Street in London from 1782 until his retirement.\n\
           Subject=<He:person>\n\
           Blanks=<Fleet Street:street>, <London:city>, <1782:year>\n\
           ----\n\
           Text=[s2] Pemberton is remembered for a musical longcase clock that played seven melodies.\n\
           Subject=<Pemberton:person>\n\
           Blanks=<musical longcase clock:object>, <seven:number>\n\
           ----\n\
           Text=[s3] In 1801 he was appointed royal clockmaker to King George III.\n\
           Subject=<he:person>\n\
           Blanks=<1801:year>, <royal clockmaker:title>, <King George III:monarch>",
    sheets: &[
        "[s0] Aldous Pemberton was an English clockmaker active in the late eighteenth century.\n\
         [s1] He kept a workshop on Fleet street in London from 1782 until his retirement.\n\
         [s2] Pemberton is remembered for a musical clock that played seven melodies.",
        "[s0] Aldous Pemberton was an English clockmaker active in the late eighteenth century.\n\
         [s1] He kept a workshop on Fleet Street in London from 1782 until his retirement.\n\
         [s2] Pemberton is remembered for a longcase clock that played seven melodies.",
        "[s0] Aldous Pemberton was an English clockmaker active in the late eighteenth century.\n\
         [s1] He kept a workshop on Fleet Street in London from 1782 until his retirement.\n\
         [s2] Pemberton is remembered for a chiming mantel clock that played five melodies.",
        "[s0] Aldous Pemberton was an English clockmaker active in the late eighteenth century.\n\
         [s1] He kept a workshop on Fleet Street in London from 1779 until his retirement.\n\
         [s2] Pemberton is remembered for a musical clock that played six melodies.",
        "[s0] Aldous Pemberton was an English clockmaker active in the late eighteenth century.\n\
         [s1] He kept a workshop on Fleet Street in London from 1782 until his retirement.\n\
         [s2] Pemberton is remembered for a tall case clock that played seven melodies.",
    ],
    grades: &[
        &[100, 100, 100, 100, 100],
        &[90, 100, 100, 80, 100],
        &[50, 60, 40, 50, 50],
        &[],
    ],
};

const MIRELLE: Subject = Subject {
    id: "fixture-mirelle",
    concept: "Mirelle Okonkwo",
    sentences: &[
        "Mirelle Okonkwo is a Nigerian architect based in Lagos.",
        "She designed the Yaba Transit Hall, completed in 2014.",
        "Okonkwo studied architecture at Ahmadu Bello University in Zaria.",
    ],
    labels: &[
        AnnotationLabel::Accurate,
        AnnotationLabel::MinorInaccurate,
        AnnotationLabel::Accurate,
    ],
    samples: &[
        "Mirelle Okonkwo is a Nigerian architect working in Lagos.\nShe studied at Ahmadu Bello University and opened her own studio.",
        "Mirelle Okonkwo is an architect based in Lagos, Nigeria.\nShe designed a transit hall in the Yaba district.",
        "Mirelle Okonkwo is a Nigerian architect.\nHer best-known building is the Yaba Transit Hall.",
        "Mirelle Okonkwo is a Nigerian architect from Lagos.\nShe trained at Ahmadu Bello University in Zaria.",
        "Mirelle Okonkwo is an architect known for public buildings across Nigeria.\nHer work spans schools, markets, and transit stations.",
    ],
    supports: &[&[0, 1, 2, 3], &[1, 2], &[0, 3]],
    direct: &[("Yes.", 0.9), ("No.", 0.5), ("Yes.", 0.85)],
    exam: "Text=[s0] Mirelle Okonkwo is a Nigerian architect based in Lagos.\n\
           Subject=<Mirelle Okonkwo:person>\n\
           Blanks=<Nigerian:nationality>, <architect:profession>, <Lagos:city>\n\
           ----\n\
           Text=[s1] She designed the Yaba Transit Hall, completed in 2014.\n\
           Subject=<She:person>\n\
           Blanks=<Yaba Transit Hall:building>, <2014:year>\n\
           ----\n\
           Text=[s2] Okonkwo studied architecture at Ahmadu Bello University in Zaria.\n\
           Subject=<Okonkwo:person>\n\
           Blanks=<architecture:field>, <Ahmadu Bello University:university>, <Zaria:city>",
    sheets: &[
        "[s0] Mirelle Okonkwo is a Nigerian architect based in Lagos.\n\
         [s1] She designed the Lagos Transit Terminal, completed in 2013.\n\
         [s2] Okonkwo studied architecture at Ahmadu Bello University in Zaria.",
        "[s0] Mirelle Okonkwo is a Nigerian architect based in Lagos.\n\
         [s1] She designed the National Arts Annex, completed in 2016.\n\
         [s2] Okonkwo studied building design at Ahmadu Bello University in Zaria.",
        "[s0] Mirelle Okonkwo is a Nigerian architect based in Lagos.\n\
         [s1] She designed the Yaba Transit Centre, completed in 2015.\n\
         [s2] Okonkwo studied architecture at Ahmadu Bello University in Zaria.",
        "[s0] Mirelle Okonkwo is a Nigerian architect based in Lagos.\n\
         [s1] She designed the Lagos Central Hall, completed in 2012.\n\
         [s2] Okonkwo studied architecture at Ahmadu Bello University in Zaria.",
        "[s0] Mirelle Okonkwo is a West African architect based in Lagos.\n\
         [s1] She designed the Ikeja Transit Hall, completed in 2014.\n\
         [s2] Okonkwo studied architecture at Ahmadu Bello University in Zaria.",
    ],
    grades: &[
        &[100, 100, 100, 100, 95],
        &[40, 30, 50, 40, 40],
        &[100, 90, 100, 100, 100],
    ],
};

const SUBJECTS: [&Subject; 3] = [&RENATA, &ALDOUS, &MIRELLE];

/// The fixture corpus as passages (native records ship without samples; the
/// support baseline regenerates them through the scripted model).
pub fn fixture_passages() -> Vec<Passage> {
    SUBJECTS
        .iter()
        .map(|s| {
            Passage::new(
                s.id,
                Some(s.concept.to_string()),
                format!("This is a Wikipedia passage about {}:", s.concept),
                s.sentences.iter().map(|t| (*t).to_string()).collect(),
                s.labels.to_vec(),
                vec![],
            )
            .expect("fixture passage is well-formed")
        })
        .collect()
}

/// Run configuration for the fixture corpus: all five methods, regenerated
/// samples, the default detector parameters, and single-threaded calls so
/// the recorded transcript order is canonical.
pub fn fixture_config(dataset: PathBuf, out: PathBuf, mode: BackendMode) -> RunConfig {
    RunConfig {
        dataset,
        out,
        methods: Method::ALL.to_vec(),
        samples_source: SamplesSource::Resampled,
        detector: DetectorConfig::default(),
        backend_url: DEFAULT_BACKEND_URL.to_string(),
        model: DEFAULT_MODEL.to_string(),
        seed: 0,
        mode,
        parallelism: 1,
        baseline: "scgp".to_string(),
        credential_env: DEFAULT_CREDENTIAL_ENV.to_string(),
        passages: None,
    }
}

/// Hallucination scores the scripted model is designed to produce, per
/// passage id and role. Derived by hand from the tables above.
pub fn designed_scores() -> Vec<(&'static str, &'static str, Vec<f64>)> {
    vec![
        ("fixture-renata", "fibe", vec![0.04, 0.96, 0.02]),
        ("fixture-renata", "dq", vec![0.2, 0.7, 0.0]),
        ("fixture-renata", "scgp", vec![0.2, 0.8, 0.0]),
        ("fixture-renata", "ensemble", vec![0.16, 1.0, 0.01]),
        (
            "fixture-renata",
            "composed",
            vec![0.16, 1.0, 0.01 + (0.16 + 1.0 - 0.1) / 3.0],
        ),
        ("fixture-aldous", "fibe", vec![0.0, 0.06, 0.5, 1.0]),
        ("fixture-aldous", "dq", vec![0.05, 0.4, 0.55, 0.9]),
        ("fixture-aldous", "scgp", vec![0.0, 0.4, 0.6, 1.0]),
        ("fixture-aldous", "ensemble", vec![0.01, 0.31, 0.66, 1.0]),
        (
            "fixture-aldous",
            "composed",
            vec![0.01, 0.31, 0.66 + (0.01 + 0.31 - 0.1) / 4.0, 1.0],
        ),
        ("fixture-mirelle", "fibe", vec![0.01, 0.6, 0.02]),
        ("fixture-mirelle", "dq", vec![0.1, 0.5, 0.15]),
        ("fixture-mirelle", "scgp", vec![0.2, 0.6, 0.6]),
        ("fixture-mirelle", "ensemble", vec![0.125, 0.7, 0.34]),
        (
            "fixture-mirelle",
            "composed",
            vec![
                0.125,
                0.7 + (0.125 - 0.1) / 3.0,
                0.34 + (0.125 + 0.7 - 0.1) / 3.0,
            ],
        ),
    ]
}

fn script_error(detail: String) -> BackendError {
    BackendError::InvalidRequest(format!("scripted model: {detail}"))
}

fn between<'a>(hay: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = hay.find(start)? + start.len();
    let len = hay[from..].find(end)?;
    Some(&hay[from..from + len])
}

fn subject_for(text: &str) -> Result<&'static Subject, BackendError> {
    SUBJECTS
        .iter()
        .find(|s| text.contains(s.concept))
        .copied()
        .ok_or_else(|| script_error("no fixture concept in request".into()))
}

/// The fixture passage and sentence index owning this exact sentence text.
fn sentence_for(sentence: &str) -> Result<(&'static Subject, usize), BackendError> {
    for subject in SUBJECTS {
        if let Some(i) = subject.sentences.iter().position(|s| *s == sentence) {
            return Ok((subject, i));
        }
    }
    Err(script_error(format!("unknown sentence {sentence:?}")))
}

fn script_resample(req: &CompletionRequest, all: &str) -> Result<CompletionResponse, BackendError> {
    let subject = subject_for(all)?;
    if req.n as usize != subject.samples.len() {
        return Err(script_error(format!(
            "expected n={} regenerated samples, got n={}",
            subject.samples.len(),
            req.n
        )));
    }
    Ok(CompletionResponse::text(
        subject.samples.iter().map(|s| (*s).to_string()).collect(),
    ))
}

fn script_support(user: &str) -> Result<CompletionResponse, BackendError> {
    let context = between(user, "Context: ", "\n\nSentence: ")
        .ok_or_else(|| script_error("support request has no context".into()))?;
    let sentence = between(user, "Sentence: ", "\n\nIs the sentence")
        .ok_or_else(|| script_error("support request has no sentence".into()))?;
    let (subject, i) = sentence_for(sentence)?;
    let k = subject
        .samples
        .iter()
        .position(|s| flatten_sample(s) == context)
        .ok_or_else(|| script_error(format!("unknown sample context {context:?}")))?;
    let verdict = if subject.supports[i].contains(&k) {
        "Yes"
    } else {
        "No"
    };
    Ok(CompletionResponse::text(vec![verdict.to_string()]))
}

fn script_answers(req: &CompletionRequest, all: &str) -> Result<CompletionResponse, BackendError> {
    let subject = subject_for(all)?;
    let sheets: Option<Vec<String>> = (0..req.n as usize)
        .map(|j| subject.sheets.get(j).map(|s| (*s).to_string()))
        .collect();
    sheets
        .map(CompletionResponse::text)
        .ok_or_else(|| script_error(format!("only {} answer sheets scripted", EXAMINEES.len())))
}

fn script_grades(user: &str) -> Result<CompletionResponse, BackendError> {
    let sentence = between(user, "Correct answer: ", "\n\nStudent name")
        .ok_or_else(|| script_error("grading request has no correct answer".into()))?;
    let (subject, i) = sentence_for(sentence)?;
    let roster = between(user, "and answers:\n", "\n\nAnswer only")
        .ok_or_else(|| script_error("grading request has no student answers".into()))?;
    let mut lines = Vec::new();
    for line in roster.lines() {
        let name = line
            .strip_prefix('[')
            .and_then(|rest| rest.split(']').next())
            .ok_or_else(|| script_error(format!("bad student line {line:?}")))?;
        let j = EXAMINEES
            .iter()
            .position(|e| *e == name)
            .ok_or_else(|| script_error(format!("unknown examinee {name:?}")))?;
        let grade = subject
            .grades
            .get(i)
            .and_then(|row| row.get(j))
            .ok_or_else(|| script_error(format!("no grade scripted for sentence {i}")))?;
        lines.push(format!("[{name}] {grade}"));
    }
    Ok(CompletionResponse::text(vec![lines.join("\n")]))
}

fn script_direct(req: &CompletionRequest, user: &str) -> Result<CompletionResponse, BackendError> {
    let claim = between(user, "\nClaim:", "\n====")
        .ok_or_else(|| script_error("direct question has no claim".into()))?;
    let (subject, i) = sentence_for(claim)?;
    let (verdict, p) = subject.direct[i];
    Ok(CompletionResponse {
        choices: vec![verdict.to_string()],
        first_token_probs: req.want_token_probs.then(|| vec![p]),
    })
}

/// A deterministic stand-in for the chat model: recognizes each prompt kind
/// by template text and answers from the fixture tables.
pub fn scripted_backend() -> Box<dyn Backend> {
    Box::new(FnBackend::new(|req: &CompletionRequest| {
        let all = req
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let user = req
            .messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        if all.contains("You are the author of an excellent Wikipedia article.") {
            script_resample(req, &all)
        } else if all.contains("Is the sentence supported by the context above?") {
            script_support(user)
        } else if all.contains("make up \"Fill-in-the-blank Questions\"") {
            script_exam(&all)
        } else if all.contains("world champion in English quizzes") {
            script_answers(req, &all)
        } else if all.contains("You are an English test grader.") {
            script_grades(user)
        } else if all.contains("Is the above claim true?") {
            script_direct(req, user)
        } else {
            Err(script_error(format!(
                "unrecognized prompt: {:.80}",
                all.replace('\n', " ")
            )))
        }
    }))
}

fn script_exam(all: &str) -> Result<CompletionResponse, BackendError> {
    let subject = subject_for(all)?;
    Ok(CompletionResponse::text(vec![subject.exam.to_string()]))
}
