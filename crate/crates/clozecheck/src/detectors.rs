//! Detector orchestration: the direct-question check, the sampling-support
//! baseline, passage regeneration, and the suite runner that combines
//! everything into ensemble and snowball-corrected vectors.
//!
//! All detectors are zero-resource: the only information source is the
//! scored model itself, asked through fixed prompt templates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::backend::{BackendError, RunContext};
use crate::fibe::{self, FibeError, FibeEvidence};
use crate::par::parallel_map;
use crate::passage::Passage;
use crate::prompts::{render, Bindings, PromptError, TemplateId};
use crate::scoring::{
    ensemble_weighted, sbc_correct, EnsembleWeights, SbcParams, ScoreError, ScoreVector,
    DEFAULT_DQ_WEIGHT, DEFAULT_SAMPLE_COUNT,
};

/// A selectable scoring method. `Sbc` and `Ensemble` are combinators over
/// the three base detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    /// Sampling-support baseline: does each regenerated passage support the
    /// sentence?
    Scgp,
    /// Multiple-fill-in-the-blank examination.
    Fibe,
    /// Direct question: is the claim true?
    Dq,
    /// Snowballing correction applied to the aggregate vector.
    Sbc,
    /// Weighted ensemble of the active base detectors.
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Scgp,
        Method::Fibe,
        Method::Dq,
        Method::Sbc,
        Method::Ensemble,
    ];

    /// Stable lowercase identifier.
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            Method::Scgp => "scgp",
            Method::Fibe => "fibe",
            Method::Dq => "dq",
            Method::Sbc => "sbc",
            Method::Ensemble => "ensemble",
        }
    }

    /// True for the detectors that produce a base score vector themselves.
    #[must_use]
    pub fn is_base(&self) -> bool {
        matches!(self, Method::Scgp | Method::Fibe | Method::Dq)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scgp" => Ok(Method::Scgp),
            "fibe" => Ok(Method::Fibe),
            "dq" => Ok(Method::Dq),
            "sbc" => Ok(Method::Sbc),
            "ensemble" => Ok(Method::Ensemble),
            other => Err(format!(
                "unknown method {other:?}; expected one of scgp, fibe, dq, sbc, ensemble"
            )),
        }
    }
}

/// Errors from detector orchestration.
#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Fibe(#[from] FibeError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("every requested method failed for passage {passage}: {details}")]
    AllMethodsFailed { passage: String, details: String },
}

/// Tunable parameters shared by the whole suite.
#[derive(Debug, Clone)]
pub struct DetectorConfig {
    /// Number of examinees / regenerated samples N.
    pub n_samples: usize,
    /// Snowballing-correction threshold.
    pub sbc: SbcParams,
    /// Explicit ensemble weights; `None` resolves them from the active
    /// methods.
    pub weights: Option<EnsembleWeights>,
    /// Whether the direct question weighs the answer by its first-token
    /// probability when the backend provides one.
    pub dq_use_token_prob: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLE_COUNT,
            sbc: SbcParams::default(),
            weights: None,
            dq_use_token_prob: true,
        }
    }
}

impl DetectorConfig {
    /// Ensemble weights for a given set of active base methods: the exam
    /// and support vectors split the unit weight when both participate,
    /// and the direct question contributes a fixed small nudge.
    #[must_use]
    pub fn resolve_weights(&self, fibe: bool, dq: bool, scgp: bool) -> EnsembleWeights {
        if let Some(w) = self.weights {
            return w;
        }
        let c_f = if fibe {
            if scgp {
                0.5
            } else {
                1.0
            }
        } else {
            0.0
        };
        let c_p = if scgp {
            if fibe {
                0.5
            } else {
                1.0
            }
        } else {
            0.0
        };
        let c_d = if dq { DEFAULT_DQ_WEIGHT } else { 0.0 };
        EnsembleWeights::new(c_f, c_d, c_p).expect("fixed weights are valid")
    }
}

/// Joins a multi-line sample into the single-line `{context}` binding.
#[must_use]
pub fn flatten_sample(sample: &str) -> String {
    sample.replace('\n', " ")
}

/// Classifies a completion as yes/no by its leading word.
#[must_use]
pub fn classify_yes_no(completion: &str) -> Option<bool> {
    let lowered = completion.to_lowercase();
    let rest = lowered.trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = rest.chars().take_while(char::is_ascii_alphabetic).collect();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Regenerates `n` comparison passages from the original prompt in one call.
///
/// The instruction asks for roughly as many lines as the passage has
/// sentences, so supports are judged against text of similar shape.
pub fn resample_passage(
    ctx: &RunContext<'_>,
    passage: &Passage,
    n: usize,
) -> Result<Vec<String>, DetectorError> {
    if n == 0 {
        return Err(DetectorError::Input("sample count must be positive".into()));
    }
    let Some(concept) = passage.concept.as_deref() else {
        return Err(DetectorError::Input(format!(
            "passage {} has no concept; regeneration needs one",
            passage.id
        )));
    };
    let bindings: Bindings<'_> = [
        ("n_sentences", passage.sentences.len().to_string()),
        ("concept", concept.to_string()),
    ]
    .into_iter()
    .collect();
    let n = u32::try_from(n).map_err(|_| DetectorError::Input(format!("sample count {n} out of range")))?;
    let request =
        render(TemplateId::Resample, &bindings)?.into_request_seeded(&ctx.model, n, false, ctx.seed);
    let response = ctx.client.complete(&request)?;
    Ok(response.choices)
}

/// Asks whether `sample` supports `sentence`: 1.0 yes, 0.0 no, 0.5 unclear.
pub fn scgp_supported(
    ctx: &RunContext<'_>,
    sample: &str,
    sentence: &str,
) -> Result<f64, DetectorError> {
    let bindings: Bindings<'_> = [
        ("context", flatten_sample(sample)),
        ("sentence", sentence.to_string()),
    ]
    .into_iter()
    .collect();
    let request =
        render(TemplateId::ScgpSupport, &bindings)?.into_request_seeded(&ctx.model, 1, false, ctx.seed);
    let response = ctx.client.complete(&request)?;
    Ok(match classify_yes_no(&response.choices[0]) {
        Some(true) => 1.0,
        Some(false) => 0.0,
        None => 0.5,
    })
}

/// One detector's vector plus the notes collected while producing it.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub vector: ScoreVector,
    pub warnings: Vec<String>,
}

/// Sampling-support score vector: each sentence's score is the mean lack of
/// support over the sample passages, `H_P(i) = mean_j (1 − supported_ij)`.
///
/// A failed support call contributes a neutral 0.5 with a warning.
pub fn scgp_vector(
    ctx: &RunContext<'_>,
    passage: &Passage,
    samples: &[String],
) -> Result<MethodRun, DetectorError> {
    if samples.is_empty() {
        return Err(DetectorError::Input(format!(
            "passage {}: the support baseline needs at least one sample passage",
            passage.id
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..passage.sentences.len())
        .flat_map(|i| (0..samples.len()).map(move |j| (i, j)))
        .collect();
    let outcomes = parallel_map(&pairs, ctx.parallelism, |_, &(i, j)| {
        scgp_supported(ctx, &samples[j], &passage.sentences[i])
    });

    let mut warnings = Vec::new();
    let mut values = vec![0.0; passage.sentences.len()];
    for ((i, j), outcome) in pairs.into_iter().zip(outcomes) {
        let supported = match outcome {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!(
                    "passage {}: support check sentence {i} sample {j} failed ({e}); counted neutral",
                    passage.id
                ));
                0.5
            }
        };
        values[i] += (1.0 - supported) / samples.len() as f64;
    }
    let vector = ScoreVector::new("scgp", values)?;
    Ok(MethodRun { vector, warnings })
}

/// Asks whether the model believes the claim, returning `known` in [0, 1].
///
/// With token probabilities available and enabled, a yes counts `p`, a no
/// counts `1 − p`, where `p` is the first-token probability; otherwise the
/// answer is binary. Unparseable answers count as not known.
pub fn dq_known(
    ctx: &RunContext<'_>,
    passage: &Passage,
    sentence: &str,
    use_token_prob: bool,
) -> Result<f64, DetectorError> {
    let bindings: Bindings<'_> = [
        ("context", passage.context_line()),
        ("claim", sentence.to_string()),
    ]
    .into_iter()
    .collect();
    let request = render(TemplateId::DqKnown, &bindings)?.into_request_seeded(
        &ctx.model,
        1,
        use_token_prob,
        ctx.seed,
    );
    let response = ctx.client.complete(&request)?;
    let answer = classify_yes_no(&response.choices[0]);
    let prob = response
        .first_token_probs
        .as_ref()
        .and_then(|p| p.first().copied());
    Ok(match (answer, use_token_prob, prob) {
        (Some(true), true, Some(p)) => p.clamp(0.0, 1.0),
        (Some(false), true, Some(p)) => 1.0 - p.clamp(0.0, 1.0),
        (Some(answer), true, None) => {
            log::warn!("token probabilities unavailable; scoring the direct answer as binary");
            f64::from(answer)
        }
        (Some(answer), false, _) => f64::from(answer),
        (None, _, _) => 0.0,
    })
}

/// Direct-question score vector `H_D(i) = 1 − known(i)`.
///
/// A failed call scores the sentence a neutral 0.5 with a warning.
pub fn dq_vector(
    ctx: &RunContext<'_>,
    passage: &Passage,
    use_token_prob: bool,
) -> Result<MethodRun, DetectorError> {
    let outcomes = parallel_map(&passage.sentences, ctx.parallelism, |_, sentence| {
        dq_known(ctx, passage, sentence, use_token_prob)
    });
    let mut warnings = Vec::new();
    let values = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, outcome)| match outcome {
            Ok(known) => 1.0 - known,
            Err(e) => {
                warnings.push(format!(
                    "passage {}: direct question for sentence {i} failed ({e}); scored neutral",
                    passage.id
                ));
                0.5
            }
        })
        .collect();
    let vector = ScoreVector::new("dq", values)?;
    Ok(MethodRun { vector, warnings })
}

/// Raw model output retained from a suite run, for auditing.
#[derive(Debug, Clone, Default)]
pub struct SuiteEvidence {
    /// The parsed exam, when the exam detector ran.
    pub exam: Option<fibe::Exam>,
    /// Raw exam completions.
    pub fibe: Option<FibeEvidence>,
}

/// Everything one passage produced: score vectors keyed by role, warnings,
/// and evidence.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    /// Vectors keyed by role: `scgp`, `fibe`, `dq`, `ensemble`, `composed`.
    /// Each vector's method id records how it was built (e.g. the composed
    /// vector over all three bases is `sbc(fibe+dq+scgp)`).
    pub scores: BTreeMap<String, ScoreVector>,
    pub warnings: Vec<String>,
    pub evidence: SuiteEvidence,
}

/// Runs the requested methods over one passage.
///
/// `samples` feeds the support baseline (regenerated or dataset-provided).
/// A base method that fails outright is dropped with a warning; ensemble
/// and composed vectors are computed over the survivors with re-resolved
/// weights. Only when nothing survives does the suite fail.
pub fn run_method_suite(
    ctx: &RunContext<'_>,
    passage: &Passage,
    samples: &[String],
    methods: &[Method],
    config: &DetectorConfig,
) -> Result<SuiteOutcome, DetectorError> {
    if methods.is_empty() {
        return Err(DetectorError::Input("no methods requested".into()));
    }
    if config.n_samples == 0 {
        return Err(DetectorError::Input("sample count must be positive".into()));
    }
    let want = |m: Method| methods.contains(&m);
    if !methods.iter().any(Method::is_base) {
        return Err(DetectorError::Input(
            "at least one base method (scgp, fibe, dq) is required".into(),
        ));
    }

    let mut warnings: Vec<String> = Vec::new();
    let mut evidence = SuiteEvidence::default();
    let mut scores: BTreeMap<String, ScoreVector> = BTreeMap::new();

    let drop_method = |m: Method, e: DetectorError, warnings: &mut Vec<String>| {
        warnings.push(format!(
            "passage {}: method {m} failed ({e}); dropped from this passage",
            passage.id
        ));
    };

    let mut fibe_vec: Option<ScoreVector> = None;
    if want(Method::Fibe) {
        match fibe::run_fibe(ctx, passage, config.n_samples) {
            Ok(outcome) => {
                warnings.extend(outcome.warnings);
                evidence.exam = Some(outcome.exam);
                evidence.fibe = Some(outcome.evidence);
                fibe_vec = Some(outcome.scores);
            }
            Err(e) => drop_method(Method::Fibe, e.into(), &mut warnings),
        }
    }

    let mut dq_vec: Option<ScoreVector> = None;
    if want(Method::Dq) {
        match dq_vector(ctx, passage, config.dq_use_token_prob) {
            Ok(run) => {
                warnings.extend(run.warnings);
                dq_vec = Some(run.vector);
            }
            Err(e) => drop_method(Method::Dq, e, &mut warnings),
        }
    }

    let mut scgp_vec: Option<ScoreVector> = None;
    if want(Method::Scgp) {
        match scgp_vector(ctx, passage, samples) {
            Ok(run) => {
                warnings.extend(run.warnings);
                scgp_vec = Some(run.vector);
            }
            Err(e) => drop_method(Method::Scgp, e, &mut warnings),
        }
    }

    for (role, vector) in [("fibe", &fibe_vec), ("dq", &dq_vec), ("scgp", &scgp_vec)] {
        if let Some(v) = vector {
            scores.insert(role.to_string(), v.clone());
        }
    }

    // Aggregate over the surviving bases; a single survivor passes through
    // with weight 1 (plus the fixed nudge when it is the direct question).
    let survivors = (fibe_vec.is_some(), dq_vec.is_some(), scgp_vec.is_some());
    if survivors.0 || survivors.1 || survivors.2 {
        let weights = config.resolve_weights(survivors.0, survivors.1, survivors.2);
        let aggregate = ensemble_weighted(
            fibe_vec.as_ref(),
            dq_vec.as_ref(),
            scgp_vec.as_ref(),
            &weights,
        )?;
        if want(Method::Ensemble) {
            scores.insert("ensemble".to_string(), aggregate.clone());
        }
        if want(Method::Sbc) {
            scores.insert("composed".to_string(), sbc_correct(&aggregate, &config.sbc));
        }
    }

    if scores.is_empty() {
        return Err(DetectorError::AllMethodsFailed {
            passage: passage.id.clone(),
            details: warnings.join("; "),
        });
    }
    Ok(SuiteOutcome {
        scores,
        warnings,
        evidence,
    })
}
