//! Per-sentence score arithmetic: clipping, snowballing correction, ensembles.
//!
//! All scores live in [0, 1]; 1 means "confidently hallucinated". The
//! snowballing correction raises scores of sentences that follow already
//! suspicious prefixes, modeling how one fabrication drags later sentences
//! with it. The weighted ensemble folds the three base detectors into a
//! single vector before correction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default sample count N used by the sampling-based detectors.
pub const DEFAULT_SAMPLE_COUNT: usize = 5;
/// Default snowballing threshold θ.
pub const DEFAULT_THETA: f64 = 0.1;
/// Default direct-question ensemble weight C_D.
pub const DEFAULT_DQ_WEIGHT: f64 = 0.2;

/// Error for malformed score arithmetic inputs.
#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn invalid(msg: impl Into<String>) -> ScoreError {
    ScoreError::InvalidArgument(msg.into())
}

/// clip(n) = min(1, max(0, n)). Non-finite input is refused.
pub fn clip(n: f64) -> Result<f64, ScoreError> {
    if !n.is_finite() {
        return Err(invalid(format!("clip input must be finite, got {n}")));
    }
    Ok(n.clamp(0.0, 1.0))
}

/// A per-sentence score vector produced by one detection method.
///
/// Values are aligned with the passage's sentence order and always lie in
/// [0, 1]; the method id records how the vector was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    method: String,
    values: Vec<f64>,
}

impl ScoreVector {
    /// Builds a vector, enforcing non-emptiness and the [0, 1] range.
    pub fn new(method: impl Into<String>, values: Vec<f64>) -> Result<Self, ScoreError> {
        let method = method.into();
        if values.is_empty() {
            return Err(invalid(format!("score vector {method:?} is empty")));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(invalid(format!(
                    "score vector {method:?} value {v} at index {i} is outside [0, 1]"
                )));
            }
        }
        Ok(Self { method, values })
    }

    /// Method identifier, e.g. `fibe` or `sbc(fibe+dq)`.
    #[must_use]
    pub fn method(&self) -> &str {
        &self.method
    }

    /// The per-sentence scores.
    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of sentences covered.
    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false for a constructed vector; present for completeness.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ensemble weights (C_F, C_D, C_P) for the fill-in-the-blank, direct-question
/// and sampling-support vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    fibe: f64,
    dq: f64,
    scgp: f64,
}

impl EnsembleWeights {
    /// Builds a weight triple; each weight must be finite and ≥ 0.
    pub fn new(fibe: f64, dq: f64, scgp: f64) -> Result<Self, ScoreError> {
        for (name, w) in [("C_F", fibe), ("C_D", dq), ("C_P", scgp)] {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("weight {name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(Self { fibe, dq, scgp })
    }

    /// Weight on the fill-in-the-blank vector.
    #[must_use]
    pub fn fibe(&self) -> f64 {
        self.fibe
    }

    /// Weight on the direct-question vector.
    #[must_use]
    pub fn dq(&self) -> f64 {
        self.dq
    }

    /// Weight on the sampling-support vector.
    #[must_use]
    pub fn scgp(&self) -> f64 {
        self.scgp
    }
}

/// Snowballing-correction parameter θ: the amount of accumulated prefix
/// suspicion tolerated before later sentences are penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbcParams {
    theta: f64,
}

impl SbcParams {
    /// Builds the parameter; θ must be finite and ≥ 0.
    pub fn new(theta: f64) -> Result<Self, ScoreError> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(invalid(format!("theta must be finite and >= 0, got {theta}")));
        }
        Ok(Self { theta })
    }

    /// The threshold θ.
    #[must_use]
    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Default for SbcParams {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
        }
    }
}

/// Snowballing correction:
///
/// `out[i] = clip(base[i] + max(0, Σ_{k<i} base[k] − θ) / len)`
///
/// Prefix sums are taken over the *uncorrected* input scores.
#[must_use]
pub fn sbc_correct(base: &ScoreVector, params: &SbcParams) -> ScoreVector {
    let len = base.values.len() as f64;
    let mut prefix = 0.0;
    let mut out = Vec::with_capacity(base.values.len());
    for &v in &base.values {
        let carried = (prefix - params.theta).max(0.0) / len;
        out.push((v + carried).clamp(0.0, 1.0));
        prefix += v;
    }
    ScoreVector {
        method: format!("sbc({})", base.method),
        values: out,
    }
}

/// Pre-clip weighted sums `C_F·f + C_D·d + C_P·p`, treating absent vectors as
/// zero. Exposed so ranking properties can be checked before clipping.
pub fn weighted_sums(
    fibe: Option<&ScoreVector>,
    dq: Option<&ScoreVector>,
    scgp: Option<&ScoreVector>,
    weights: &EnsembleWeights,
) -> Result<Vec<f64>, ScoreError> {
    let inputs = [
        ("fibe", fibe, weights.fibe),
        ("dq", dq, weights.dq),
        ("scgp", scgp, weights.scgp),
    ];
    let mut len: Option<usize> = None;
    for (name, v, w) in &inputs {
        match v {
            Some(v) => match len {
                None => len = Some(v.len()),
                Some(l) if l != v.len() => {
                    return Err(invalid(format!(
                        "vector {name} has {} sentences, expected {l}",
                        v.len()
                    )))
                }
                Some(_) => {}
            },
            None if *w != 0.0 => {
                return Err(invalid(format!(
                    "vector {name} is absent but carries nonzero weight {w}"
                )))
            }
            None => {}
        }
    }
    let len = len.ok_or_else(|| invalid("no input vectors given"))?;
    let mut sums = vec![0.0; len];
    for (_, v, w) in &inputs {
        if let Some(v) = v {
            for (s, x) in sums.iter_mut().zip(v.values()) {
                *s += w * x;
            }
        }
    }
    Ok(sums)
}

/// Weighted ensemble `H_+(i) = clip(C_F·H_F(i) + C_D·H_D(i) + C_P·H_P(i))`.
///
/// Absent vectors must carry weight 0. The method id records which vectors
/// went in, joined with `+` in fibe/dq/scgp order.
pub fn ensemble_weighted(
    fibe: Option<&ScoreVector>,
    dq: Option<&ScoreVector>,
    scgp: Option<&ScoreVector>,
    weights: &EnsembleWeights,
) -> Result<ScoreVector, ScoreError> {
    let sums = weighted_sums(fibe, dq, scgp, weights)?;
    let parts: Vec<&str> = [
        fibe.map(|v| v.method()),
        dq.map(|v| v.method()),
        scgp.map(|v| v.method()),
    ]
    .into_iter()
    .flatten()
    .collect();
    Ok(ScoreVector {
        method: parts.join("+"),
        values: sums.into_iter().map(|s| s.clamp(0.0, 1.0)).collect(),
    })
}

/// Composed score `H_∘`: the weighted ensemble followed by snowballing
/// correction.
pub fn ensemble_composed(
    fibe: Option<&ScoreVector>,
    dq: Option<&ScoreVector>,
    scgp: Option<&ScoreVector>,
    weights: &EnsembleWeights,
    params: &SbcParams,
) -> Result<ScoreVector, ScoreError> {
    Ok(sbc_correct(
        &ensemble_weighted(fibe, dq, scgp, weights)?,
        params,
    ))
}
