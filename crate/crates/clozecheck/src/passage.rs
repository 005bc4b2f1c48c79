//! Domain types for annotated benchmark passages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentence-level factuality annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationLabel {
    MajorInaccurate,
    MinorInaccurate,
    Accurate,
}

impl AnnotationLabel {
    /// Case-insensitive parse accepting both underscore and space spellings.
    pub fn parse(s: &str) -> Option<Self> {
        let folded = s.trim().to_ascii_lowercase().replace(' ', "_");
        match folded.as_str() {
            "major_inaccurate" => Some(Self::MajorInaccurate),
            "minor_inaccurate" => Some(Self::MinorInaccurate),
            "accurate" => Some(Self::Accurate),
            _ => None,
        }
    }

    /// Canonical serialized spelling.
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MajorInaccurate => "major_inaccurate",
            Self::MinorInaccurate => "minor_inaccurate",
            Self::Accurate => "accurate",
        }
    }
}

/// Error constructing a [`Passage`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PassageError {
    #[error("passage {0}: sentence list is empty")]
    NoSentences(String),
    #[error("passage {id}: {sentences} sentences but {annotations} annotations")]
    AnnotationMismatch {
        id: String,
        sentences: usize,
        annotations: usize,
    },
    #[error("passage {0}: prompt is empty")]
    EmptyPrompt(String),
}

/// One benchmark passage: the prompt that elicited it, its sentences, their
/// annotations, and any regenerated sample texts shipped with the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    /// Opaque stable identifier (upstream row id or fixture name).
    pub id: String,
    /// Subject of the passage, when known. Required for resampling.
    pub concept: Option<String>,
    /// The original prompt line P, e.g. `This is a Wikipedia passage about X:`.
    pub prompt: String,
    /// Generated sentences in passage order.
    pub sentences: Vec<String>,
    /// One annotation per sentence.
    pub annotations: Vec<AnnotationLabel>,
    /// Regenerated sample passages provided by the dataset (may be empty).
    #[serde(default)]
    pub samples: Vec<String>,
}

impl Passage {
    /// Builds a passage, enforcing the sentence/annotation alignment.
    pub fn new(
        id: impl Into<String>,
        concept: Option<String>,
        prompt: impl Into<String>,
        sentences: Vec<String>,
        annotations: Vec<AnnotationLabel>,
        samples: Vec<String>,
    ) -> Result<Self, PassageError> {
        let id = id.into();
        let prompt = prompt.into();
        if sentences.is_empty() {
            return Err(PassageError::NoSentences(id));
        }
        if sentences.len() != annotations.len() {
            return Err(PassageError::AnnotationMismatch {
                id,
                sentences: sentences.len(),
                annotations: annotations.len(),
            });
        }
        if prompt.trim().is_empty() {
            return Err(PassageError::EmptyPrompt(id));
        }
        Ok(Self {
            id,
            concept,
            prompt,
            sentences,
            annotations,
            samples,
        })
    }

    /// Number of sentences.
    #[must_use]
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    /// True when the passage has no sentences (never holds for a constructed one).
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// The prompt line as it appears when quoted inside other prompts.
    #[must_use]
    pub fn context_line(&self) -> String {
        format!("``{}''", self.prompt)
    }
}
