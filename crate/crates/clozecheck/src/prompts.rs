//! The six chat prompt templates and their byte-exact rendering.
//!
//! Each template is a fixed sequence of role-tagged segments with named
//! `{placeholder}` slots and pinned sampling parameters. Rendering is a
//! single pass: bound values are emitted verbatim and never rescanned, so
//! braces inside passage text cannot inject placeholders.
//!
//! Several segments intentionally carry trailing spaces; they are part of
//! the wire bytes and protected by golden-file tests.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::backend::{ChatMessage, CompletionRequest, Role};

/// Placeholder bindings for one render call.
pub type Bindings<'a> = BTreeMap<&'a str, String>;

/// Rendering errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template} is missing a binding for {{{placeholder}}}")]
    MissingBinding {
        template: &'static str,
        placeholder: String,
    },
    #[error("template {template} has no placeholder {{{placeholder}}}")]
    UnknownBinding {
        template: &'static str,
        placeholder: String,
    },
}

/// Identifies one of the six templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateId {
    /// Regenerate a comparison passage from the original prompt.
    Resample,
    /// Ask whether a regenerated passage supports a sentence.
    ScgpSupport,
    /// Build the fill-in-the-blank exam from the original passage.
    FibeCreate,
    /// Answer the exam's masked variables.
    FibeAnswer,
    /// Grade examinee answers against the original sentence.
    FibeScore,
    /// Ask directly whether a sentence is true under the prompt context.
    DqKnown,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::Resample,
        TemplateId::ScgpSupport,
        TemplateId::FibeCreate,
        TemplateId::FibeAnswer,
        TemplateId::FibeScore,
        TemplateId::DqKnown,
    ];

    /// Stable lowercase identifier (used in transcripts and file names).
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            TemplateId::Resample => "resample",
            TemplateId::ScgpSupport => "scgp_support",
            TemplateId::FibeCreate => "fibe_create",
            TemplateId::FibeAnswer => "fibe_answer",
            TemplateId::FibeScore => "fibe_score",
            TemplateId::DqKnown => "dq_known",
        }
    }

    fn def(&self) -> &'static TemplateDef {
        match self {
            TemplateId::Resample => &RESAMPLE,
            TemplateId::ScgpSupport => &SCGP_SUPPORT,
            TemplateId::FibeCreate => &FIBE_CREATE,
            TemplateId::FibeAnswer => &FIBE_ANSWER,
            TemplateId::FibeScore => &FIBE_SCORE,
            TemplateId::DqKnown => &DQ_KNOWN,
        }
    }

    /// Sampling parameters pinned for this template.
    #[must_use]
    pub fn params(&self) -> (f64, f64, Option<i64>) {
        let def = self.def();
        (def.temperature, def.top_p, def.seed)
    }
}

struct TemplateDef {
    segments: &'static [(Role, &'static str)],
    temperature: f64,
    top_p: f64,
    seed: Option<i64>,
}

// Roles strictly alternate and every template ends on a user message, so
// the next completion is always the assistant's.

static RESAMPLE: TemplateDef = TemplateDef {
    segments: &[
        (
            Role::System,
            // The first line ends with a space before its newline.
            "You are the author of an excellent Wikipedia article. \nWrite an article of about {n_sentences} lines.",
        ),
        (Role::User, "This is a Wikipedia passage about {concept}:"),
    ],
    temperature: 1.0,
    top_p: 1.0,
    seed: Some(0),
};

static SCGP_SUPPORT: TemplateDef = TemplateDef {
    segments: &[
        (Role::System, "You are a helpful assistant."),
        (
            Role::User,
            "Context: {context}\n\nSentence: {sentence}\n\nIs the sentence supported by the context above? Answer Yes or No:",
        ),
    ],
    temperature: 0.0,
    top_p: 0.0,
    // No pinned seed for this template.
    seed: None,
};

static FIBE_CREATE: TemplateDef = TemplateDef {
    segments: &[
        (
            Role::System,
            concat!(
                "You are an expert in natural language processing for English, so you output your answer in English.\n",
                "\n",
                "You are now going to make up \"Fill-in-the-blank Questions\" based on the \"Texts\" for testing students' understanding.\n",
                // Ends with a trailing space.
                "Be sure to follow the instructions in the \"Precautions\" section. ",
            ),
        ),
        (
            Role::User,
            concat!(
                "Making up \"Fill-in-the-blank Questions\" from only sentences with serial numbers in the following \"Texts\".\n",
                "\n",
                "# Precautions\n",
                "* Extract a subject of each sentence.\n",
                "* Extract only single concrete eigenexpression as an blank; i.e., extract time, date, location, number, and, proper noun.\n",
                "  + Select only few words as an object from a phrase containing three or more words; e.g., phrase \"pathophysiology of many diseases\" --> blank <pathophysiology:academic_field>.\n",
                "  + Don't extract blanks that do not settle on one correct answer., such as \"beautiful\", \"good\", etc.\n",
                "* Specify the hypernym as hint of each blank and subject;\n",
                "  + e.g., <John Smith:person>, <31:day>, <July:month>, <2023:year>, <New York:city>, <Kanagawa:prefecture>, <World Cup:sports event>, <carpenter:profession>, <4:number of cars>",
            ),
        ),
        (
            Role::Assistant,
            concat!(
                "Texts:\n",
                "``What kind of person is Alice?''\n",
                "[s0] Alice Liddell (21 March 1955 - 1 Dec. 2020) is the founder of Philz.\n",
                "[s1] Her branches were located in the USA and in Japan, for a total of two branches.",
            ),
        ),
        (
            Role::User,
            concat!(
                "Fill-in-the-blank Questions: (from [s0],[s1])\n",
                "Text=[s0] Alice Liddell (21 March 1955 - 1 Dec. 2020) is the founder of Philz.\n",
                "Subject=<Alice Liddell:person>\n",
                "Blanks=<21:day>, <March:month>, <1955:year>, <1:day>, <Dec.:month>, <2020:year>, <Philz:shop>\n",
                "----\n",
                "Text=[s1] Her branches were located in the USA and in Japan, for a total of two branches.\n",
                "Subject=<Her branches:branches>\n",
                "Blanks=<USA:country>, <Japan:country>, <two:number of branches>",
            ),
        ),
        (Role::Assistant, "Texts:\n{context}{sentences}"),
        (Role::User, "Fill-in-the-blank Questions: (from {sids})"),
    ],
    temperature: 0.0,
    top_p: 0.0,
    seed: Some(0),
};

static FIBE_ANSWER: TemplateDef = TemplateDef {
    segments: &[
        (
            Role::System,
            concat!(
                "You are the world champion in English quizzes.\n",
                "\n",
                "You are now going to answer the \"Fill-in-the-blank Questions\".\n",
                "Be sure to follow the instructions in the \"Precautions\" section.\n",
                "Be sure to output the serial number of each sentence (e.g., \"[s0]\", \"[s3]\").",
            ),
        ),
        (
            Role::User,
            concat!(
                "Output new \"Fill-in-the-blank Answers\" that fills in the variables in the following \"Fill-in-the-blank Questions\" with concrete variable values.\n",
                "\n",
                "# Precautions\n",
                "* The variable naming convention is \"$HINT_NUMBER\"; e.g., \"$date_0\".\n",
                "* Each variable value has a different value each other.\n",
                "* Terms that are not variables in each sentence should be left as they are.",
            ),
        ),
        (
            Role::Assistant,
            concat!(
                "Fill-in-the-blank Questions:\n",
                "``What kind of person is Alice?''\n",
                "[s0] Alice (born \"$date_0\") is the founder of \"$place_1\".\n",
                "[s1] It is a \"$place_2\" founded in \"$location_3\" in \"$year_4\".",
            ),
        ),
        (
            Role::User,
            concat!(
                "Fill-in-the-blank Answers: (up to [s1])\n",
                "``What kind of person is Alice?''\n",
                "[s0] Alice (born 21 March 1955) is the founder of Philz.\n",
                "[s1] It is a coffee shop founded in Berkeley in 1985.",
            ),
        ),
        (Role::Assistant, "Fill-in-the-blank Questions:\n{context}{source}"),
        (
            Role::User,
            "Fill-in-the-blank Answers: (up to [s{max_sentences}])\n{context}",
        ),
    ],
    temperature: 0.5,
    top_p: 1.0,
    seed: Some(0),
};

static FIBE_SCORE: TemplateDef = TemplateDef {
    segments: &[
        (
            Role::System,
            concat!(
                "You are an English test grader.\n",
                "\n",
                "A student's answer to a fill-in-the-blank question should be scored between 0 and 100 points based on a comparison with the \"Correct answer\".\n",
                "  * A score of 0 shall be scored if the student answers is in complete contradiction with the \"Correct answer\"\n",
                "  * A score of 100 shall be scored if the student answers is in complete agreement with the \"Correct answer\"\n",
                "  * Score them very carefully, as you only want to pass the very best students.",
            ),
        ),
        (
            Role::User,
            concat!(
                "Correct answer: {correct_answer}\n",
                "\n",
                "Student name (inside square brackets) and answers:\n",
                "{student_answers}\n",
                "\n",
                "Answer only the name and score for each student, such as \"[Sat] 50\":",
            ),
        ),
    ],
    temperature: 0.0,
    top_p: 0.0,
    seed: Some(0),
};

static DQ_KNOWN: TemplateDef = TemplateDef {
    segments: &[
        (
            Role::System,
            "You are a machine-learning model that responds using only your prior knowledge.",
        ),
        (
            Role::User,
            "{context}\nClaim:{claim}\n====\nIs the above claim true?\nAnswer only Yes or No:",
        ),
    ],
    temperature: 0.0,
    top_p: 0.0,
    seed: Some(0),
};

/// A rendered prompt: messages plus the template's sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub template: TemplateId,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: Option<i64>,
}

impl RenderedPrompt {
    /// Completes the prompt into a request for `model`, asking for `n`
    /// simultaneous choices.
    #[must_use]
    pub fn into_request(self, model: &str, n: u32, want_token_probs: bool) -> CompletionRequest {
        CompletionRequest {
            model: model.to_string(),
            messages: self.messages,
            temperature: self.temperature,
            top_p: self.top_p,
            seed: self.seed,
            n,
            want_token_probs,
        }
    }

    /// Like [`Self::into_request`], but lets a run-level seed override the
    /// template's pinned seed. Templates that are deliberately seedless
    /// (greedy decoding) are left seedless.
    #[must_use]
    pub fn into_request_seeded(
        self,
        model: &str,
        n: u32,
        want_token_probs: bool,
        seed_override: Option<i64>,
    ) -> CompletionRequest {
        let mut request = self.into_request(model, n, want_token_probs);
        if let (Some(seed), Some(_)) = (seed_override, request.seed) {
            request.seed = Some(seed);
        }
        request
    }

    /// Human- and diff-friendly transcript: a parameter header followed by
    /// one `=== role ===` section per message. This is the golden-file
    /// format.
    #[must_use]
    pub fn transcript(&self) -> String {
        let seed = match self.seed {
            Some(s) => s.to_string(),
            None => "none".to_string(),
        };
        let mut out = format!(
            "template: {}\ntemperature: {}\ntop_p: {}\nseed: {}\n",
            self.template.name(),
            self.temperature,
            self.top_p,
            seed
        );
        for message in &self.messages {
            out.push_str("\n=== ");
            out.push_str(message.role.as_str());
            out.push_str(" ===\n");
            out.push_str(&message.content);
            out.push('\n');
        }
        out
    }
}

/// Renders a template with the given bindings.
///
/// Bindings must cover the template's placeholders exactly: a missing one
/// fails, and so does an extra one (it would be silently dropped text).
pub fn render(id: TemplateId, bindings: &Bindings<'_>) -> Result<RenderedPrompt, PromptError> {
    let def = id.def();
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut messages = Vec::with_capacity(def.segments.len());
    for &(role, segment) in def.segments {
        messages.push(ChatMessage::new(role, substitute(id, segment, bindings, &mut used)?));
    }
    for key in bindings.keys() {
        if !used.contains(key) {
            return Err(PromptError::UnknownBinding {
                template: id.name(),
                placeholder: (*key).to_string(),
            });
        }
    }
    Ok(RenderedPrompt {
        template: id,
        messages,
        temperature: def.temperature,
        top_p: def.top_p,
        seed: def.seed,
    })
}

/// Single-pass substitution. Template text is trusted static data — every
/// `{` opens a placeholder — while bound values are copied verbatim.
fn substitute<'a>(
    id: TemplateId,
    segment: &'static str,
    bindings: &'a Bindings<'_>,
    used: &mut BTreeSet<&'a str>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(segment.len());
    let mut rest = segment;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after.find('}').expect("static template closes every brace");
        let name = &after[..end];
        match bindings.get_key_value(name) {
            Some((key, value)) => {
                out.push_str(value);
                used.insert(*key);
            }
            None => {
                return Err(PromptError::MissingBinding {
                    template: id.name(),
                    placeholder: name.to_string(),
                })
            }
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
