//! Parsing of exam-author completions and construction of masked sentences.
//!
//! The exam author returns one block per sentence:
//!
//! ```text
//! Text=[s2] In 2007, ...
//! Subject=<McClendon:person>
//! Blanks=<co-offensive coordinator:profession>, <2007:year>
//! ----
//! ```
//!
//! Blocks are separated by dash-only lines. Each listed blank becomes a
//! passage-global variable: the same surface/hypernym pair reuses its number
//! anywhere in the passage, so the answering model sees one shared variable
//! for a fact that recurs across sentences.
//!
//! Masking rules, applied per sentence against the *original* sentence text:
//!
//! * The subject's first occurrence (ASCII case-insensitive) is claimed and
//!   never masked; if the subject is absent, masking may start anywhere.
//! * Blanks claim occurrences longest-surface-first (list order breaks
//!   ties), skipping anything already claimed, so nested surfaces cannot
//!   tear each other apart.
//! * A blank is masked only if its first claimable occurrence starts at or
//!   after the subject; earlier mentions stay visible as anchoring context.
//! * Masked occurrences are replaced by `"$hypernym_id"` — quotes included —
//!   with the hypernym kept verbatim.
//!
//! Degradation is deliberate and silent at this layer: a sentence whose
//! block is missing, unparseable, or unsafe to substitute simply keeps its
//! original text with zero blanks. Scoring layers treat those sentences as
//! fully answerable.

use std::collections::BTreeMap;

/// One extractable fact in a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamBlank {
    /// Surface form as listed by the exam author (ends trimmed).
    pub surface: String,
    /// Hypernym hint, verbatim (inner spaces preserved).
    pub hypernym: String,
    /// Passage-global variable number.
    pub variable_id: usize,
    /// Whether any occurrence was actually replaced in the masked text.
    pub masked: bool,
}

impl ExamBlank {
    /// The literal token substituted into the masked sentence.
    #[must_use]
    pub fn token(&self) -> String {
        format!("\"${}_{}\"", self.hypernym, self.variable_id)
    }
}

/// One sentence of the exam.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamQuestion {
    /// Sentence serial number within the passage.
    pub index: usize,
    /// Original sentence text.
    pub text: String,
    /// Subject surface and hypernym, when the block declared one.
    pub subject: Option<(String, String)>,
    /// Blanks in listed order.
    pub blanks: Vec<ExamBlank>,
    /// Sentence with masked blanks replaced by their variable tokens.
    pub masked_text: String,
}

impl ExamQuestion {
    fn untestable(index: usize, text: &str, subject: Option<(String, String)>) -> Self {
        Self {
            index,
            text: text.to_string(),
            subject,
            blanks: Vec::new(),
            masked_text: text.to_string(),
        }
    }

    /// True when at least one blank was replaced.
    #[must_use]
    pub fn has_masks(&self) -> bool {
        self.blanks.iter().any(|b| b.masked)
    }
}

/// A full exam over one passage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exam {
    /// One question per sentence, in passage order.
    pub questions: Vec<ExamQuestion>,
}

impl Exam {
    /// Builds the exam from the exam-author completion.
    ///
    /// Every sentence gets a question; sentences without a usable block get
    /// zero blanks and keep their text verbatim. Duplicate blocks for the
    /// same serial: first wins. Serials outside the passage are ignored.
    #[must_use]
    pub fn from_completion(sentences: &[String], completion: &str) -> Self {
        let mut chosen: BTreeMap<usize, RawBlock> = BTreeMap::new();
        for text in split_blocks(completion) {
            if let Some(block) = RawBlock::parse(&text) {
                if block.index < sentences.len() {
                    chosen.entry(block.index).or_insert(block);
                }
            }
        }

        let mut variables: BTreeMap<(String, String), usize> = BTreeMap::new();
        let mut next_id = 0usize;
        let questions = sentences
            .iter()
            .enumerate()
            .map(|(k, text)| match chosen.get(&k) {
                Some(block) => build_question(k, text, block, &mut variables, &mut next_id),
                None => ExamQuestion::untestable(k, text, None),
            })
            .collect();
        Self { questions }
    }

    /// The `{source}` binding for the answer-sheet prompt: one serial-tagged
    /// masked sentence per line, each preceded by a newline.
    #[must_use]
    pub fn masked_source(&self) -> String {
        self.questions
            .iter()
            .map(|q| format!("\n[s{}] {}", q.index, q.masked_text))
            .collect()
    }

    /// Replaces every variable token in `text` with the surface that coined
    /// it. The inverse of masking up to letter case: claiming is
    /// case-insensitive, so a reused variable restores its first listing.
    #[must_use]
    pub fn unmask(&self, text: &str) -> String {
        let mut restore: BTreeMap<String, &str> = BTreeMap::new();
        for q in &self.questions {
            for b in &q.blanks {
                restore.entry(b.token()).or_insert(&b.surface);
            }
        }
        let mut out = text.to_string();
        for (token, surface) in &restore {
            out = out.replace(token, surface);
        }
        out
    }

    /// Total number of distinct variables assigned.
    #[must_use]
    pub fn variable_count(&self) -> usize {
        self.questions
            .iter()
            .flat_map(|q| q.blanks.iter().map(|b| b.variable_id))
            .max()
            .map_or(0, |m| m + 1)
    }
}

struct RawBlock {
    index: usize,
    subject: Option<(String, String)>,
    items: Vec<(String, String)>,
    poisoned: bool,
}

impl RawBlock {
    /// Parses one block. Returns `None` when there is no usable `Text=[sK]`
    /// line — such a block cannot even be attributed to a sentence.
    fn parse(block: &str) -> Option<Self> {
        let fields = collect_fields(block);
        let text_value = fields.get("Text")?;
        let (index, _) = parse_serial(text_value)?;

        let subject = fields
            .get("Subject")
            .and_then(|v| scan_tagged(v).into_iter().next());

        let mut poisoned = false;
        let items = match fields.get("Blanks") {
            None => Vec::new(),
            Some(v) => {
                let items = scan_tagged(v);
                // Surfaces that collide with substitution syntax make the
                // whole block unsafe to rewrite.
                poisoned = items.iter().any(|(s, h)| {
                    s.contains(['$', '<', '>']) || h.contains(['$', '<', '>', '"'])
                });
                items
            }
        };

        Some(Self {
            index,
            subject,
            items,
            poisoned,
        })
    }
}

/// Splits a completion into blocks on dash-only separator lines.
fn split_blocks(completion: &str) -> Vec<String> {
    let mut blocks = vec![String::new()];
    for line in completion.lines() {
        let t = line.trim();
        if t.len() >= 2 && t.bytes().all(|b| b == b'-') {
            blocks.push(String::new());
        } else {
            let current = blocks.last_mut().expect("non-empty");
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
    }
    blocks
}

/// Collects `Key=value` fields, joining continuation lines onto the active
/// field with a single space. Later duplicates of a key are ignored.
fn collect_fields(block: &str) -> BTreeMap<&'static str, String> {
    const KEYS: [&str; 3] = ["Text", "Subject", "Blanks"];
    let mut fields: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut active: Option<&'static str> = None;
    for line in block.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut matched = false;
        for key in KEYS {
            if let Some(rest) = trimmed.strip_prefix(key).and_then(|r| r.strip_prefix('=')) {
                let key: &'static str = match key {
                    "Text" => "Text",
                    "Subject" => "Subject",
                    _ => "Blanks",
                };
                if fields.contains_key(key) {
                    active = None;
                } else {
                    fields.insert(key, rest.trim().to_string());
                    active = Some(key);
                }
                matched = true;
                break;
            }
        }
        if matched {
            continue;
        }
        if let Some(key) = active {
            let value = fields.get_mut(key).expect("active key present");
            if !value.is_empty() {
                value.push(' ');
            }
            value.push_str(trimmed);
        }
    }
    fields
}

/// Parses a `[sK] rest` prefix; returns the serial and the remainder.
pub(crate) fn parse_serial(text: &str) -> Option<(usize, &str)> {
    let rest = text.trim_start().strip_prefix("[s")?;
    let close = rest.find(']')?;
    let index: usize = rest[..close].parse().ok()?;
    Some((index, rest[close + 1..].trim()))
}

/// Extracts every `<surface:hypernym>` group from a value, splitting on the
/// *last* colon so surfaces may contain colons. Items missing a colon or
/// with an empty side are dropped.
fn scan_tagged(value: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = value;
    while let Some(open) = rest.find('<') {
        let Some(close_rel) = rest[open + 1..].find('>') else {
            break;
        };
        let inner = &rest[open + 1..open + 1 + close_rel];
        rest = &rest[open + 1 + close_rel + 1..];
        let mut parts = inner.rsplitn(2, ':');
        let hypernym = parts.next().unwrap_or("").trim();
        let surface = parts.next().unwrap_or("").trim();
        if !surface.is_empty() && !hypernym.is_empty() {
            out.push((surface.to_string(), hypernym.to_string()));
        }
    }
    out
}

/// Advances `pos` to the next char boundary of `s`.
fn bump_to_boundary(s: &str, mut pos: usize) -> usize {
    while pos < s.len() && !s.is_char_boundary(pos) {
        pos += 1;
    }
    pos
}

fn overlaps(a: (usize, usize), spans: &[(usize, usize)]) -> bool {
    spans.iter().any(|&(s, e)| a.0 < e && s < a.1)
}

/// First case-insensitive occurrence of `needle` in `folded` (both already
/// ASCII-lowercased) that does not overlap a claimed span.
fn find_claimable(folded: &str, needle: &str, from: usize, claimed: &[(usize, usize)]) -> Option<(usize, usize)> {
    let mut pos = from;
    while pos <= folded.len() {
        let start = folded.get(pos..)?.find(needle)? + pos;
        let span = (start, start + needle.len());
        if overlaps(span, claimed) {
            pos = bump_to_boundary(folded, start + 1);
        } else {
            return Some(span);
        }
    }
    None
}

fn build_question(
    index: usize,
    text: &str,
    block: &RawBlock,
    variables: &mut BTreeMap<(String, String), usize>,
    next_id: &mut usize,
) -> ExamQuestion {
    if block.poisoned || block.items.is_empty() {
        return ExamQuestion::untestable(index, text, block.subject.clone());
    }

    let folded = text.to_ascii_lowercase();
    let mut claimed: Vec<(usize, usize)> = Vec::new();

    // The subject anchors the sentence: claim its first occurrence so blanks
    // cannot punch a hole in it, and remember where maskable territory starts.
    let subject_start = match &block.subject {
        Some((surface, _)) => {
            let needle = surface.to_ascii_lowercase();
            match (!needle.is_empty())
                .then(|| find_claimable(&folded, &needle, 0, &claimed))
                .flatten()
            {
                Some(span) => {
                    claimed.push(span);
                    span.0
                }
                None => 0,
            }
        }
        None => 0,
    };

    // Claim occurrences longest-surface-first; list order breaks ties.
    let mut order: Vec<usize> = (0..block.items.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(block.items[i].0.len()));
    let mut spans_per_item: Vec<Vec<(usize, usize)>> = vec![Vec::new(); block.items.len()];
    let mut masked_per_item = vec![false; block.items.len()];
    for &i in &order {
        let needle = block.items[i].0.to_ascii_lowercase();
        let mut from = 0;
        while let Some(span) = find_claimable(&folded, &needle, from, &claimed) {
            claimed.push(span);
            spans_per_item[i].push(span);
            from = span.1;
        }
        if let Some(&first) = spans_per_item[i].first() {
            masked_per_item[i] = first.0 >= subject_start;
        }
    }

    // Variable numbers are handed out in listed order, passage-globally;
    // an identical surface/hypernym pair anywhere reuses its number.
    let blanks: Vec<ExamBlank> = block
        .items
        .iter()
        .enumerate()
        .map(|(i, (surface, hypernym))| {
            let key = (surface.to_ascii_lowercase(), hypernym.clone());
            let variable_id = *variables.entry(key).or_insert_with(|| {
                let id = *next_id;
                *next_id += 1;
                id
            });
            ExamBlank {
                surface: surface.clone(),
                hypernym: hypernym.clone(),
                variable_id,
                masked: masked_per_item[i],
            }
        })
        .collect();

    // Rebuild the sentence with every claimed occurrence of a masked blank
    // replaced by its token.
    let mut replacements: Vec<(usize, usize, String)> = Vec::new();
    for (i, blank) in blanks.iter().enumerate() {
        if blank.masked {
            let token = blank.token();
            for &(s, e) in &spans_per_item[i] {
                replacements.push((s, e, token.clone()));
            }
        }
    }
    replacements.sort_by_key(|r| r.0);
    let mut masked_text = String::with_capacity(text.len());
    let mut cursor = 0;
    for (s, e, token) in replacements {
        masked_text.push_str(&text[cursor..s]);
        masked_text.push_str(&token);
        cursor = e;
    }
    masked_text.push_str(&text[cursor..]);

    ExamQuestion {
        index,
        text: text.to_string(),
        subject: block.subject.clone(),
        blanks,
        masked_text,
    }
}

/// Parses an answer-sheet completion into serial → answer text.
///
/// Lines starting `[sK]` open (or, repeated, replace) the answer for
/// sentence `K`; other non-empty lines continue the most recent answer.
/// Serials outside `0..n_sentences` are ignored.
#[must_use]
pub fn parse_answers(completion: &str, n_sentences: usize) -> BTreeMap<usize, String> {
    let mut answers: BTreeMap<usize, String> = BTreeMap::new();
    let mut current: Option<usize> = None;
    for line in completion.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_serial(trimmed) {
            Some((k, rest)) if k < n_sentences => {
                answers.insert(k, rest.to_string());
                current = Some(k);
            }
            Some(_) => current = None,
            None => {
                if let Some(k) = current {
                    let entry = answers.get_mut(&k).expect("current answer exists");
                    if !entry.is_empty() {
                        entry.push(' ');
                    }
                    entry.push_str(trimmed);
                }
            }
        }
    }
    answers
}

/// Parses a grader completion into one score per listed name.
///
/// Expected lines look like `[Amy] 75`; the first integer after the name is
/// the score, clamped to 0–100. Names the grader never scored get 0 — an
/// unscored answer is treated as a failed answer. Repeated names: last wins.
#[must_use]
pub fn parse_grades(completion: &str, names: &[String]) -> Vec<f64> {
    let mut scores: Vec<Option<f64>> = vec![None; names.len()];
    for line in completion.lines() {
        let trimmed = line.trim();
        let Some(rest) = trimmed.strip_prefix('[') else {
            continue;
        };
        let Some(close) = rest.find(']') else {
            continue;
        };
        let name = rest[..close].trim();
        let Some(j) = names.iter().position(|n| n == name) else {
            continue;
        };
        if let Some(value) = first_integer(&rest[close + 1..]) {
            scores[j] = Some(value.min(100) as f64);
        }
    }
    scores.into_iter().map(|s| s.unwrap_or(0.0)).collect()
}

/// First run of ASCII digits in `text`, saturating on absurd lengths.
fn first_integer(text: &str) -> Option<u64> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |p| start + p);
    Some(text[start..end].parse().unwrap_or(u64::MAX))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn builds_masked_sentence_with_quoted_tokens() {
        let sents = sentences(&["Ada Lovelace was born in London in 1815."]);
        let completion = "Text=[s0] Ada Lovelace was born in London in 1815.\n\
                          Subject=<Ada Lovelace:person>\n\
                          Blanks=<London:city>, <1815:year>";
        let exam = Exam::from_completion(&sents, completion);
        let q = &exam.questions[0];
        assert_eq!(
            q.masked_text,
            "Ada Lovelace was born in \"$city_0\" in \"$year_1\"."
        );
        assert!(q.blanks.iter().all(|b| b.masked));
        assert_eq!(exam.unmask(&q.masked_text), q.text);
    }

    #[test]
    fn subject_does_not_consume_a_variable_number() {
        let sents = sentences(&["Ada visited Paris."]);
        let completion = "Text=[s0] Ada visited Paris.\nSubject=<Ada:person>\nBlanks=<Paris:city>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(exam.questions[0].blanks[0].variable_id, 0);
    }

    #[test]
    fn blank_before_subject_keeps_its_text_but_consumes_a_number() {
        let sents = sentences(&["In 1900, he moved to Paris."]);
        let completion =
            "Text=[s0] In 1900, he moved to Paris.\nSubject=<he:person>\nBlanks=<1900:year>, <Paris:city>";
        let exam = Exam::from_completion(&sents, completion);
        let q = &exam.questions[0];
        assert_eq!(q.masked_text, "In 1900, he moved to \"$city_1\".");
        assert!(!q.blanks[0].masked);
        assert_eq!(q.blanks[0].variable_id, 0, "skipped blank still numbers");
        assert!(q.blanks[1].masked);
    }

    #[test]
    fn repeated_fact_shares_one_variable_across_sentences() {
        let sents = sentences(&["Ada joined Acme.", "Bob also joined Acme."]);
        let completion = "Text=[s0] Ada joined Acme.\nSubject=<Ada:person>\nBlanks=<Acme:company>\n\
                          ----\n\
                          Text=[s1] Bob also joined Acme.\nSubject=<Bob:person>\nBlanks=<Acme:company>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(exam.questions[0].masked_text, "Ada joined \"$company_0\".");
        assert_eq!(exam.questions[1].masked_text, "Bob also joined \"$company_0\".");
        assert_eq!(exam.variable_count(), 1);
    }

    #[test]
    fn same_surface_different_hypernym_gets_a_fresh_number() {
        let sents = sentences(&["Georgia beat Georgia Tech."]);
        let completion = "Text=[s0] Georgia beat Georgia Tech.\nSubject=<x:person>\n\
                          Blanks=<Georgia Tech:university>, <Georgia:team>";
        let exam = Exam::from_completion(&sents, completion);
        let q = &exam.questions[0];
        assert_eq!(q.blanks[0].variable_id, 0);
        assert_eq!(q.blanks[1].variable_id, 1);
        // Longer surface claimed first, so "Georgia" matched the standalone one.
        assert_eq!(q.masked_text, "\"$team_1\" beat \"$university_0\".");
    }

    #[test]
    fn longer_surfaces_claim_before_nested_shorter_ones() {
        let sents = sentences(&["He led the University of Georgia and Georgia."]);
        let completion = "Text=[s0] He led the University of Georgia and Georgia.\n\
                          Subject=<He:person>\n\
                          Blanks=<Georgia:university>, <University of Georgia:university>";
        let exam = Exam::from_completion(&sents, completion);
        let q = &exam.questions[0];
        // Listed order numbers: Georgia=0, University of Georgia=1; claiming
        // order is by length, so the long form stays whole.
        assert_eq!(
            q.masked_text,
            "He led the \"$university_1\" and \"$university_0\"."
        );
    }

    #[test]
    fn claiming_is_case_insensitive() {
        let sents = sentences(&["ada lovelace lived in LONDON."]);
        let completion =
            "Text=[s0] ada lovelace lived in LONDON.\nSubject=<Ada Lovelace:person>\nBlanks=<London:city>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(
            exam.questions[0].masked_text,
            "ada lovelace lived in \"$city_0\"."
        );
    }

    #[test]
    fn all_occurrences_of_a_masked_blank_are_replaced() {
        let sents = sentences(&["Acme bought Acme Labs from Acme."]);
        let completion =
            "Text=[s0] Acme bought Acme Labs from Acme.\nSubject=<zzz:person>\nBlanks=<Acme:company>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(
            exam.questions[0].masked_text,
            "\"$company_0\" bought \"$company_0\" Labs from \"$company_0\"."
        );
    }

    #[test]
    fn missing_block_keeps_sentence_verbatim() {
        let sents = sentences(&["First sentence.", "Second sentence."]);
        let completion = "Text=[s0] First sentence.\nSubject=<First:thing>\nBlanks=<sentence:word>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(exam.questions[1].masked_text, "Second sentence.");
        assert!(exam.questions[1].blanks.is_empty());
    }

    #[test]
    fn poisoned_surface_disables_the_whole_block() {
        let sents = sentences(&["Price was $5 in Paris."]);
        let completion =
            "Text=[s0] Price was $5 in Paris.\nSubject=<Price:thing>\nBlanks=<$5:price>, <Paris:city>";
        let exam = Exam::from_completion(&sents, completion);
        let q = &exam.questions[0];
        assert!(q.blanks.is_empty());
        assert_eq!(q.masked_text, q.text);
    }

    #[test]
    fn first_block_wins_for_a_repeated_serial() {
        let sents = sentences(&["Ada visited Paris."]);
        let completion = "Text=[s0] Ada visited Paris.\nSubject=<Ada:person>\nBlanks=<Paris:city>\n\
                          ----\n\
                          Text=[s0] Ada visited Paris.\nSubject=<Ada:person>\nBlanks=<Ada:person>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(exam.questions[0].blanks[0].surface, "Paris");
    }

    #[test]
    fn out_of_range_serial_is_ignored() {
        let sents = sentences(&["Only one."]);
        let completion = "Text=[s7] Whatever.\nSubject=<x:y>\nBlanks=<one:number>";
        let exam = Exam::from_completion(&sents, completion);
        assert!(exam.questions[0].blanks.is_empty());
    }

    #[test]
    fn wrapped_blank_list_lines_are_joined() {
        let sents = sentences(&["Ada visited Paris and Rome."]);
        let completion = "Text=[s0] Ada visited Paris and Rome.\n\
                          Subject=<Ada:person>\n\
                          Blanks=<Paris:city>,\n<Rome:city>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(exam.questions[0].blanks.len(), 2);
        assert_eq!(
            exam.questions[0].masked_text,
            "Ada visited \"$city_0\" and \"$city_1\"."
        );
    }

    #[test]
    fn hypernym_keeps_inner_spaces_in_the_token() {
        let sents = sentences(&["He served four years."]);
        let completion =
            "Text=[s0] He served four years.\nSubject=<He:person>\nBlanks=<four:number of years>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(
            exam.questions[0].masked_text,
            "He served \"$number of years_0\" years."
        );
    }

    #[test]
    fn surface_with_colon_splits_on_last_colon() {
        let items = scan_tagged("<12:30:time>, <x:y>");
        assert_eq!(items[0], ("12:30".to_string(), "time".to_string()));
        assert_eq!(items[1], ("x".to_string(), "y".to_string()));
    }

    #[test]
    fn subject_absent_from_text_masks_from_the_start() {
        let sents = sentences(&["In 1900 things happened."]);
        let completion =
            "Text=[s0] In 1900 things happened.\nSubject=<Nobody:person>\nBlanks=<1900:year>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(exam.questions[0].masked_text, "In \"$year_0\" things happened.");
    }

    #[test]
    fn non_ascii_text_masks_cleanly() {
        let sents = sentences(&["Zoë lived in Zürich in 1900."]);
        let completion =
            "Text=[s0] Zoë lived in Zürich in 1900.\nSubject=<Zoë:person>\nBlanks=<Zürich:city>, <1900:year>";
        let exam = Exam::from_completion(&sents, completion);
        assert_eq!(
            exam.questions[0].masked_text,
            "Zoë lived in \"$city_0\" in \"$year_1\"."
        );
        assert_eq!(exam.unmask(&exam.questions[0].masked_text), sents[0]);
    }

    #[test]
    fn answers_parse_with_last_wins_and_continuations() {
        let completion = "Preamble line.\n\
                          [s0] First answer\n\
                          continued here\n\
                          [s1] Second answer\n\
                          [s0] Replacement answer\n\
                          [s9] Out of range\n\
                          stray continuation after invalid";
        let answers = parse_answers(completion, 2);
        assert_eq!(answers[&0], "Replacement answer");
        assert_eq!(answers[&1], "Second answer");
        assert_eq!(answers.len(), 2);
    }

    #[test]
    fn grades_parse_with_clamping_and_zero_fill() {
        let names: Vec<String> = ["Tom", "Amy", "Max"].iter().map(|s| s.to_string()).collect();
        let completion = "[Tom] 150 points\n[Amy] score: 75\n[Ghost] 90\nnot a grade line";
        assert_eq!(parse_grades(completion, &names), vec![100.0, 75.0, 0.0]);
    }

    #[test]
    fn repeated_grade_lines_last_wins() {
        let names = vec!["Tom".to_string()];
        assert_eq!(parse_grades("[Tom] 10\n[Tom] 90", &names), vec![90.0]);
    }

    #[test]
    fn unparseable_completion_degrades_to_no_blanks() {
        let sents = sentences(&["A sentence."]);
        let exam = Exam::from_completion(&sents, "total nonsense\nwith no structure");
        assert_eq!(exam.questions[0].masked_text, "A sentence.");
        assert!(exam.questions[0].blanks.is_empty());
    }
}
