//! Threshold-free evaluation of per-sentence scores: AUC-PR, AUC-ROC,
//! Table-style reports, and the prefix-wins analysis.
//!
//! AUC-ROC is the pairwise (Mann-Whitney) probability that a positive
//! sentence outranks a negative one, ties counting ½. AUC-PR is average
//! precision over a descending threshold sweep with tied scores collapsed
//! into a single group. Both are computed from integer pair/prefix counts so
//! results are reproducible to the last bit.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{task_labels, Task};
use crate::passage::Passage;

/// Evaluation errors.
#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("metric undefined: labels contain a single class")]
    SingleClass,
    #[error("metric undefined: no positive labels")]
    NoPositives,
    #[error("missing scores for passages: {0:?}")]
    Coverage(Vec<String>),
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Input(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(EvalError::Input("empty score list".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::Input(format!("non-finite score {bad}")));
    }
    Ok(())
}

/// Indices sorted by descending score; equal scores keep input order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    order
}

/// Area under the ROC curve: P(score+ > score−) + ½·P(score+ = score−).
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }

    // Walk tie groups in descending-score order. A positive beats every
    // negative in strictly lower groups; within a group every (pos, neg)
    // pair is a tie.
    let order = descending_order(scores);
    let mut wins: u64 = 0;
    let mut ties: u64 = 0;
    let mut neg_below = neg;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_pos: u64 = 0;
        let mut group_neg: u64 = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        neg_below -= group_neg;
        wins += group_pos * neg_below;
        ties += group_pos * group_neg;
        i = j;
    }
    Ok((wins as f64 + 0.5 * ties as f64) / ((pos * neg) as f64))
}

/// Average precision: `Σ_k (R_k − R_{k−1}) · P_k` over descending distinct
/// thresholds, tied scores forming a single group.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_inputs(scores, labels)?;
    let pos_total = labels.iter().filter(|&&l| l).count() as u64;
    if pos_total == 0 {
        return Err(EvalError::NoPositives);
    }

    let order = descending_order(scores);
    let mut ap = 0.0;
    let mut tp: u64 = 0;
    let mut fp: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let prev_tp = tp;
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let delta_recall = (tp - prev_tp) as f64 / pos_total as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += delta_recall * precision;
        i = j;
    }
    Ok(ap)
}

/// Average precision with trapezoidal interpolation between curve points,
/// kept for sensitivity checks against the step-weighted default.
pub fn auc_pr_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_inputs(scores, labels)?;
    let pos_total = labels.iter().filter(|&&l| l).count() as u64;
    if pos_total == 0 {
        return Err(EvalError::NoPositives);
    }
    let curve = pr_curve(scores, labels)?;
    let mut area = 0.0;
    for pair in curve.windows(2) {
        let (r0, p0) = pair[0];
        let (r1, p1) = pair[1];
        area += (r1 - r0) * (p0 + p1) / 2.0;
    }
    Ok(area)
}

/// ROC curve points (FPR, TPR), from (0, 0) to (1, 1), one point per tie
/// group in descending-score order.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, EvalError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let order = descending_order(scores);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j;
    }
    Ok(points)
}

/// PR curve points (recall, precision), starting at (0, 1), one point per
/// tie group in descending-score order.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, EvalError> {
    check_inputs(scores, labels)?;
    let pos_total = labels.iter().filter(|&&l| l).count() as u64;
    if pos_total == 0 {
        return Err(EvalError::NoPositives);
    }
    let order = descending_order(scores);
    let mut points = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((tp as f64 / pos_total as f64, tp as f64 / (tp + fp) as f64));
        i = j;
    }
    Ok(points)
}

// ---- corpus-level evaluation ------------------------------------------------

/// Scores for one method across a corpus: passage id → per-sentence values.
pub type MethodScores = BTreeMap<String, Vec<f64>>;

/// One (method, task) evaluation outcome.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub method: String,
    pub task: Task,
    /// Average precision in [0, 1].
    pub auc_pr: f64,
    /// Pairwise ranking probability in [0, 1].
    pub auc_roc: f64,
    pub n_positive: usize,
    pub n_total: usize,
    /// (recall, precision) points.
    pub pr_curve: Vec<(f64, f64)>,
    /// (FPR, TPR) points.
    pub roc_curve: Vec<(f64, f64)>,
}

/// Concatenates per-passage scores and labels in corpus order for one task.
///
/// The Factual task grades the *faithfulness* classifier, so scores are
/// complemented there (1 − H). Errors on misaligned vectors and reports
/// passages with no scores as a coverage gap.
pub fn flatten_task(
    scores: &MethodScores,
    passages: &[Passage],
    task: Task,
) -> Result<(Vec<f64>, Vec<bool>), EvalError> {
    let mut missing = Vec::new();
    for p in passages {
        match scores.get(&p.id) {
            Some(v) if v.len() == p.len() => {}
            Some(v) => {
                return Err(EvalError::Input(format!(
                    "passage {}: {} scores for {} sentences",
                    p.id,
                    v.len(),
                    p.len()
                )))
            }
            None => missing.push(p.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::Coverage(missing));
    }
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();
    for p in passages {
        let values = &scores[&p.id];
        match task {
            Task::Factual => all_scores.extend(values.iter().map(|v| 1.0 - v)),
            _ => all_scores.extend_from_slice(values),
        }
        all_labels.extend(task_labels(p, task));
    }
    Ok((all_scores, all_labels))
}

/// Evaluates every method on every task over the corpus.
///
/// Fails if any method is missing scores for any passage (coverage), if any
/// score vector is misaligned, or if a task degenerates to a single class.
pub fn evaluate(
    methods: &BTreeMap<String, MethodScores>,
    passages: &[Passage],
    tasks: &[Task],
) -> Result<Vec<EvalResult>, EvalError> {
    let mut results = Vec::new();
    for (method, scores) in methods {
        for &task in tasks {
            let (s, l) = flatten_task(scores, passages, task)?;
            let n_positive = l.iter().filter(|&&x| x).count();
            results.push(EvalResult {
                method: method.clone(),
                task,
                auc_pr: auc_pr(&s, &l)?,
                auc_roc: auc_roc(&s, &l)?,
                n_positive,
                n_total: l.len(),
                pr_curve: pr_curve(&s, &l)?,
                roc_curve: roc_curve(&s, &l)?,
            });
        }
    }
    Ok(results)
}

// ---- prefix-wins analysis ----------------------------------------------------

/// The five reported indicators: AUC-PR on all three tasks, AUC-ROC on the
/// two non-factuality tasks (the Factual ROC is identical to NonFact by
/// construction).
pub const INDICATORS: [(Task, Metric); 5] = [
    (Task::NonFact, Metric::AucPr),
    (Task::NonFactStar, Metric::AucPr),
    (Task::Factual, Metric::AucPr),
    (Task::NonFact, Metric::AucRoc),
    (Task::NonFactStar, Metric::AucRoc),
];

/// Which area metric an indicator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Metric {
    AucPr,
    AucRoc,
}

impl Metric {
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            Metric::AucPr => "AUC-PR",
            Metric::AucRoc => "AUC-ROC",
        }
    }
}

/// Win counts for one truncation length.
#[derive(Debug, Clone, Serialize)]
pub struct PrefixWinsRow {
    /// Passages truncated to their first `x` sentences.
    pub x: usize,
    /// method → number of indicators on which it strictly beats the baseline.
    pub wins: BTreeMap<String, usize>,
    /// Indicators that were undefined at this truncation (excluded from counts).
    pub undefined: Vec<String>,
}

/// Prefix-wins table: how often each method beats the baseline when only the
/// first x sentences of every passage are scored.
#[derive(Debug, Clone, Serialize)]
pub struct PrefixWinsTable {
    pub baseline: String,
    pub rows: Vec<PrefixWinsRow>,
}

fn truncated(passages: &[Passage], x: usize) -> Vec<Passage> {
    passages
        .iter()
        .map(|p| {
            let keep = p.len().min(x);
            Passage {
                id: p.id.clone(),
                concept: p.concept.clone(),
                prompt: p.prompt.clone(),
                sentences: p.sentences[..keep].to_vec(),
                annotations: p.annotations[..keep].to_vec(),
                samples: Vec::new(),
            }
        })
        .collect()
}

fn truncated_scores(scores: &MethodScores, x: usize) -> MethodScores {
    scores
        .iter()
        .map(|(id, v)| (id.clone(), v[..v.len().min(x)].to_vec()))
        .collect()
}

/// Computes the prefix-wins table.
///
/// For each truncation length x (1 ..= longest passage) and each of the five
/// indicators, a method scores a win when its indicator value strictly
/// exceeds the baseline's. Indicators that are undefined on the truncated
/// corpus (single class or no positives) are excluded and listed.
pub fn prefix_wins(
    methods: &BTreeMap<String, MethodScores>,
    passages: &[Passage],
    baseline: &str,
) -> Result<PrefixWinsTable, EvalError> {
    let baseline_scores = methods
        .get(baseline)
        .ok_or_else(|| EvalError::Input(format!("baseline method {baseline:?} not in scores")))?;
    let max_x = passages.iter().map(Passage::len).max().unwrap_or(0);
    if max_x == 0 {
        return Err(EvalError::Input("no passages".into()));
    }
    let mut rows = Vec::with_capacity(max_x);
    for x in 1..=max_x {
        let corpus = truncated(passages, x);
        let base_trunc = truncated_scores(baseline_scores, x);
        let mut wins: BTreeMap<String, usize> = methods
            .keys()
            .filter(|m| m.as_str() != baseline)
            .map(|m| (m.clone(), 0))
            .collect();
        let mut undefined = Vec::new();
        for &(task, metric) in &INDICATORS {
            let base_value = match indicator(&base_trunc, &corpus, task, metric) {
                Ok(v) => Some(v),
                Err(EvalError::SingleClass | EvalError::NoPositives) => None,
                Err(e) => return Err(e),
            };
            let mut defined = base_value.is_some();
            let mut method_values = BTreeMap::new();
            for (name, scores) in methods {
                if name == baseline {
                    continue;
                }
                match indicator(&truncated_scores(scores, x), &corpus, task, metric) {
                    Ok(v) => {
                        method_values.insert(name.clone(), v);
                    }
                    Err(EvalError::SingleClass | EvalError::NoPositives) => defined = false,
                    Err(e) => return Err(e),
                }
            }
            match (defined, base_value) {
                (true, Some(base_value)) => {
                    for (name, v) in method_values {
                        if v > base_value {
                            *wins.get_mut(&name).expect("method key") += 1;
                        }
                    }
                }
                _ => undefined.push(format!("{} {}", metric.name(), task.name())),
            }
        }
        rows.push(PrefixWinsRow { x, wins, undefined });
    }
    Ok(PrefixWinsTable {
        baseline: baseline.to_string(),
        rows,
    })
}

fn indicator(
    scores: &MethodScores,
    passages: &[Passage],
    task: Task,
    metric: Metric,
) -> Result<f64, EvalError> {
    let (s, l) = flatten_task(scores, passages, task)?;
    match metric {
        Metric::AucPr => auc_pr(&s, &l),
        Metric::AucRoc => auc_roc(&s, &l),
    }
}

// ---- reporting -----------------------------------------------------------------

/// Rounds a [0, 1] value to a percentage with two decimals, ties to even.
#[must_use]
pub fn percent(x: f64) -> f64 {
    (x * 10000.0).round_ties_even() / 100.0
}

/// Formats a [0, 1] value as a two-decimal percentage string.
#[must_use]
pub fn format_percent(x: f64) -> String {
    format!("{:.2}", percent(x))
}

/// Renders the result matrix as TSV: one row per method, the five indicator
/// columns in reporting order.
#[must_use]
pub fn render_report_tsv(results: &[EvalResult]) -> String {
    let mut by_method: BTreeMap<&str, BTreeMap<(Task, Metric), f64>> = BTreeMap::new();
    for r in results {
        let row = by_method.entry(&r.method).or_default();
        row.insert((r.task, Metric::AucPr), r.auc_pr);
        row.insert((r.task, Metric::AucRoc), r.auc_roc);
    }
    let mut out = String::from("method");
    for (task, metric) in INDICATORS {
        out.push('\t');
        out.push_str(metric.name());
        out.push(' ');
        out.push_str(task.name());
    }
    out.push('\n');
    for (method, row) in by_method {
        out.push_str(method);
        for key in INDICATORS {
            out.push('\t');
            match row.get(&key) {
                Some(v) => out.push_str(&format_percent(*v)),
                None => out.push('-'),
            }
        }
        out.push('\n');
    }
    out
}

/// Renders the prefix-wins table as TSV.
#[must_use]
pub fn render_prefix_wins_tsv(table: &PrefixWinsTable) -> String {
    let methods: Vec<&String> = table
        .rows
        .first()
        .map(|r| r.wins.keys().collect())
        .unwrap_or_default();
    let mut out = String::from("x");
    for m in &methods {
        out.push('\t');
        out.push_str(m);
    }
    out.push_str("\tundefined\n");
    for row in &table.rows {
        out.push_str(&row.x.to_string());
        for m in &methods {
            out.push('\t');
            out.push_str(&row.wins[m.as_str()].to_string());
        }
        out.push('\t');
        if row.undefined.is_empty() {
            out.push('-');
        } else {
            out.push_str(&row.undefined.join(", "));
        }
        out.push('\n');
    }
    out
}
