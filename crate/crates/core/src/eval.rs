//! Overlap-adjusted precision, recall and F1, plus error rates.
//!
//! Precision averages, over predicted spans, the fraction of each predicted
//! span's characters covered by gold spans; recall is the mirror image. In
//! hard mode only spans of the same category cover each other, in soft mode
//! categories are ignored. Contributions are pooled over the whole corpus
//! (micro averaging).
//!
//! Zero-length spans (GEC insertions) have no characters. Such a span counts
//! as fully covered when its insertion point `p` lies within some covering
//! span, `start <= p <= end`, and as uncovered otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::span::{LabeledExample, ParseResult, Span};

/// How the cover of a span is formed from the spans on the other side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapMode {
    /// Characters covered by the union of the other side's spans. Scores stay
    /// in `[0, 1]`.
    #[default]
    Union,
    /// Sum of the overlaps with each span separately. Overlapping spans on
    /// the other side are counted more than once, so scores may exceed 1.
    PerPair,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// Examples whose output could not be parsed, over all examples.
    pub parsing: f64,
    /// Items whose text or range did not match the input, over all items.
    pub span_content: f64,
    /// Items with an unknown label, over all items.
    pub category: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub examples: usize,
    pub gold_spans: usize,
    pub pred_spans: usize,
    pub items: usize,
    pub parse_failures: usize,
    pub span_content_errors: usize,
    pub category_errors: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hard: Prf,
    pub soft: Prf,
    pub errors: ErrorRates,
    pub counts: Counts,
    pub overlap: OverlapMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
}

fn covers_point(cover: &Span, p: usize) -> bool {
    cover.start <= p && p <= cover.end
}

/// Coverage of `target` by `covers`, as a fraction of the target (1 or 0 for
/// zero-length targets).
fn coverage(target: &Span, covers: &[&Span], mode: OverlapMode) -> f64 {
    if target.is_empty() {
        return if covers.iter().any(|c| covers_point(c, target.start)) {
            1.0
        } else {
            0.0
        };
    }
    let overlap = |c: &Span| target.end.min(c.end).saturating_sub(target.start.max(c.start));
    let covered = match mode {
        OverlapMode::PerPair => covers.iter().map(|c| overlap(c)).sum(),
        OverlapMode::Union => {
            let mut ranges: Vec<(usize, usize)> = covers
                .iter()
                .filter(|c| overlap(c) > 0)
                .map(|c| (c.start.max(target.start), c.end.min(target.end)))
                .collect();
            ranges.sort_unstable();
            let mut total = 0;
            let mut reach = target.start;
            for (s, e) in ranges {
                let s = s.max(reach);
                if e > s {
                    total += e - s;
                    reach = e;
                }
            }
            total
        }
    };
    covered as f64 / target.len() as f64
}

/// Sum over `targets` of their coverage by `others`.
fn coverage_sum(targets: &[Span], others: &[Span], hard: bool, mode: OverlapMode) -> f64 {
    targets
        .iter()
        .map(|t| {
            let covers: Vec<&Span> = others.iter().filter(|o| !hard || o.label == t.label).collect();
            coverage(t, &covers, mode)
        })
        .sum()
}

fn ratio(sum: f64, n: usize, empty: f64) -> f64 {
    if n == 0 {
        empty
    } else {
        sum / n as f64
    }
}

/// Precision of `pred` against `gold` for one example.
pub fn span_overlap_precision(gold: &[Span], pred: &[Span], hard: bool) -> f64 {
    let empty = if gold.is_empty() { 1.0 } else { 0.0 };
    ratio(coverage_sum(pred, gold, hard, OverlapMode::Union), pred.len(), empty)
}

/// Recall of `pred` against `gold` for one example.
pub fn span_overlap_recall(gold: &[Span], pred: &[Span], hard: bool) -> f64 {
    ratio(coverage_sum(gold, pred, hard, OverlapMode::Union), gold.len(), 1.0)
}

#[derive(Clone, Copy, Debug, Default)]
struct Pool {
    p_sum: f64,
    r_sum: f64,
}

/// Evaluates parse results against their examples with union overlap.
pub fn evaluate_corpus(pairs: &[(LabeledExample, ParseResult)]) -> Result<EvalReport, EvalError> {
    evaluate_corpus_with(pairs, OverlapMode::Union)
}

pub fn evaluate_corpus_with(
    pairs: &[(LabeledExample, ParseResult)],
    mode: OverlapMode,
) -> Result<EvalReport, EvalError> {
    let refs: Vec<(&LabeledExample, &ParseResult)> = pairs.iter().map(|(e, p)| (e, p)).collect();
    evaluate_refs(&refs, mode)
}

fn evaluate_refs(pairs: &[(&LabeledExample, &ParseResult)], mode: OverlapMode) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut counts = Counts::default();
    let (mut hard, mut soft) = (Pool::default(), Pool::default());
    for (example, parsed) in pairs {
        let gold = &example.gold;
        let pred = &parsed.spans;
        counts.examples += 1;
        counts.gold_spans += gold.len();
        counts.pred_spans += pred.len();
        counts.items += parsed.items;
        counts.parse_failures += usize::from(parsed.parse_error.is_some());
        counts.span_content_errors += parsed.span_content_errors;
        counts.category_errors += parsed.category_errors;
        hard.p_sum += coverage_sum(pred, gold, true, mode);
        hard.r_sum += coverage_sum(gold, pred, true, mode);
        soft.p_sum += coverage_sum(pred, gold, false, mode);
        soft.r_sum += coverage_sum(gold, pred, false, mode);
    }
    let empty_p = if counts.gold_spans == 0 { 1.0 } else { 0.0 };
    let prf = |pool: Pool| {
        Prf::new(
            ratio(pool.p_sum, counts.pred_spans, empty_p),
            ratio(pool.r_sum, counts.gold_spans, 1.0),
        )
    };
    Ok(EvalReport {
        hard: prf(hard),
        soft: prf(soft),
        errors: ErrorRates {
            parsing: ratio(counts.parse_failures as f64, counts.examples, 0.0),
            span_content: ratio(counts.span_content_errors as f64, counts.items, 0.0),
            category: ratio(counts.category_errors as f64, counts.items, 0.0),
        },
        counts,
        overlap: mode,
    })
}

/// One report per `lang` value.
pub fn evaluate_by_lang(
    pairs: &[(LabeledExample, ParseResult)],
    mode: OverlapMode,
) -> Result<BTreeMap<String, EvalReport>, EvalError> {
    let mut groups: BTreeMap<String, Vec<(&LabeledExample, &ParseResult)>> = BTreeMap::new();
    for (e, p) in pairs {
        groups.entry(e.lang.clone()).or_default().push((e, p));
    }
    if groups.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    groups
        .into_iter()
        .map(|(lang, group)| evaluate_refs(&group, mode).map(|r| (lang, r)))
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Plain-text rendering of one report: hard and soft sections plus error
/// rates, all in percent.
pub fn render_report(title: &str, report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}", "", "P", "R", "F1");
    for (name, prf) in [("hard", &report.hard), ("soft", &report.soft)] {
        let _ = writeln!(
            out,
            "{:<8}{:>8}{:>8}{:>8}",
            name,
            pct(prf.precision),
            pct(prf.recall),
            pct(prf.f1)
        );
    }
    let _ = writeln!(
        out,
        "errors  parsing {}  span content {}  category {}",
        pct(report.errors.parsing),
        pct(report.errors.span_content),
        pct(report.errors.category)
    );
    let c = &report.counts;
    let _ = writeln!(
        out,
        "counts  examples {}  gold {}  predicted {}  items {}",
        c.examples, c.gold_spans, c.pred_spans, c.items
    );
    out
}

/// One cell of a method-by-dataset grid.
#[derive(Clone, Debug)]
pub struct GridEntry {
    pub method: String,
    pub dataset: String,
    pub report: EvalReport,
}

/// Method-by-dataset grid of F1 scores in percent, one block for hard and
/// one for soft F1. Rows and columns keep first-seen order; the best score
/// per column is marked with `*`.
pub fn render_grid(entries: &[GridEntry]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    for e in entries {
        if !methods.contains(&e.method.as_str()) {
            methods.push(&e.method);
        }
        if !datasets.contains(&e.dataset.as_str()) {
            datasets.push(&e.dataset);
        }
    }
    let width = methods.iter().map(|m| m.len()).max().unwrap_or(6).max(6) + 2;
    let col = datasets.iter().map(|d| d.len()).max().unwrap_or(0).max(7) + 2;
    let cell = |m: &str, d: &str, pick: fn(&EvalReport) -> f64| {
        entries
            .iter()
            .find(|e| e.method == m && e.dataset == d)
            .map(|e| pick(&e.report))
    };
    let mut out = String::new();
    for (name, pick) in [
        ("hard F1 (%)", (|r: &EvalReport| r.hard.f1) as fn(&EvalReport) -> f64),
        ("soft F1 (%)", |r: &EvalReport| r.soft.f1),
    ] {
        let _ = write!(out, "{:<width$}", name);
        for d in &datasets {
            let _ = write!(out, "{:>col$}", d);
        }
        out.push('\n');
        let best: Vec<Option<f64>> = datasets
            .iter()
            .map(|d| {
                methods
                    .iter()
                    .filter_map(|m| cell(m, d, pick))
                    .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
            })
            .collect();
        for m in &methods {
            let _ = write!(out, "{:<width$}", m);
            for (d, best) in datasets.iter().zip(&best) {
                let text = match cell(m, d, pick) {
                    Some(x) if Some(x) == *best && methods.len() > 1 => format!("*{}", pct(x)),
                    Some(x) => pct(x),
                    None => "--".into(),
                };
                let _ = write!(out, "{:>col$}", text);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out.trim_end().to_string() + "\n"
}
