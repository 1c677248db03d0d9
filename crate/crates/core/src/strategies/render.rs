//! Canonical outputs: what a perfect model would answer for a given gold
//! span set, in each strategy's format. Also the `offset::word` input
//! enrichment used by the index-enriched strategy.

use crate::logitmatch::escape_json_str;
use crate::span::{CharMap, LabeledExample, Span, Task};
use crate::spanmatch::{occurrences, TagGrammar};

use super::{StrategyKind, GEC_MISSING_LABEL};

/// End of the anchor word marked in place of a zero-length GEC span: the
/// run of non-whitespace starting at `start`, or a single character when
/// `start` sits on whitespace.
pub fn gec_anchor_end(text: &str, start: usize) -> usize {
    let mut chars = text.chars().skip(start).peekable();
    match chars.peek() {
        None => start,
        Some(c) if c.is_whitespace() => start + 1,
        Some(_) => start + chars.take_while(|c| !c.is_whitespace()).count(),
    }
}

// range the model is asked to mark for a span
fn marked_range(text: &str, span: &Span, task: Task) -> (usize, usize) {
    if task == Task::Gec && span.start == span.end && span.label == GEC_MISSING_LABEL {
        (span.start, gec_anchor_end(text, span.start))
    } else {
        (span.start, span.end)
    }
}

fn sorted(spans: &[Span]) -> Vec<&Span> {
    let mut out: Vec<&Span> = spans.iter().collect();
    out.sort_by(|a, b| (a.start, b.end, &a.label).cmp(&(b.start, a.end, &b.label)));
    out
}

/// The input with every span wrapped in tags. Nested spans nest; a span
/// crossing the boundary of an enclosing one cannot be expressed and is
/// left out.
pub fn render_tag(text: &str, spans: &[Span], task: Task) -> String {
    let grammar = TagGrammar::xml_entity();
    let mut ranges: Vec<(usize, usize, &str)> = spans
        .iter()
        .map(|s| {
            let (a, b) = marked_range(text, s, task);
            (a, b, s.label.as_str())
        })
        .collect();
    ranges.sort_by(|x, y| (x.0, y.1, x.2).cmp(&(y.0, x.1, y.2)));

    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + spans.len() * 32);
    let mut open: Vec<usize> = Vec::new();
    let mut next = 0;
    for pos in 0..=chars.len() {
        while open.last() == Some(&pos) {
            open.pop();
            out.push_str(&grammar.close);
        }
        while next < ranges.len() && ranges[next].0 == pos {
            let (_, end, label) = ranges[next];
            next += 1;
            if end > chars.len() || open.last().is_some_and(|&outer| end > outer) {
                continue;
            }
            out.push_str(&grammar.open_tag(label));
            if end == pos {
                out.push_str(&grammar.close);
            } else {
                open.push(end);
            }
        }
        if let Some(&c) = chars.get(pos) {
            out.push(c);
        }
    }
    out
}

/// One `[start:end] = LABEL` line per span.
pub fn render_index(spans: &[Span]) -> String {
    sorted(spans)
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// JSON array of `{"text", "label"[, "occurrence"]}` items.
pub fn render_match(text: &str, spans: &[Span], task: Task, occurrence: bool) -> String {
    let map = CharMap::new(text);
    let items: Vec<String> = sorted(spans)
        .into_iter()
        .map(|s| {
            let (a, b) = marked_range(text, s, task);
            let marked = if b <= map.len() { map.slice(text, a, b) } else { "" };
            let mut item = format!(
                "{{\"text\": \"{}\", \"label\": \"{}\"",
                escape_json_str(marked),
                escape_json_str(&s.label)
            );
            if occurrence {
                let n = occurrences(marked, text)
                    .iter()
                    .position(|&p| p == a)
                    .map_or(1, |i| i + 1);
                item.push_str(&format!(", \"occurrence\": {n}"));
            }
            item.push('}');
            item
        })
        .collect();
    format!("[{}]", items.join(", "))
}

/// The output a perfect model would produce for `example` under `kind`.
pub fn render_canonical(kind: StrategyKind, example: &LabeledExample) -> String {
    match kind {
        StrategyKind::Tag => render_tag(&example.text, &example.gold, example.task),
        StrategyKind::Index | StrategyKind::IndexEnriched => render_index(&example.gold),
        k => render_match(&example.text, &example.gold, example.task, k.uses_occurrence()),
    }
}

/// Prefixes every whitespace-delimited word with its character offset:
/// `anatomicky správný` becomes `0::anatomicky 11::správný`. Whitespace is
/// kept as is.
pub fn enrich_index(text: &str) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    let mut in_word = false;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            out.push_str(&i.to_string());
            out.push_str("::");
        }
        out.push(c);
    }
    out
}

/// Inverse of [`enrich_index`]: drops one `digits::` prefix per word.
pub fn strip_index_markers(enriched: &str) -> String {
    let mut out = String::with_capacity(enriched.len());
    let mut rest = enriched;
    while !rest.is_empty() {
        let ws_len = rest.len() - rest.trim_start().len();
        out.push_str(&rest[..ws_len]);
        rest = &rest[ws_len..];
        let word_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let word = &rest[..word_len];
        let digits = word.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0 && word[digits..].starts_with("::") {
            out.push_str(&word[digits + 2..]);
        } else {
            out.push_str(word);
        }
        rest = &rest[word_len..];
    }
    out
}
