//! Output parsers. All of them are total: any string yields a
//! [`ParseResult`], in the worst case one with `parse_error` set.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use crate::span::{char_len, validate_span, LabeledExample, ParseError, ParseResult, Span, Task};
use crate::spanmatch::{locate, occurrences, running_offset_estimate, LocateMode, TagGrammar};

use super::GEC_MISSING_LABEL;

/// Default LCS ratio above which a tag output without tags counts as a copy.
pub const DEFAULT_LCS_THRESHOLD: f64 = 0.6;

/// What a parser needs to know about the example.
#[derive(Clone, Debug)]
pub struct ParseContext<'a> {
    pub input: &'a str,
    pub categories: &'a [String],
    pub task: Task,
    pub lcs_threshold: f64,
}

impl<'a> ParseContext<'a> {
    pub fn new(input: &'a str, categories: &'a [String], task: Task) -> Self {
        Self {
            input,
            categories,
            task,
            lcs_threshold: DEFAULT_LCS_THRESHOLD,
        }
    }

    pub fn for_example(example: &'a LabeledExample) -> Self {
        Self::new(&example.text, &example.categories, example.task)
    }

    pub fn with_lcs_threshold(mut self, threshold: f64) -> Self {
        self.lcs_threshold = threshold;
        self
    }

    fn known(&self, label: &str) -> bool {
        self.categories.iter().any(|c| c == label)
    }

    // GEC missing edits are marked on the following word and collapsed here
    fn collapse(&self, span: Span) -> Span {
        if self.task == Task::Gec && span.label == GEC_MISSING_LABEL {
            Span::new(span.start, span.start, span.label)
        } else {
            span
        }
    }
}

/// Length of the longest common subsequence of `a` and `b` (in chars)
/// divided by the length of `a`. An empty `a` scores 1 against an empty `b`
/// and 0 otherwise.
pub fn lcs_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return if b.is_empty() { 1.0 } else { 0.0 };
    }
    let mut row = vec![0usize; b.len() + 1];
    for &ca in &a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()] as f64 / a.len() as f64
}

/// Parses `<entity type="L">...</entity>` output. Each tagged text is placed
/// at its occurrence nearest to the running-offset estimate.
pub fn parse_tag_output(output: &str, ctx: &ParseContext<'_>) -> ParseResult {
    let scan = running_offset_estimate(output, &TagGrammar::xml_entity());
    if scan.open_tags == 0 && scan.unbalanced == 0 {
        return if lcs_ratio(output, ctx.input) >= ctx.lcs_threshold {
            ParseResult::default()
        } else {
            ParseResult::failed(ParseError::NotACopy)
        };
    }
    let mut result = ParseResult {
        items: scan.items.len() + scan.unbalanced,
        span_content_errors: scan.unbalanced,
        ..ParseResult::default()
    };
    let len = char_len(ctx.input);
    for item in scan.items {
        let known = ctx.known(&item.label);
        if !known {
            result.category_errors += 1;
        }
        let range = if item.text.is_empty() {
            (ctx.task.allows_empty_spans() && item.estimate <= len).then_some((item.estimate, item.estimate))
        } else {
            locate(&item.text, ctx.input, LocateMode::Nearest(item.estimate))
        };
        match range {
            Some((s, e)) if known => result.spans.push(ctx.collapse(Span::new(s, e, item.label))),
            Some(_) => {}
            None => result.span_content_errors += 1,
        }
    }
    result
}

fn index_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*(\d+)\s*:\s*(\d+)\s*\]\s*=\s*([^\s,\[\]]+)").expect("valid regex"))
}

/// Parses `[start:end] = LABEL` items. A blank output means no spans;
/// non-blank output without any item is a parse error.
pub fn parse_index_output(output: &str, ctx: &ParseContext<'_>) -> ParseResult {
    let mut result = ParseResult::default();
    for caps in index_regex().captures_iter(output) {
        result.items += 1;
        let label = caps[3].trim_end_matches(['.', ';']).to_string();
        let known = ctx.known(&label);
        if !known {
            result.category_errors += 1;
        }
        let range = match (caps[1].parse::<usize>(), caps[2].parse::<usize>()) {
            (Ok(s), Ok(e)) => Some(Span::new(s, e, label)),
            _ => None,
        };
        match range {
            Some(span) if validate_span(&span, ctx.input, ctx.task) => {
                if known {
                    result.spans.push(span);
                }
            }
            _ => result.span_content_errors += 1,
        }
    }
    if result.items == 0 && !output.trim().is_empty() {
        return ParseResult::failed(ParseError::Unparseable);
    }
    result
}

fn strip_code_fence(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // optional language tag on the fence line
    let body_start = after.find('\n').map_or(0, |i| i + 1);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

// longest `[...]` substring whose brackets balance, ignoring brackets inside
// JSON strings
fn longest_balanced_array(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    for (start, _) in text.match_indices('[') {
        let mut depth = 0i32;
        let mut in_str = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'[' | b'{' => depth += 1,
                b']' | b'}' => {
                    depth -= 1;
                    if depth < 0 {
                        break;
                    }
                    if depth == 0 {
                        if b == b']' && best.map_or(true, |(s, e)| i + 1 - start > e - s) {
                            best = Some((start, i + 1));
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    best.map(|(s, e)| &text[s..e])
}

/// Recovers a JSON array from a model output: as-is, then inside a code
/// fence, then the longest bracket-balanced array substring.
pub fn salvage_json_array(output: &str) -> Option<Vec<Value>> {
    let as_array = |s: &str| match serde_json::from_str::<Value>(s.trim()) {
        Ok(Value::Array(items)) => Some(items),
        _ => None,
    };
    as_array(output)
        .or_else(|| strip_code_fence(output).and_then(as_array))
        .or_else(|| longest_balanced_array(output).and_then(as_array))
}

fn occurrence_of(value: &Value) -> Option<usize> {
    match value {
        Value::Number(n) => n.as_u64().and_then(|n| usize::try_from(n).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Parses a JSON array of `{"text", "label"[, "occurrence"]}` items. Texts
/// are located leftmost, or by occurrence index when `use_occurrence` is set
/// and the item carries one. An index past the last occurrence selects the
/// last one; a text that does not occur at all is a span content error.
pub fn parse_match_output(output: &str, ctx: &ParseContext<'_>, use_occurrence: bool) -> ParseResult {
    let Some(values) = salvage_json_array(output) else {
        return ParseResult::failed(ParseError::Unparseable);
    };
    // entries without a string `text` are not span items at all
    let items: Vec<(&Value, &str)> = values
        .iter()
        .filter_map(|v| v.get("text").and_then(Value::as_str).map(|t| (v, t)))
        .collect();
    if items.is_empty() && !values.is_empty() {
        return ParseResult::failed(ParseError::Unparseable);
    }
    let mut result = ParseResult {
        items: items.len(),
        ..ParseResult::default()
    };
    for (item, text) in items {
        let label = item.get("label").and_then(Value::as_str);
        let known = label.is_some_and(|l| ctx.known(l));
        if !known {
            result.category_errors += 1;
        }
        // the text decides whether the item matches; an occurrence index
        // only picks among its occurrences, the last one when out of range
        let range = match item
            .get("occurrence")
            .filter(|_| use_occurrence)
            .and_then(occurrence_of)
        {
            Some(n) if n >= 1 => locate(text, ctx.input, LocateMode::Occurrence(n)).or_else(|| {
                let last = *occurrences(text, ctx.input).last()?;
                Some((last, last + text.chars().count()))
            }),
            _ => locate(text, ctx.input, LocateMode::Leftmost),
        };
        match (range, label) {
            (Some((s, e)), Some(label)) if known => result.spans.push(ctx.collapse(Span::new(s, e, label))),
            (Some(_), _) => {}
            (None, _) => result.span_content_errors += 1,
        }
    }
    result
}
