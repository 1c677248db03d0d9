//! Shared data model: spans, labeled examples, parse results and raw model
//! predictions.
//!
//! All indices are 0-based, end-exclusive, and count Unicode scalar values
//! (`char`s), not bytes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A labeled character range `[start, end)` of an input text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}] = {}", self.start, self.end, self.label)
    }
}

/// Task family of an example. Zero-length spans are only legal for
/// [`Task::Gec`] ("missing" edits).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Ner,
    Gec,
    EsaMt,
    Cpl,
    #[default]
    Custom,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Ner => "ner",
            Task::Gec => "gec",
            Task::EsaMt => "esa-mt",
            Task::Cpl => "cpl",
            Task::Custom => "custom",
        }
    }

    pub fn allows_empty_spans(self) -> bool {
        matches!(self, Task::Gec)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ner" => Ok(Task::Ner),
            "gec" => Ok(Task::Gec),
            "esa-mt" => Ok(Task::EsaMt),
            "cpl" => Ok(Task::Cpl),
            "custom" => Ok(Task::Custom),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// Number of characters (Unicode scalar values) in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Checks the positional span invariants against `text`:
/// `start <= end <= char_len(text)`, and `start == end` only for tasks that
/// allow zero-length spans. Category membership is checked at the example
/// level, see [`LabeledExample::validate`].
pub fn validate_span(span: &Span, text: &str, task: Task) -> bool {
    if span.start > span.end {
        return false;
    }
    if span.start == span.end && !task.allows_empty_spans() {
        return false;
    }
    span.end <= char_len(text)
}

/// Returns `text[start..end]` in character coordinates.
///
/// # Panics
///
/// Panics if the span is inverted or reaches past the end of `text`.
pub fn span_text<'a>(span: &Span, text: &'a str) -> &'a str {
    let map = CharMap::new(text);
    assert!(
        span.start <= span.end && span.end <= map.len(),
        "span {span} out of range for text of {} chars",
        map.len()
    );
    map.slice(text, span.start, span.end)
}

/// Character-offset to byte-offset table for one text.
#[derive(Clone, Debug)]
pub struct CharMap {
    // byte offset of every char start, plus the total byte length
    offsets: Vec<usize>,
}

impl CharMap {
    pub fn new(text: &str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        Self { offsets }
    }

    /// Number of characters.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_offset: usize) -> usize {
        self.offsets[char_offset]
    }

    /// Character offset of a byte offset that lies on a char boundary.
    pub fn char_offset(&self, byte_offset: usize) -> Option<usize> {
        self.offsets.binary_search(&byte_offset).ok()
    }

    pub fn slice<'a>(&self, text: &'a str, start: usize, end: usize) -> &'a str {
        &text[self.offsets[start]..self.offsets[end]]
    }
}

/// One input to be labeled, with its gold annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub lang: String,
    pub text: String,
    /// Source sentence for ESA-MT, instruction for CPL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_text: Option<String>,
    pub categories: Vec<String>,
    #[serde(rename = "spans", default)]
    pub gold: Vec<Span>,
    /// Free-form provenance (e.g. the generator settings of a CPL example).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Reasons a [`LabeledExample`] is malformed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExampleError {
    #[error("example `{0}` has no categories")]
    NoCategories(String),
    #[error("example `{0}` repeats category `{1}`")]
    DuplicateCategory(String, String),
    #[error("example `{id}`: span {span} is out of range or empty")]
    BadSpan { id: String, span: Span },
    #[error("example `{id}`: span {span} has a label outside the category set")]
    UnknownLabel { id: String, span: Span },
}

impl LabeledExample {
    pub fn new(
        id: impl Into<String>,
        task: Task,
        text: impl Into<String>,
        categories: &[&str],
        gold: Vec<Span>,
    ) -> Self {
        Self {
            id: id.into(),
            task,
            lang: "en".into(),
            text: text.into(),
            aux_text: None,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            gold,
            meta: None,
        }
    }

    pub fn has_category(&self, label: &str) -> bool {
        self.categories.iter().any(|c| c == label)
    }

    pub fn validate(&self) -> Result<(), ExampleError> {
        if self.categories.is_empty() {
            return Err(ExampleError::NoCategories(self.id.clone()));
        }
        let mut seen = HashSet::new();
        for c in &self.categories {
            if !seen.insert(c.as_str()) {
                return Err(ExampleError::DuplicateCategory(self.id.clone(), c.clone()));
            }
        }
        for span in &self.gold {
            if !validate_span(span, &self.text, self.task) {
                return Err(ExampleError::BadSpan {
                    id: self.id.clone(),
                    span: span.clone(),
                });
            }
            if !seen.contains(span.label.as_str()) {
                return Err(ExampleError::UnknownLabel {
                    id: self.id.clone(),
                    span: span.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Why a model output could not be turned into spans at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseError {
    /// No structure could be recovered from the output.
    Unparseable,
    /// The output ended at the token budget before the structure closed.
    Truncated,
    /// Tag output without tags that is not a plausible copy of the input.
    NotACopy,
    /// The backend failed; there is no output to parse.
    Transport,
}

/// Spans recovered from one model output plus per-item error counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseResult {
    pub spans: Vec<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<ParseError>,
    /// Items whose text (or index range) could not be matched to the input.
    pub span_content_errors: usize,
    /// Items whose label is not a known category.
    pub category_errors: usize,
    /// Number of span items the output contained.
    pub items: usize,
}

impl ParseResult {
    pub fn failed(kind: ParseError) -> Self {
        Self {
            parse_error: Some(kind),
            ..Self::default()
        }
    }
}

/// Raw model output for one example.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub example_id: String,
    pub strategy: String,
    pub output_text: String,
    pub token_count: usize,
    /// Generation stopped at `max_tokens`.
    #[serde(default)]
    pub truncated: bool,
    /// Transport-level failure message, kept apart from parse errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
