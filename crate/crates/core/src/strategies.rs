//! Prompting strategies: prompt rendering, canonical outputs and output
//! parsing for tagging, indexing and matching.
//!
//! | kind             | output shape                                         |
//! |------------------|------------------------------------------------------|
//! | `tag`            | input copy with `<entity type="L">..</entity>` tags  |
//! | `index`          | `[start:end] = L` items                              |
//! | `index-enriched` | same, with `offset::word` markers in the prompt input|
//! | `match`          | JSON array of `{"text", "label"}`                    |
//! | `match-occ`      | JSON array of `{"text", "label", "occurrence"}`      |
//! | `logitmatch`     | as `match`, decoded under the LogitMatch mask        |
//! | `logitmatch-occ` | as `match-occ`, decoded under the LogitMatch mask    |
//!
//! Matching kinds have a structured (`-s`) variant that also enforces the
//! JSON shape and label set during decoding.

mod parse;
mod prompt;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::{
    lcs_ratio, parse_index_output, parse_match_output, parse_tag_output, salvage_json_array, ParseContext,
    DEFAULT_LCS_THRESHOLD,
};
pub use prompt::{
    default_demonstrations, demo_example, render_prompt, render_prompt_with, Demonstration, PromptBundle, Template,
    TemplateError, DEFAULT_TEMPLATE,
};
pub use render::{
    enrich_index, gec_anchor_end, render_canonical, render_index, render_match, render_tag, strip_index_markers,
};

use crate::logitmatch::SchemaKind;
use crate::span::{LabeledExample, ParseError, ParseResult, RawPrediction, Task};

/// Label of GEC "missing" edits, which are zero-length in the gold data.
pub const GEC_MISSING_LABEL: &str = "M";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Tag,
    Index,
    IndexEnriched,
    Match,
    MatchOcc,
    #[serde(rename = "logitmatch")]
    LogitMatch,
    #[serde(rename = "logitmatch-occ")]
    LogitMatchOcc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Tag,
        StrategyKind::Index,
        StrategyKind::IndexEnriched,
        StrategyKind::Match,
        StrategyKind::MatchOcc,
        StrategyKind::LogitMatch,
        StrategyKind::LogitMatchOcc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Tag => "tag",
            StrategyKind::Index => "index",
            StrategyKind::IndexEnriched => "index-enriched",
            StrategyKind::Match => "match",
            StrategyKind::MatchOcc => "match-occ",
            StrategyKind::LogitMatch => "logitmatch",
            StrategyKind::LogitMatchOcc => "logitmatch-occ",
        }
    }

    /// Items carry an occurrence index.
    pub fn uses_occurrence(self) -> bool {
        matches!(self, StrategyKind::MatchOcc | StrategyKind::LogitMatchOcc)
    }

    /// Output is a JSON array of items.
    pub fn is_matching(self) -> bool {
        matches!(
            self,
            StrategyKind::Match | StrategyKind::MatchOcc | StrategyKind::LogitMatch | StrategyKind::LogitMatchOcc
        )
    }

    /// Needs per-step logit access.
    pub fn is_logitmatch(self) -> bool {
        matches!(self, StrategyKind::LogitMatch | StrategyKind::LogitMatchOcc)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StrategyError {
    #[error("unknown strategy `{0}`")]
    Unknown(String),
    #[error("strategy `{0}` has no structured variant")]
    NotStructurable(StrategyKind),
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| StrategyError::Unknown(s.to_string()))
    }
}

/// A strategy with its task and demonstrations.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// The `-s` variant: JSON shape and labels enforced while decoding.
    pub structured: bool,
    pub task: Task,
    pub few_shot: Vec<Demonstration>,
    /// Tag outputs without tags count as a copy (no spans) at or above this
    /// longest-common-subsequence ratio, and as a parse error below it.
    pub lcs_threshold: f64,
}

impl StrategyConfig {
    /// Config with the built-in demonstrations for `task`.
    pub fn new(kind: StrategyKind, structured: bool, task: Task) -> Result<Self, StrategyError> {
        if structured && !kind.is_matching() {
            return Err(StrategyError::NotStructurable(kind));
        }
        Ok(Self {
            kind,
            structured,
            task,
            few_shot: default_demonstrations(kind, task),
            lcs_threshold: DEFAULT_LCS_THRESHOLD,
        })
    }

    /// Parses a strategy tag such as `match-occ-s` or `logitmatch`.
    pub fn parse(tag: &str, task: Task) -> Result<Self, StrategyError> {
        let lower = tag.trim().to_ascii_lowercase();
        let (base, structured) = match lower.strip_suffix("-s") {
            Some(base) => (base, true),
            None => (lower.as_str(), false),
        };
        let kind = base
            .parse::<StrategyKind>()
            .map_err(|_| StrategyError::Unknown(tag.to_string()))?;
        Self::new(kind, structured, task)
    }

    /// Keeps only the first `n` demonstrations.
    pub fn with_shots(mut self, n: usize) -> Self {
        self.few_shot.truncate(n);
        self
    }

    /// Canonical tag, e.g. `logitmatch-occ-s`.
    pub fn tag(&self) -> String {
        if self.structured {
            format!("{}-s", self.kind)
        } else {
            self.kind.to_string()
        }
    }

    /// JSON shape enforced while decoding, if any.
    pub fn schema_kind(&self) -> SchemaKind {
        match (self.structured, self.kind.uses_occurrence()) {
            (false, _) => SchemaKind::None,
            (true, false) => SchemaKind::Plain,
            (true, true) => SchemaKind::WithOccurrence,
        }
    }

    /// Whether decoding needs a mask-capable backend.
    pub fn needs_mask(&self) -> bool {
        self.kind.is_logitmatch() || self.structured
    }

    pub fn parse_output(&self, output: &str, example: &LabeledExample) -> ParseResult {
        let ctx = ParseContext::for_example(example).with_lcs_threshold(self.lcs_threshold);
        match self.kind {
            StrategyKind::Tag => parse_tag_output(output, &ctx),
            StrategyKind::Index | StrategyKind::IndexEnriched => parse_index_output(output, &ctx),
            kind => parse_match_output(output, &ctx, kind.uses_occurrence()),
        }
    }

    /// Parses a raw prediction, mapping transport failures and budget
    /// exhaustion onto their error kinds.
    pub fn parse_prediction(&self, prediction: &RawPrediction, example: &LabeledExample) -> ParseResult {
        if prediction.error.is_some() {
            return ParseResult::failed(ParseError::Transport);
        }
        let mut result = self.parse_output(&prediction.output_text, example);
        if prediction.truncated && result.parse_error.is_some() {
            result.parse_error = Some(ParseError::Truncated);
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_tags() {
        let c = StrategyConfig::parse("match-occ-s", Task::Ner).unwrap();
        assert_eq!(c.kind, StrategyKind::MatchOcc);
        assert!(c.structured);
        assert_eq!(c.tag(), "match-occ-s");
        assert_eq!(c.schema_kind(), SchemaKind::WithOccurrence);
        assert!(c.needs_mask());
        let c = StrategyConfig::parse("LogitMatch", Task::Cpl).unwrap();
        assert_eq!(c.kind, StrategyKind::LogitMatch);
        assert_eq!(c.schema_kind(), SchemaKind::None);
        assert!(StrategyConfig::parse("tag-s", Task::Ner).is_err());
        assert!(StrategyConfig::parse("bio", Task::Ner).is_err());
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{k}\""));
        }
    }

    #[test]
    fn transport_and_truncation() {
        let ex = LabeledExample::new("a", Task::Ner, "Turing was born in London.", &["PER", "LOC"], vec![]);
        let c = StrategyConfig::parse("match", Task::Ner).unwrap();
        let mut p = RawPrediction {
            example_id: "a".into(),
            strategy: c.tag(),
            output_text: "[{\"text\": \"Lon".into(),
            token_count: 3,
            truncated: true,
            error: None,
        };
        assert_eq!(c.parse_prediction(&p, &ex).parse_error, Some(ParseError::Truncated));
        p.truncated = false;
        assert_eq!(c.parse_prediction(&p, &ex).parse_error, Some(ParseError::Unparseable));
        p.error = Some("connection refused".into());
        assert_eq!(c.parse_prediction(&p, &ex).parse_error, Some(ParseError::Transport));
    }
}
