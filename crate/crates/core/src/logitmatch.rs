//! LogitMatch constrained decoding.
//!
//! The engine runs a finite-state machine over the decoded bytes:
//!
//! - `DEFAULT`: ordinary decoding. A detector watches for the opening of a
//!   `"text"` value (`"text"`, whitespace, `:`, whitespace, `"`). With a
//!   structured (`-S`) schema the whole output is additionally held to the
//!   fixed JSON shape.
//! - `SELECT`: the first byte(s) of the span must start an input span.
//! - `COPY`: further bytes must continue the input at one of the live
//!   candidate positions, or a `"` closes the span (only at a character
//!   boundary and only after at least one character).
//!
//! Everything is matched against the JSON-escaped input, byte by byte, so a
//! token may freely straddle the opening quote, the span content and the
//! closing quote. The set of live candidates is kept as a range of a suffix
//! table built over the character starts of the escaped input: all
//! candidates share the bytes copied so far, so they are exactly the
//! suffixes with that prefix.
//!
//! Allowed tokens are computed by walking the vocabulary trie while stepping
//! the state machine, so a token is allowed iff [`LogitMatch::advance`]
//! accepts it.

mod detector;
mod escape;
pub mod fixtures;
mod schema;
mod session;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use detector::{is_json_ws, Detector};
pub use escape::{escape_json_str, EscapedInput};
pub use schema::{Cursor, Field, JsonSchema, MAX_OCCURRENCE, MAX_WS};
pub use session::{MaskService, SessionError};

use crate::span::ParseResult;
use crate::strategies::{parse_match_output, ParseContext};
use crate::tokenmodel::{SuffixIndex, TokenId, TokenVocab, VocabTrie};
use detector::{Feed, DETECTOR_STATES};
use schema::SchemaStep;

/// Which JSON shape, if any, is enforced alongside the copy constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaKind {
    /// Only the text fields are constrained.
    #[default]
    None,
    /// `[{"text": ..., "label": ...}]`.
    Plain,
    /// `[{"text": ..., "label": ..., "occurrence": n}]`.
    WithOccurrence,
}

/// The three modes of the decoding algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Default,
    Select,
    Copy,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Default => "DEFAULT",
            Mode::Select => "SELECT",
            Mode::Copy => "COPY",
        })
    }
}

/// Allowed-token mask for one decoding step.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MaskResponse {
    /// Every token is allowed.
    All,
    /// Sorted, de-duplicated allowed ids.
    Allowed(Vec<TokenId>),
}

impl MaskResponse {
    pub fn allows(&self, id: TokenId) -> bool {
        match self {
            MaskResponse::All => true,
            MaskResponse::Allowed(ids) => ids.binary_search(&id).is_ok(),
        }
    }

    /// Number of allowed ids, given the vocabulary size.
    pub fn count(&self, vocab_size: usize) -> usize {
        match self {
            MaskResponse::All => vocab_size,
            MaskResponse::Allowed(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, MaskResponse::Allowed(ids) if ids.is_empty())
    }

    /// Explicit id list (expanding `All`).
    pub fn to_ids(&self, vocab_size: usize) -> Vec<TokenId> {
        match self {
            MaskResponse::All => (0..vocab_size as TokenId).collect(),
            MaskResponse::Allowed(ids) => ids.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("a span-producing schema needs a non-empty input text")]
    EmptyInput,
    #[error("a structured schema needs at least one category")]
    NoCategories,
    #[error("vocabulary has no single-byte token for byte 0x{0:02x}; byte fallback is required")]
    MissingByteFallback(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdvanceError {
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("token {token} is not allowed in {mode} mode")]
    Disallowed { token: TokenId, mode: Mode },
}

/// Vocabulary-level tables shared by every engine over that vocabulary.
#[derive(Debug)]
pub struct VocabIndex {
    vocab: TokenVocab,
    trie: VocabTrie,
    // tokens that complete a field opening when fed from a given detector state
    triggers: [Vec<TokenId>; DETECTOR_STATES],
}

impl VocabIndex {
    pub fn new(vocab: TokenVocab) -> Self {
        let trie = VocabTrie::new(&vocab);
        let triggers = std::array::from_fn(|state| {
            let start = Detector::all().nth(state).expect("state in range");
            (0..vocab.size() as TokenId)
                .filter(|&id| !vocab.is_special(id))
                .filter(|&id| {
                    let mut d = start;
                    vocab.bytes(id).iter().any(|&b| match d.feed(b) {
                        Feed::Fired => true,
                        Feed::Continue(n) => {
                            d = n;
                            false
                        }
                    })
                })
                .collect()
        });
        Self { vocab, trie, triggers }
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn trie(&self) -> &VocabTrie {
        &self.trie
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Resume {
    Free,
    Schema,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct SpanCursor {
    lo: u32,
    hi: u32,
    copied: u32,
    resume: Resume,
}

/// Lexer state inside an unconstrained JSON string (schema-only engines).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum StrLex {
    Plain,
    Escape,
    Hex(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Phase {
    /// Empty input without schema: nothing is ever constrained.
    Passthrough,
    Free(Detector),
    /// Inside the fixed shape. The `u8` caps the occurrence value: the
    /// number of places the last text value occurs in the input.
    Schema(Cursor, u8),
    Span(SpanCursor),
    /// Text value of a schema-only engine: any well-formed string content.
    Str(StrLex),
}

/// Per-sequence decoding state. Small and `Copy`; all heavy data lives in
/// the [`LogitMatch`] engine it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecodeState {
    phase: Phase,
}

impl DecodeState {
    pub fn mode(&self) -> Mode {
        match self.phase {
            Phase::Span(s) if s.copied == 0 => Mode::Select,
            Phase::Span(_) => Mode::Copy,
            _ => Mode::Default,
        }
    }

    /// Position in the JSON schema, when one is enforced and decoding is
    /// outside a text value.
    pub fn schema_cursor(&self) -> Option<Cursor> {
        match self.phase {
            Phase::Schema(c, _) => Some(c),
            _ => None,
        }
    }

    /// Number of escaped bytes copied into the current span.
    pub fn copied(&self) -> usize {
        match self.phase {
            Phase::Span(s) => s.copied as usize,
            _ => 0,
        }
    }

    /// The structured output has been closed (`]` decoded).
    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Schema(c, _) if c.is_done())
    }
}

/// LogitMatch engine for one input text.
#[derive(Clone, Debug)]
pub struct LogitMatch {
    vocab: Arc<VocabIndex>,
    input: String,
    escaped: EscapedInput,
    index: SuffixIndex,
    schema: Option<JsonSchema>,
    // false for schema-only engines, which leave the text values free
    copy: bool,
}

impl LogitMatch {
    /// Prepares the escaped input and checks that the vocabulary can spell
    /// every byte the constraint may force.
    pub fn new<S: AsRef<str>>(
        vocab: Arc<VocabIndex>,
        input: &str,
        schema: SchemaKind,
        categories: &[S],
    ) -> Result<Self, ConfigError> {
        let engine = Self::new_unchecked(vocab, input, schema, categories)?;
        engine.check_byte_fallback()?;
        Ok(engine)
    }

    /// Like [`LogitMatch::new`] without the byte-fallback check. Masks may
    /// then come up empty mid-span.
    pub fn new_unchecked<S: AsRef<str>>(
        vocab: Arc<VocabIndex>,
        input: &str,
        schema: SchemaKind,
        categories: &[S],
    ) -> Result<Self, ConfigError> {
        let escaped = EscapedInput::new(input);
        let index = SuffixIndex::with_positions(escaped.bytes(), escaped.span_starts().iter().copied());
        let schema = match schema {
            SchemaKind::None => None,
            SchemaKind::Plain | SchemaKind::WithOccurrence => {
                if input.is_empty() {
                    return Err(ConfigError::EmptyInput);
                }
                if categories.is_empty() {
                    return Err(ConfigError::NoCategories);
                }
                Some(JsonSchema::new(categories, schema == SchemaKind::WithOccurrence))
            }
        };
        Ok(Self {
            vocab,
            input: input.to_string(),
            escaped,
            index,
            schema,
            copy: true,
        })
    }

    /// An engine that only enforces the JSON shape and the label set; text
    /// values may hold any string. Used for the structured variants of the
    /// plain matching strategies.
    pub fn schema_only<S: AsRef<str>>(
        vocab: Arc<VocabIndex>,
        categories: &[S],
        occurrence: bool,
    ) -> Result<Self, ConfigError> {
        if categories.is_empty() {
            return Err(ConfigError::NoCategories);
        }
        let engine = Self {
            vocab,
            input: String::new(),
            escaped: EscapedInput::new(""),
            index: SuffixIndex::new(b""),
            schema: Some(JsonSchema::new(categories, occurrence)),
            copy: false,
        };
        engine.check_byte_fallback()?;
        Ok(engine)
    }

    /// Whether text values are held to input spans.
    pub fn copies(&self) -> bool {
        self.copy
    }

    fn check_byte_fallback(&self) -> Result<(), ConfigError> {
        if self.input.is_empty() && self.schema.is_none() {
            return Ok(());
        }
        let mut needed: Vec<u8> = self.escaped.bytes().to_vec();
        needed.push(b'"');
        if let Some(schema) = &self.schema {
            needed.extend(schema.alphabet());
        }
        needed.sort_unstable();
        needed.dedup();
        let vocab = self.vocab.vocab();
        match needed.into_iter().find(|&b| vocab.single_byte_token(b).is_none()) {
            Some(b) => Err(ConfigError::MissingByteFallback(b)),
            None => Ok(()),
        }
    }

    pub fn vocab_index(&self) -> &Arc<VocabIndex> {
        &self.vocab
    }

    pub fn vocab(&self) -> &TokenVocab {
        self.vocab.vocab()
    }

    pub fn input(&self) -> &str {
        &self.input
    }

    pub fn escaped(&self) -> &EscapedInput {
        &self.escaped
    }

    pub fn schema(&self) -> Option<&JsonSchema> {
        self.schema.as_ref()
    }

    pub fn init_state(&self) -> DecodeState {
        let phase = match &self.schema {
            Some(_) => Phase::Schema(Cursor::START, MAX_OCCURRENCE),
            None if self.input.is_empty() => Phase::Passthrough,
            None => Phase::Free(Detector::IDLE),
        };
        DecodeState { phase }
    }

    /// Live copy hypotheses as `(start, copied)` pairs in escaped-byte
    /// coordinates, sorted by start. Empty outside `COPY`.
    pub fn candidates(&self, state: &DecodeState) -> Vec<(usize, usize)> {
        match state.phase {
            Phase::Span(s) if s.copied > 0 => {
                let mut out: Vec<(usize, usize)> = (s.lo as usize..s.hi as usize)
                    .map(|r| (self.index.position(r), s.copied as usize))
                    .collect();
                out.sort_unstable();
                out
            }
            _ => Vec::new(),
        }
    }

    fn enter_span(&self, resume: Resume) -> Phase {
        let (lo, hi) = self.index.full_range();
        Phase::Span(SpanCursor {
            lo: lo as u32,
            hi: hi as u32,
            copied: 0,
            resume,
        })
    }

    fn step(&self, phase: Phase, b: u8) -> Option<Phase> {
        match phase {
            Phase::Passthrough => Some(Phase::Passthrough),
            Phase::Free(d) => Some(match d.feed(b) {
                Feed::Continue(next) => Phase::Free(next),
                Feed::Fired => self.enter_span(Resume::Free),
            }),
            Phase::Schema(cursor, limit) => {
                let schema = self.schema.as_ref().expect("schema phase implies schema");
                match schema.step_bounded(cursor, b, limit)? {
                    SchemaStep::Next(c) => Some(Phase::Schema(c, limit)),
                    SchemaStep::EnterText if !self.copy => Some(Phase::Str(StrLex::Plain)),
                    SchemaStep::EnterText => Some(self.enter_span(Resume::Schema)),
                }
            }
            Phase::Str(lex) => Some(Phase::Str(match (lex, b) {
                (StrLex::Plain, b'"') => return Some(Phase::Schema(Cursor::after_text_value(), MAX_OCCURRENCE)),
                (StrLex::Plain, b'\\') => StrLex::Escape,
                (StrLex::Plain, b) if b >= 0x20 => StrLex::Plain,
                (StrLex::Escape, b'"' | b'\\' | b'/' | b'b' | b'f' | b'n' | b'r' | b't') => StrLex::Plain,
                (StrLex::Escape, b'u') => StrLex::Hex(4),
                (StrLex::Hex(n), b) if b.is_ascii_hexdigit() => {
                    if n == 1 {
                        StrLex::Plain
                    } else {
                        StrLex::Hex(n - 1)
                    }
                }
                _ => return None,
            })),
            Phase::Span(s) => {
                let at_boundary = s.copied == 0
                    || self
                        .escaped
                        .is_boundary(self.index.position(s.lo as usize) + s.copied as usize);
                if b == b'"' && at_boundary {
                    if s.copied == 0 {
                        return None;
                    }
                    return Some(match s.resume {
                        Resume::Free => Phase::Free(Detector::AFTER_QUOTE),
                        Resume::Schema => {
                            let count = (s.hi - s.lo).min(MAX_OCCURRENCE as u32) as u8;
                            Phase::Schema(Cursor::after_text_value(), count)
                        }
                    });
                }
                let (lo, hi) = self.index.narrow(s.lo as usize, s.hi as usize, s.copied as usize, b);
                (lo < hi).then_some(Phase::Span(SpanCursor {
                    lo: lo as u32,
                    hi: hi as u32,
                    copied: s.copied + 1,
                    resume: s.resume,
                }))
            }
        }
    }

    fn feed(&self, mut phase: Phase, bytes: &[u8]) -> Option<Phase> {
        for &b in bytes {
            phase = self.step(phase, b)?;
        }
        Some(phase)
    }

    fn accepts_special(&self, state: &DecodeState) -> bool {
        match state.phase {
            Phase::Passthrough | Phase::Free(_) => true,
            Phase::Schema(c, _) => c.is_done(),
            Phase::Span(_) | Phase::Str(_) => false,
        }
    }

    /// Tokens that may be emitted next.
    pub fn allowed_tokens(&self, state: &DecodeState) -> MaskResponse {
        let vocab = self.vocab.vocab();
        match state.phase {
            Phase::Passthrough => MaskResponse::All,
            Phase::Free(d) => {
                let forbidden: Vec<TokenId> = self.vocab.triggers[d.index()]
                    .iter()
                    .copied()
                    .filter(|&id| self.feed(state.phase, vocab.bytes(id)).is_none())
                    .collect();
                if forbidden.is_empty() {
                    MaskResponse::All
                } else {
                    MaskResponse::Allowed(
                        (0..vocab.size() as TokenId)
                            .filter(|id| forbidden.binary_search(id).is_err())
                            .collect(),
                    )
                }
            }
            _ => {
                let mut out = Vec::new();
                self.walk(state.phase, &mut out);
                if self.accepts_special(state) {
                    out.extend(vocab.special_ids().iter().copied());
                }
                out.sort_unstable();
                out.dedup();
                MaskResponse::Allowed(out)
            }
        }
    }

    fn walk(&self, start: Phase, out: &mut Vec<TokenId>) {
        let trie = self.vocab.trie();
        let mut stack = vec![(trie.root(), start)];
        while let Some((node, phase)) = stack.pop() {
            if node != trie.root() {
                out.extend_from_slice(trie.terminals(node));
            }
            for &(b, child) in trie.children(node) {
                if let Some(next) = self.step(phase, b) {
                    stack.push((child, next));
                }
            }
        }
    }

    /// Consumes one emitted token.
    pub fn advance(&self, state: &DecodeState, token: TokenId) -> Result<DecodeState, AdvanceError> {
        let vocab = self.vocab.vocab();
        if !vocab.contains(token) {
            return Err(AdvanceError::UnknownToken(token));
        }
        let disallowed = AdvanceError::Disallowed {
            token,
            mode: state.mode(),
        };
        if vocab.is_special(token) {
            return if self.accepts_special(state) {
                Ok(*state)
            } else {
                Err(disallowed)
            };
        }
        self.feed(state.phase, vocab.bytes(token))
            .map(|phase| DecodeState { phase })
            .ok_or(disallowed)
    }

    /// Runs a whole token sequence from the initial state.
    pub fn run(&self, tokens: &[TokenId]) -> Result<DecodeState, AdvanceError> {
        tokens
            .iter()
            .try_fold(self.init_state(), |state, &t| self.advance(&state, t))
    }
}

/// Parses an output decoded under the engine. Span texts are located in the
/// input by leftmost match, or by occurrence index when `use_occurrence` and
/// the field is present.
pub fn extract_spans_from_constrained_output(
    output: &str,
    ctx: &ParseContext<'_>,
    use_occurrence: bool,
) -> ParseResult {
    parse_match_output(output, ctx, use_occurrence)
}
