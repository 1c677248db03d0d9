//! Conformance fixtures for the mask contract.
//!
//! A corpus is a JSON-lines file of [`FixtureRecord`]s plus the vocabulary
//! file they reference. Each record lists a token sequence and, for every
//! step, the mode and a digest of the allowed set. Any implementation of the
//! contract (e.g. a binding for a serving stack) must reproduce the digests
//! exactly.
//!
//! The digest of an explicit allowed set is the lowercase hex SHA-256 of the
//! sorted ids, each encoded as 4 little-endian bytes. An unconstrained step
//! is recorded as `"ALL"`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdvanceError, ConfigError, LogitMatch, MaskResponse, Mode, SchemaKind, VocabIndex};
use crate::span::{Span, Task};
use crate::strategies::render_match;
use crate::tokenmodel::{make_synthetic_tokenizer, TokenId, TokenVocab, Tokenizer};

/// Digest value of an unconstrained step.
pub const ALL_MARKER: &str = "ALL";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureStep {
    pub mode: Mode,
    pub allowed: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub id: String,
    pub input: String,
    pub schema: SchemaKind,
    pub categories: Vec<String>,
    /// Vocabulary file, relative to the corpus file.
    pub vocab: String,
    pub tokens: Vec<TokenId>,
    /// `tokens.len() + 1` entries: the mask before each token and after the
    /// last one.
    pub steps: Vec<FixtureStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Advance(#[from] AdvanceError),
    #[error("fixture `{id}` step {step}: expected {expected:?}, got {got:?}")]
    Mismatch {
        id: String,
        step: usize,
        expected: FixtureStep,
        got: FixtureStep,
    },
    #[error("fixture `{id}` has {steps} steps for {tokens} tokens")]
    Shape { id: String, steps: usize, tokens: usize },
}

pub fn mask_digest(mask: &MaskResponse) -> String {
    match mask {
        MaskResponse::All => ALL_MARKER.to_string(),
        MaskResponse::Allowed(ids) => {
            let mut hasher = Sha256::new();
            for id in ids {
                hasher.update(id.to_le_bytes());
            }
            hex::encode(hasher.finalize())
        }
    }
}

/// Runs `tokens` through `engine`, recording every step.
pub fn trace_steps(engine: &LogitMatch, tokens: &[TokenId]) -> Result<Vec<FixtureStep>, AdvanceError> {
    let size = engine.vocab().size();
    let mut state = engine.init_state();
    let mut steps = Vec::with_capacity(tokens.len() + 1);
    for i in 0..=tokens.len() {
        let mask = engine.allowed_tokens(&state);
        steps.push(FixtureStep {
            mode: state.mode(),
            allowed: mask_digest(&mask),
            count: mask.count(size),
        });
        if let Some(&t) = tokens.get(i) {
            state = engine.advance(&state, t)?;
        }
    }
    Ok(steps)
}

impl FixtureRecord {
    pub fn engine(&self, vocab: Arc<VocabIndex>) -> Result<LogitMatch, ConfigError> {
        LogitMatch::new(vocab, &self.input, self.schema, &self.categories)
    }

    /// Replays the record against the engine and compares every step.
    pub fn check(&self, vocab: Arc<VocabIndex>) -> Result<(), FixtureError> {
        if self.steps.len() != self.tokens.len() + 1 {
            return Err(FixtureError::Shape {
                id: self.id.clone(),
                steps: self.steps.len(),
                tokens: self.tokens.len(),
            });
        }
        let got = trace_steps(&self.engine(vocab)?, &self.tokens)?;
        match got.iter().zip(&self.steps).position(|(g, e)| g != e) {
            None => Ok(()),
            Some(step) => Err(FixtureError::Mismatch {
                id: self.id.clone(),
                step,
                expected: self.steps[step].clone(),
                got: got[step].clone(),
            }),
        }
    }
}

const SEED_INPUTS: &[&str] = &[
    "Hello.",
    "Turing was born in London.",
    "He went to Saint - Gaudens yesterday .",
    "She said \"no\" and left \\ quietly.",
    "naïve café – 😀 déjà vu",
    "tab\there\nnew line",
    "the cat and the dog and the bird",
    "anatomicky správný zelený M&M",
];

fn random_input(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "the", "London", "a", " ", " ", "\"", "\\", "é", "😀", ".", ",", "text", ":", "Hel", "lo", "\n", "cat",
    ];
    let n = rng.gen_range(3..20);
    (0..n).map(|_| *PIECES.choose(rng).expect("non-empty")).collect()
}

fn random_spans(rng: &mut ChaCha8Rng, input: &str, categories: &[String]) -> Vec<Span> {
    let len = input.chars().count();
    (0..rng.gen_range(0..4))
        .map(|_| {
            let s = rng.gen_range(0..len);
            let e = rng.gen_range(s + 1..=len.min(s + 12));
            Span::new(s, e, categories.choose(rng).expect("non-empty").clone())
        })
        .collect()
}

/// Builds a deterministic corpus of `count` records over a synthetic
/// vocabulary. Returns the vocabulary and the records; the caller writes the
/// vocabulary to `vocab_file`.
pub fn build_corpus(seed: u64, count: usize, vocab_file: &str) -> (TokenVocab, Vec<FixtureRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<String> = SEED_INPUTS.iter().map(|s| s.to_string()).collect();
    let tokenizer = make_synthetic_tokenizer(seed, &corpus);
    let vocab = Arc::new(VocabIndex::new(tokenizer.vocab().clone()));
    let categories: Vec<String> = ["PER", "LOC", "MISC"].iter().map(|s| s.to_string()).collect();

    let records = (0..count)
        .map(|i| {
            let input = match SEED_INPUTS.get(i) {
                Some(s) => s.to_string(),
                None => random_input(&mut rng),
            };
            let schema = [SchemaKind::None, SchemaKind::Plain, SchemaKind::WithOccurrence][i % 3];
            let engine = LogitMatch::new(vocab.clone(), &input, schema, &categories).expect("byte-level vocab");
            let tokens = if i % 4 == 3 {
                random_walk(&engine, &mut rng, 40)
            } else {
                let spans = random_spans(&mut rng, &input, &categories);
                let occurrence = schema == SchemaKind::WithOccurrence || (schema == SchemaKind::None && i % 2 == 0);
                let target = render_match(&input, &spans, Task::Custom, occurrence);
                let mut tokens = tokenizer.encode(target.as_bytes());
                // some records stop mid-output
                if i % 5 == 1 && !tokens.is_empty() {
                    let cut = rng.gen_range(0..tokens.len());
                    tokens.truncate(cut);
                }
                tokens
            };
            let steps = trace_steps(&engine, &tokens).expect("fixture tokens follow the mask");
            FixtureRecord {
                id: format!("fx-{i:03}"),
                input,
                schema,
                categories: categories.clone(),
                vocab: vocab_file.to_string(),
                tokens,
                steps,
            }
        })
        .collect();
    (tokenizer.vocab().clone(), records)
}

// picks uniformly among allowed tokens; in unconstrained steps prefers
// tokens that move towards a text field so spans actually get exercised
fn random_walk(engine: &LogitMatch, rng: &mut ChaCha8Rng, max_steps: usize) -> Vec<TokenId> {
    let size = engine.vocab().size();
    let opening: Vec<TokenId> = b"{\"text\": \"".iter().map(|&b| b as TokenId).collect();
    let mut state = engine.init_state();
    let mut out = Vec::new();
    let mut k = 0;
    while out.len() < max_steps {
        let ids = engine.allowed_tokens(&state).to_ids(size);
        let token = if ids.len() == size && rng.gen_bool(0.8) {
            k = (k + 1) % opening.len();
            opening[(k + opening.len() - 1) % opening.len()]
        } else {
            *ids.choose(rng).expect("no dead ends")
        };
        state = engine.advance(&state, token).expect("allowed token advances");
        out.push(token);
    }
    out
}

/// Serializes records as JSON lines.
pub fn to_jsonl(records: &[FixtureRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("fixture serializes") + "\n")
        .collect()
}

pub fn from_jsonl(source: &str) -> Result<Vec<FixtureRecord>, serde_json::Error> {
    source
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
