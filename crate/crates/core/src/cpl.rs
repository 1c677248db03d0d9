//! Conditional pattern lookup: a synthetic span labeling task with an exact
//! gold oracle.
//!
//! An example is a sequence of random English words plus an instruction such
//! as "Find all sequences matching '\w+ dry' that are not preceded by
//! 'house'". Patterns are matched against runs of whole words: a run of words
//! `w_i .. w_j` matches when the words joined by single spaces match the
//! pattern completely. Matches are taken leftmost-longest without overlap,
//! then filtered by the adjacency constraint, which looks at the single word
//! right before (or after) the match.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::span::{LabeledExample, Span, Task};

/// The single category of the task.
pub const CPL_LABEL: &str = "MATCH";

/// Longest word run a match may cover.
pub const MAX_MATCH_WORDS: usize = 16;

const GENERATION_ATTEMPTS: usize = 64;

static WORDS_SOURCE: &str = include_str!("../data/words.txt");

/// The generation vocabulary: about 2000 common lowercase English words.
pub fn words() -> &'static [&'static str] {
    static WORDS: OnceLock<Vec<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        WORDS_SOURCE
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty() && w.bytes().all(|b| b.is_ascii_lowercase()))
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    PrecededBy,
    NotPrecededBy,
    FollowedBy,
    NotFollowedBy,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [
        ConstraintKind::PrecededBy,
        ConstraintKind::NotPrecededBy,
        ConstraintKind::FollowedBy,
        ConstraintKind::NotFollowedBy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::PrecededBy => "preceded_by",
            ConstraintKind::NotPrecededBy => "not_preceded_by",
            ConstraintKind::FollowedBy => "followed_by",
            ConstraintKind::NotFollowedBy => "not_followed_by",
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            ConstraintKind::PrecededBy => "are preceded by",
            ConstraintKind::NotPrecededBy => "are not preceded by",
            ConstraintKind::FollowedBy => "are followed by",
            ConstraintKind::NotFollowedBy => "are not followed by",
        }
    }

    fn looks_before(self) -> bool {
        matches!(self, ConstraintKind::PrecededBy | ConstraintKind::NotPrecededBy)
    }

    fn negated(self) -> bool {
        matches!(self, ConstraintKind::NotPrecededBy | ConstraintKind::NotFollowedBy)
    }

    /// Whether a match with `neighbor` as the adjacent word (none at the
    /// text boundary) is kept.
    pub fn admits(self, neighbor: Option<&str>, word: &str) -> bool {
        (neighbor == Some(word)) != self.negated()
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintKind {
    type Err = CplError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CplError::UnknownConstraint(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CplSpec {
    /// Regular expression over space-joined words, e.g. `\w+ dry`.
    pub pattern: String,
    pub constraint_kind: ConstraintKind,
    pub constraint_word: String,
    pub seed: u64,
    /// Target word count; generated texts stay within 10% of it.
    #[serde(default = "default_length")]
    pub approx_length: usize,
}

fn default_length() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CplError {
    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
    #[error("unknown constraint kind `{0}`")]
    UnknownConstraint(String),
    #[error("approximate length must be at least 1")]
    ZeroLength,
    #[error("could not place a match of `{0}` within {GENERATION_ATTEMPTS} attempts")]
    NoMatch(String),
}

impl CplSpec {
    pub fn new(pattern: impl Into<String>, kind: ConstraintKind, word: impl Into<String>, seed: u64) -> Self {
        Self {
            pattern: pattern.into(),
            constraint_kind: kind,
            constraint_word: word.into(),
            seed,
            approx_length: default_length(),
        }
    }

    /// A random pattern and constraint drawn from the word list.
    pub fn random(seed: u64, approx_length: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        let vocab = words();
        let literal = *vocab.choose(&mut rng).expect("non-empty word list");
        let pattern = match rng.gen_range(0..3) {
            0 => format!(r"\w+ {literal}"),
            1 => format!(r"{literal} \w+"),
            _ => format!(r"{literal} \w+ \w+"),
        };
        let kind = *ConstraintKind::ALL.choose(&mut rng).expect("four kinds");
        let word = *vocab.choose(&mut rng).expect("non-empty word list");
        Self {
            pattern,
            constraint_kind: kind,
            constraint_word: word.to_string(),
            seed,
            approx_length,
        }
    }

    /// The natural-language task instruction.
    pub fn instruction(&self) -> String {
        format!(
            "Find all sequences matching '{}' that {} '{}'",
            self.pattern,
            self.constraint_kind.phrase(),
            self.constraint_word
        )
    }

    fn compile(&self) -> Result<Regex, CplError> {
        Regex::new(&format!("^(?:{})$", self.pattern)).map_err(|e| CplError::Pattern {
            pattern: self.pattern.clone(),
            message: e.to_string(),
        })
    }
}

// whitespace-separated words with their char ranges
fn word_ranges(text: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some((cs, bs)) = start.take() {
                out.push((cs, char_idx, &text[bs..byte]));
            }
        } else if start.is_none() {
            start = Some((char_idx, byte));
        }
        char_idx += 1;
    }
    if let Some((cs, bs)) = start {
        out.push((cs, char_idx, &text[bs..]));
    }
    out
}

// word index ranges of the raw leftmost-longest matches
fn raw_matches(words: &[(usize, usize, &str)], re: &Regex) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let mut joined = String::new();
        let mut best = None;
        for j in i..words.len().min(i + MAX_MATCH_WORDS) {
            if j > i {
                joined.push(' ');
            }
            joined.push_str(words[j].2);
            if re.is_match(&joined) {
                best = Some(j + 1);
            }
        }
        match best {
            Some(end) => {
                out.push((i, end));
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

/// Gold spans of `text` under `spec`.
pub fn cpl_oracle(text: &str, spec: &CplSpec) -> Result<Vec<Span>, CplError> {
    let re = spec.compile()?;
    let words = word_ranges(text);
    Ok(raw_matches(&words, &re)
        .into_iter()
        .filter(|&(i, j)| {
            let neighbor = if spec.constraint_kind.looks_before() {
                i.checked_sub(1).map(|k| words[k].2)
            } else {
                words.get(j).map(|w| w.2)
            };
            spec.constraint_kind.admits(neighbor, &spec.constraint_word)
        })
        .map(|(i, j)| Span::new(words[i].0, words[j - 1].1, CPL_LABEL))
        .collect())
}

// A word sequence matching the pattern, when the pattern is a plain
// space-separated sequence of literal words and `\w+` placeholders.
fn instantiate(pattern: &str, rng: &mut ChaCha8Rng) -> Option<Vec<String>> {
    pattern
        .split(' ')
        .map(|part| {
            if part == r"\w+" {
                Some(words().choose(rng).expect("non-empty word list").to_string())
            } else if !part.is_empty() && part.chars().all(char::is_alphanumeric) {
                Some(part.to_string())
            } else {
                None
            }
        })
        .collect()
}

fn draft(spec: &CplSpec, rng: &mut ChaCha8Rng) -> Vec<String> {
    let target = spec.approx_length;
    let slack = target / 10;
    let len = rng.gen_range(target - slack..=target + slack).max(1);
    let vocab = words();
    let mut text: Vec<String> = (0..len)
        .map(|_| vocab.choose(rng).expect("non-empty word list").to_string())
        .collect();
    // plant a few instances, some next to the constraint word
    let planted = rng.gen_range(1..=4);
    for _ in 0..planted {
        let Some(instance) = instantiate(&spec.pattern, rng) else {
            break;
        };
        if instance.len() + 2 > text.len() {
            break;
        }
        let at = rng.gen_range(1..text.len() - instance.len());
        text.splice(at..at + instance.len(), instance.iter().cloned());
        if rng.gen_bool(0.5) {
            let neighbor = if spec.constraint_kind.looks_before() {
                at - 1
            } else {
                at + instance.len()
            };
            text[neighbor] = spec.constraint_word.clone();
        }
    }
    text
}

/// Generates one example. Deterministic in `spec`; every example has at
/// least one gold span.
pub fn generate_cpl_example(spec: &CplSpec) -> Result<LabeledExample, CplError> {
    if spec.approx_length == 0 {
        return Err(CplError::ZeroLength);
    }
    spec.compile()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..GENERATION_ATTEMPTS {
        let text = draft(spec, &mut rng).join(" ");
        let gold = cpl_oracle(&text, spec)?;
        if gold.is_empty() {
            continue;
        }
        let mut ex = LabeledExample::new(format!("cpl-{}", spec.seed), Task::Cpl, text, &[CPL_LABEL], gold);
        ex.aux_text = Some(spec.instruction());
        ex.meta = Some(serde_json::to_value(spec).expect("spec serializes"));
        return Ok(ex);
    }
    Err(CplError::NoMatch(spec.pattern.clone()))
}

/// `count` examples with random specs, ids `cpl-0000`, `cpl-0001`, ...
pub fn generate_cpl_dataset(count: usize, seed: u64, approx_length: usize) -> Result<Vec<LabeledExample>, CplError> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let spec = CplSpec::random(seeds.gen(), approx_length);
            let mut ex = generate_cpl_example(&spec)?;
            ex.id = format!("cpl-{i:04}");
            Ok(ex)
        })
        .collect()
}

/// Recovers the spec stored in an example's `meta`.
pub fn spec_of(example: &LabeledExample) -> Option<CplSpec> {
    example
        .meta
        .as_ref()
        .and_then(|m| serde_json::from_value(m.clone()).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::demo_example;

    fn spec(pattern: &str, kind: ConstraintKind, word: &str) -> CplSpec {
        CplSpec::new(pattern, kind, word, 0)
    }

    // every word window checked on its own, no shared matching code
    fn window_scan(text: &str, spec: &CplSpec) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let re = Regex::new(&format!("^(?:{})$", spec.pattern)).unwrap();
        let words: Vec<&str> = text.split(' ').collect();
        let mut starts = Vec::new();
        let mut pos = 0;
        for w in &words {
            starts.push(pos);
            pos += w.chars().count() + 1;
        }
        let (mut kept, mut dropped) = (Vec::new(), Vec::new());
        let mut i = 0;
        while i < words.len() {
            let end = (i + 1..=words.len().min(i + MAX_MATCH_WORDS))
                .rev()
                .find(|&j| re.is_match(&words[i..j].join(" ")));
            let Some(j) = end else {
                i += 1;
                continue;
            };
            let before = if i > 0 { Some(words[i - 1]) } else { None };
            let after = words.get(j).copied();
            let ok = match spec.constraint_kind {
                ConstraintKind::PrecededBy => before == Some(spec.constraint_word.as_str()),
                ConstraintKind::NotPrecededBy => before != Some(spec.constraint_word.as_str()),
                ConstraintKind::FollowedBy => after == Some(spec.constraint_word.as_str()),
                ConstraintKind::NotFollowedBy => after != Some(spec.constraint_word.as_str()),
            };
            let range = (starts[i], starts[j - 1] + words[j - 1].chars().count());
            if ok {
                kept.push(range);
            } else {
                dropped.push(range);
            }
            i = j;
        }
        (kept, dropped)
    }

    #[test]
    fn worked_example() {
        let s = spec(r"\w+ dry", ConstraintKind::NotPrecededBy, "house");
        // the match itself may contain the constraint word; only its left
        // neighbour counts
        assert_eq!(
            cpl_oracle("house dry wind dry", &s).unwrap(),
            vec![Span::new(0, 9, CPL_LABEL), Span::new(10, 18, CPL_LABEL)]
        );
        assert_eq!(cpl_oracle("house wind dry", &s).unwrap(), vec![]);
        assert_eq!(
            s.instruction(),
            r"Find all sequences matching '\w+ dry' that are not preceded by 'house'"
        );
        let demo = demo_example(Task::Cpl).unwrap();
        assert_eq!(cpl_oracle(&demo.text, &s).unwrap(), demo.gold);
        assert_eq!(demo.aux_text.as_deref(), Some(s.instruction().as_str()));
    }

    #[test]
    fn vacuous_and_empty_filters() {
        let text = "old road dry and cold dry";
        let present = spec(r"\w+ dry", ConstraintKind::PrecededBy, "zebra");
        assert!(cpl_oracle(text, &present).unwrap().is_empty());
        let absent = spec(r"\w+ dry", ConstraintKind::NotPrecededBy, "zebra");
        assert_eq!(cpl_oracle(text, &absent).unwrap().len(), 2);
        let followed = spec(r"road \w+", ConstraintKind::FollowedBy, "and");
        assert_eq!(cpl_oracle(text, &followed).unwrap(), vec![Span::new(4, 12, CPL_LABEL)]);
        assert!(cpl_oracle("", &absent).unwrap().is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let s = spec(r"a( a)*", ConstraintKind::NotFollowedBy, "zzz");
        let got = cpl_oracle("b a a a b a", &s).unwrap();
        assert_eq!(got, vec![Span::new(2, 7, CPL_LABEL), Span::new(10, 11, CPL_LABEL)]);
    }

    #[test]
    fn bad_input() {
        let s = spec(r"(\w+", ConstraintKind::PrecededBy, "x");
        assert!(matches!(cpl_oracle("a b", &s), Err(CplError::Pattern { .. })));
        assert!(matches!(generate_cpl_example(&s), Err(CplError::Pattern { .. })));
        let mut z = spec(r"\w+", ConstraintKind::PrecededBy, "x");
        z.approx_length = 0;
        assert_eq!(generate_cpl_example(&z), Err(CplError::ZeroLength));
        assert!("sideways".parse::<ConstraintKind>().is_err());
        assert_eq!(
            "followed_by".parse::<ConstraintKind>().unwrap(),
            ConstraintKind::FollowedBy
        );
    }

    #[test]
    fn generated_examples_hold_up() {
        let data = generate_cpl_dataset(150, 11, 100).unwrap();
        assert_eq!(data, generate_cpl_dataset(150, 11, 100).unwrap());
        for ex in &data {
            ex.validate().unwrap();
            let s = spec_of(ex).unwrap();
            assert!(!ex.gold.is_empty());
            let n = ex.text.split(' ').count();
            assert!((90..=110).contains(&n), "{n} words");
            assert!(s.constraint_word.bytes().all(|b| b.is_ascii_lowercase()));
            assert!(words().contains(&s.constraint_word.as_str()));
            let (kept, dropped) = window_scan(&ex.text, &s);
            let got: Vec<(usize, usize)> = ex.gold.iter().map(|g| (g.start, g.end)).collect();
            assert_eq!(got, kept);
            let whole = Regex::new(&format!("^(?:{})$", s.pattern)).unwrap();
            for g in &ex.gold {
                assert!(whole.is_match(crate::span::span_text(g, &ex.text)));
            }
            assert!(dropped.iter().all(|r| !got.contains(r)));
            assert_eq!(ex.aux_text.as_deref(), Some(s.instruction().as_str()));
        }
        let kinds: std::collections::HashSet<_> = data.iter().map(|e| spec_of(e).unwrap().constraint_kind).collect();
        assert_eq!(kinds.len(), 4);
        // the task is meant to contain repeated occurrences
        assert!(data.iter().any(|e| e.gold.len() > 1));
    }

    #[test]
    fn spec_serializes_with_defaults() {
        let s: CplSpec = serde_json::from_str(
            r#"{"pattern":"\\w+ dry","constraint_kind":"not_preceded_by","constraint_word":"house","seed":4}"#,
        )
        .unwrap();
        assert_eq!(s.approx_length, 100);
        assert_eq!(s.constraint_kind, ConstraintKind::NotPrecededBy);
    }
}
