//! Scripted stand-ins for a model's token choices.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BackendError;
use crate::logitmatch::MaskResponse;
use crate::tokenmodel::{TokenId, TokenVocab, VocabTrie};

/// How the mock backend picks the next token from the allowed set.
#[derive(Clone, Debug, PartialEq)]
pub enum ScriptedPolicy {
    /// Emits exactly these tokens. A token the mask forbids is an error.
    Replay(Vec<TokenId>),
    /// One preference list per step; the first allowed id wins. When none
    /// is allowed the lowest allowed id is taken. Stops when the lists run
    /// out.
    Ranked(Vec<Vec<TokenId>>),
    /// A model that wants to write `text`. Each step takes the longest
    /// allowed token continuing the text; failing that, a token matching it
    /// up to whitespace; failing that, it skips ahead in the text until some
    /// allowed token fits.
    PreferText(String),
    /// [`ScriptedPolicy::PreferText`], except that with probability `rate`
    /// a masked step takes the allowed token with the highest [`hostility`]
    /// instead. Unmasked steps always follow the target. After a hostile
    /// quote the policy drops the rest of the string it was writing.
    Adversarial { target: String, seed: u64, rate: f64 },
}

impl ScriptedPolicy {
    pub fn validate(&self, vocab_size: usize) -> Result<(), BackendError> {
        let bad = |id: &TokenId| *id as usize >= vocab_size;
        let invalid = match self {
            ScriptedPolicy::Replay(ids) => ids.iter().find(|id| bad(id)),
            ScriptedPolicy::Ranked(steps) => steps.iter().flatten().find(|id| bad(id)),
            ScriptedPolicy::Adversarial { rate, .. } if !(0.0..=1.0).contains(rate) => {
                return Err(BackendError::InvalidPolicy(format!("rate {rate} is outside [0, 1]")));
            }
            _ => None,
        };
        match invalid {
            Some(id) => Err(BackendError::InvalidPolicy(format!(
                "token {id} is outside a vocabulary of {vocab_size}"
            ))),
            None => Ok(()),
        }
    }
}

/// How likely a token is to trip up a careless implementation: quotes,
/// backslashes, bytes of multi-byte characters and JSON punctuation.
pub fn hostility(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .map(|&b| match b {
            b'"' => 4,
            b'\\' => 3,
            0x80.. => 2,
            b'}' | b']' | b',' | b':' => 1,
            _ => 0,
        })
        .sum()
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

// Where the text cursor ends up if `token` is emitted, treating whitespace
// on either side as optional. None when the token contradicts the text.
fn fuzzy_advance(target: &[u8], mut cursor: usize, token: &[u8]) -> Option<usize> {
    for &b in token {
        if is_ws(b) {
            if target.get(cursor) == Some(&b) {
                cursor += 1;
            }
            continue;
        }
        while target.get(cursor).copied().is_some_and(is_ws) {
            cursor += 1;
        }
        if target.get(cursor) != Some(&b) {
            return None;
        }
        cursor += 1;
    }
    Some(cursor)
}

pub(crate) enum Choice {
    Token(TokenId),
    Done,
}

/// Per-request policy state.
pub(crate) struct Runner<'a> {
    policy: &'a ScriptedPolicy,
    vocab: &'a TokenVocab,
    trie: &'a VocabTrie,
    step: usize,
    cursor: usize,
    idle: usize,
    rng: ChaCha8Rng,
}

// consecutive whitespace-only steps tolerated while steering
const MAX_IDLE: usize = 2;

impl<'a> Runner<'a> {
    pub(crate) fn new(policy: &'a ScriptedPolicy, vocab: &'a TokenVocab, trie: &'a VocabTrie, seed: u64) -> Self {
        let policy_seed = match policy {
            ScriptedPolicy::Adversarial { seed, .. } => *seed,
            _ => 0,
        };
        Self {
            policy,
            vocab,
            trie,
            step: 0,
            cursor: 0,
            idle: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ policy_seed.rotate_left(17)),
        }
    }

    fn allowed_ids(&self, mask: &MaskResponse) -> Vec<TokenId> {
        mask.to_ids(self.vocab.size())
            .into_iter()
            .filter(|&id| !self.vocab.is_special(id))
            .collect()
    }

    pub(crate) fn next(&mut self, mask: &MaskResponse) -> Result<Choice, BackendError> {
        let step = self.step;
        self.step += 1;
        match self.policy {
            ScriptedPolicy::Replay(ids) => Ok(ids.get(step).map_or(Choice::Done, |&t| Choice::Token(t))),
            ScriptedPolicy::Ranked(steps) => {
                let Some(prefs) = steps.get(step) else {
                    return Ok(Choice::Done);
                };
                let pick = prefs
                    .iter()
                    .copied()
                    .find(|&t| mask.allows(t))
                    .or_else(|| self.allowed_ids(mask).first().copied());
                Ok(pick.map_or(Choice::Done, Choice::Token))
            }
            ScriptedPolicy::PreferText(text) => Ok(self.steer(text.as_bytes(), mask)),
            ScriptedPolicy::Adversarial { target, rate, .. } => {
                let constrained = !matches!(mask, MaskResponse::All);
                if constrained && self.cursor < target.len() && self.rng.gen_bool(*rate) {
                    if let Some(t) = self.most_hostile(mask) {
                        self.resync(target.as_bytes(), t);
                        return Ok(Choice::Token(t));
                    }
                }
                Ok(self.steer(target.as_bytes(), mask))
            }
        }
    }

    fn most_hostile(&mut self, mask: &MaskResponse) -> Option<TokenId> {
        let ids = self.allowed_ids(mask);
        let top = ids.iter().map(|&t| hostility(self.vocab.bytes(t))).max()?;
        if top == 0 {
            return None;
        }
        let best: Vec<TokenId> = ids
            .into_iter()
            .filter(|&t| hostility(self.vocab.bytes(t)) == top)
            .collect();
        best.choose(&mut self.rng).copied()
    }

    // A forced quote ends the string being written, so the rest of the
    // target string is abandoned rather than spilled into the structure.
    fn resync(&mut self, target: &[u8], token: TokenId) {
        if !self.vocab.bytes(token).contains(&b'"') {
            return;
        }
        let mut i = self.cursor;
        while i < target.len() {
            match target[i] {
                b'\\' => i += 2,
                b'"' => {
                    self.cursor = i + 1;
                    return;
                }
                _ => i += 1,
            }
        }
        self.cursor = target.len();
    }

    fn steer(&mut self, target: &[u8], mask: &MaskResponse) -> Choice {
        if self.cursor >= target.len() {
            return Choice::Done;
        }
        let ids = self.allowed_ids(mask);
        for at in self.cursor..target.len() {
            let skipping = at > self.cursor;
            if let Some((token, next)) = self.best_at(target, at, mask, &ids, !skipping) {
                self.cursor = next;
                return Choice::Token(token);
            }
        }
        self.cursor = target.len();
        Choice::Done
    }

    // best token to emit with the text cursor at `at`
    fn best_at(
        &mut self,
        target: &[u8],
        at: usize,
        mask: &MaskResponse,
        ids: &[TokenId],
        allow_idle: bool,
    ) -> Option<(TokenId, usize)> {
        let exact = self
            .trie
            .prefixes_of(&target[at..])
            .filter(|&t| mask.allows(t) && !self.vocab.is_special(t))
            .max_by_key(|&t| (self.vocab.bytes(t).len(), std::cmp::Reverse(t)));
        if let Some(t) = exact {
            self.idle = 0;
            return Some((t, at + self.vocab.bytes(t).len()));
        }
        let mut best: Option<(usize, TokenId, usize)> = None;
        let mut idle: Option<TokenId> = None;
        for &t in ids {
            let Some(next) = fuzzy_advance(target, at, self.vocab.bytes(t)) else {
                continue;
            };
            if next > at {
                if best.map_or(true, |(p, _, _)| next - at > p) {
                    best = Some((next - at, t, next));
                }
            } else if idle.is_none() {
                idle = Some(t);
            }
        }
        if let Some((_, t, next)) = best {
            self.idle = 0;
            return Some((t, next));
        }
        match idle {
            Some(t) if allow_idle && self.idle < MAX_IDLE => {
                self.idle += 1;
                Some((t, at))
            }
            _ => None,
        }
    }
}
