use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::{TokenId, TokenVocab};
use super::Tokenizer;

/// Special end-of-sequence token appended after the learned merges.
pub const END_TOKEN: &[u8] = b"<|end|>";

#[derive(Clone, Debug)]
pub struct SyntheticOptions {
    pub merges: usize,
    /// Probability of taking a random pair instead of the most frequent one.
    pub noise: f64,
    pub max_token_len: usize,
    /// Also train on each corpus string wrapped in quotes and in a
    /// `{"text": "..."}` object, so that quote-fused tokens appear.
    pub json_contexts: bool,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            merges: 300,
            noise: 0.25,
            max_token_len: 12,
            json_contexts: true,
        }
    }
}

/// Byte-level BPE tokenizer trained on a small corpus with seeded noise.
///
/// Ids `0..256` are the single bytes, followed by one id per merge and a
/// final special end token.
#[derive(Clone, Debug)]
pub struct SyntheticTokenizer {
    seed: u64,
    merges: Vec<(TokenId, TokenId)>,
    ranks: HashMap<(TokenId, TokenId), usize>,
    vocab: TokenVocab,
}

impl SyntheticTokenizer {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn merge_table(&self) -> &[(TokenId, TokenId)] {
        &self.merges
    }

    pub fn end_token(&self) -> TokenId {
        (self.vocab.size() - 1) as TokenId
    }

    fn merged_id(rank: usize) -> TokenId {
        (256 + rank) as TokenId
    }
}

impl Tokenizer for SyntheticTokenizer {
    fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    fn encode(&self, text: &[u8]) -> Vec<TokenId> {
        let mut seq: Vec<TokenId> = text.iter().map(|&b| b as TokenId).collect();
        loop {
            let best = seq
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let pair = self.merges[rank];
            seq = merge_pair(&seq, pair, Self::merged_id(rank));
        }
        seq
    }
}

fn merge_pair(seq: &[TokenId], pair: (TokenId, TokenId), id: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && (seq[i], seq[i + 1]) == pair {
            out.push(id);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    out
}

/// Trains a synthetic tokenizer with default options.
///
/// # Panics
///
/// Panics if `corpus` is empty.
pub fn make_synthetic_tokenizer(seed: u64, corpus: &[String]) -> SyntheticTokenizer {
    make_synthetic_tokenizer_with(seed, corpus, &SyntheticOptions::default())
}

pub fn make_synthetic_tokenizer_with(seed: u64, corpus: &[String], options: &SyntheticOptions) -> SyntheticTokenizer {
    assert!(!corpus.is_empty(), "synthetic tokenizer needs a corpus");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut token_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();

    let mut sequences: Vec<Vec<TokenId>> = Vec::new();
    for text in corpus {
        let mut contexts = vec![text.clone()];
        if options.json_contexts {
            contexts.push(format!("\"{text}\""));
            contexts.push(format!("[{{\"text\": \"{text}\", \"label\": \"X\"}}]"));
            contexts.push(format!(" {text}"));
        }
        for c in contexts {
            sequences.push(c.bytes().map(|b| b as TokenId).collect());
        }
    }

    let mut merges = Vec::new();
    let mut ranks = HashMap::new();
    while merges.len() < options.merges {
        let mut counts: HashMap<(TokenId, TokenId), usize> = HashMap::new();
        for seq in &sequences {
            for w in seq.windows(2) {
                let len = token_bytes[w[0] as usize].len() + token_bytes[w[1] as usize].len();
                if len <= options.max_token_len {
                    *counts.entry((w[0], w[1])).or_default() += 1;
                }
            }
        }
        let mut pairs: Vec<((TokenId, TokenId), usize)> = counts.into_iter().collect();
        if pairs.is_empty() {
            break;
        }
        pairs.sort_unstable();
        let pair = if rng.gen_bool(options.noise) {
            pairs.choose(&mut rng).expect("non-empty").0
        } else {
            let top = pairs.iter().map(|p| p.1).max().expect("non-empty");
            let best: Vec<_> = pairs.iter().filter(|p| p.1 == top).collect();
            best.choose(&mut rng).expect("non-empty").0
        };
        let id = SyntheticTokenizer::merged_id(merges.len());
        let mut bytes = token_bytes[pair.0 as usize].clone();
        bytes.extend_from_slice(&token_bytes[pair.1 as usize]);
        token_bytes.push(bytes);
        ranks.insert(pair, merges.len());
        merges.push(pair);
        for seq in &mut sequences {
            *seq = merge_pair(seq, pair, id);
        }
    }

    token_bytes.push(END_TOKEN.to_vec());
    let end = (token_bytes.len() - 1) as TokenId;
    let vocab = TokenVocab::new(token_bytes, [end]).expect("synthetic vocabulary is well formed");
    SyntheticTokenizer {
        seed,
        merges,
        ranks,
        vocab,
    }
}
