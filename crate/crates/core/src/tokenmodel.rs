//! Tokenizer model: byte-level vocabularies, prefix lookup over input
//! suffixes, and a small deterministic BPE tokenizer for testing.
//!
//! Tokens are matched as byte strings against the UTF-8 encoding of the
//! (escaped) input, never as code points.

mod suffix;
mod synthetic;
mod trie;
mod vocab;

pub use suffix::SuffixIndex;
pub use synthetic::{
    make_synthetic_tokenizer, make_synthetic_tokenizer_with, SyntheticOptions, SyntheticTokenizer, END_TOKEN,
};
pub use trie::VocabTrie;
pub use vocab::{GreedyTokenizer, TokenId, TokenVocab, VocabError};

use std::collections::BTreeSet;

/// Encoding and decoding over a [`TokenVocab`].
pub trait Tokenizer {
    fn vocab(&self) -> &TokenVocab;

    fn encode(&self, text: &[u8]) -> Vec<TokenId>;

    fn decode(&self, ids: &[TokenId]) -> Vec<u8> {
        let vocab = self.vocab();
        ids.iter().flat_map(|&id| vocab.bytes(id).iter().copied()).collect()
    }
}

/// Every token whose bytes are a prefix of `index.text()[position..]`.
///
/// # Panics
///
/// Panics if `position > index.text().len()`.
pub fn tokens_matching_prefix(trie: &VocabTrie, index: &SuffixIndex, position: usize) -> BTreeSet<TokenId> {
    let text = index.text();
    assert!(position <= text.len(), "position {position} past end of text");
    trie.prefixes_of(&text[position..]).collect()
}

/// Every token that is a prefix of the text at some indexed position.
pub fn tokens_matching_anywhere(trie: &VocabTrie, index: &SuffixIndex) -> BTreeSet<TokenId> {
    let mut out = BTreeSet::new();
    let mut stack = vec![(trie.root(), 0usize, index.full_range())];
    while let Some((node, depth, (lo, hi))) = stack.pop() {
        out.extend(trie.terminals(node).iter().copied());
        for &(byte, child) in trie.children(node) {
            let (clo, chi) = index.narrow(lo, hi, depth, byte);
            if clo < chi {
                stack.push((child, depth + 1, (clo, chi)));
            }
        }
    }
    out
}
