use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use super::trie::VocabTrie;
use super::Tokenizer;

pub type TokenId = u32;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("token {0} is not special but has no bytes")]
    EmptyToken(TokenId),
    #[error("special id {0} is outside the vocabulary")]
    SpecialOutOfRange(TokenId),
    #[error("vocabulary file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("token ids are not dense: id {0} is missing")]
    Gap(TokenId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token-id to byte-string table.
///
/// Ids are dense in `[0, size)`. Special (control) tokens never take part in
/// span content.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<Vec<u8>>,
    special: BTreeSet<TokenId>,
    single_byte: HashMap<u8, TokenId>,
}

impl TokenVocab {
    pub fn new(tokens: Vec<Vec<u8>>, special: impl IntoIterator<Item = TokenId>) -> Result<Self, VocabError> {
        let special: BTreeSet<TokenId> = special.into_iter().collect();
        if let Some(&bad) = special.iter().find(|&&id| id as usize >= tokens.len()) {
            return Err(VocabError::SpecialOutOfRange(bad));
        }
        let mut single_byte = HashMap::new();
        for (id, bytes) in tokens.iter().enumerate() {
            let id = id as TokenId;
            if special.contains(&id) {
                continue;
            }
            if bytes.is_empty() {
                return Err(VocabError::EmptyToken(id));
            }
            if bytes.len() == 1 {
                single_byte.entry(bytes[0]).or_insert(id);
            }
        }
        Ok(Self {
            tokens,
            special,
            single_byte,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn bytes(&self, id: TokenId) -> &[u8] {
        &self.tokens[id as usize]
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special.contains(&id)
    }

    pub fn special_ids(&self) -> &BTreeSet<TokenId> {
        &self.special
    }

    /// The non-special single-byte token spelling `byte`, if any.
    pub fn single_byte_token(&self, byte: u8) -> Option<TokenId> {
        self.single_byte.get(&byte).copied()
    }

    /// Every one of the 256 byte values is spellable by a single token.
    pub fn has_byte_fallback(&self) -> bool {
        self.single_byte.len() == 256
    }

    /// Parses the plain-text vocabulary format: an optional header line
    /// `#special <id> <id> ...` followed by one `<id>\t<base64 bytes>` line per
    /// token.
    pub fn parse(source: &str) -> Result<Self, VocabError> {
        let mut special = Vec::new();
        let mut entries: Vec<(TokenId, Vec<u8>)> = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#special") {
                for field in rest.split_whitespace() {
                    let id = field.parse().map_err(|_| VocabError::Format {
                        line: line_no,
                        reason: format!("bad special id `{field}`"),
                    })?;
                    special.push(id);
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (id, encoded) = line.split_once('\t').ok_or_else(|| VocabError::Format {
                line: line_no,
                reason: "expected `<id>\\t<base64>`".into(),
            })?;
            let id: TokenId = id.trim().parse().map_err(|_| VocabError::Format {
                line: line_no,
                reason: format!("bad token id `{id}`"),
            })?;
            let bytes = STANDARD.decode(encoded.trim()).map_err(|e| VocabError::Format {
                line: line_no,
                reason: e.to_string(),
            })?;
            entries.push((id, bytes));
        }
        entries.sort_by_key(|(id, _)| *id);
        let mut tokens = Vec::with_capacity(entries.len());
        for (expected, (id, bytes)) in entries.into_iter().enumerate() {
            if id as usize != expected {
                return Err(if (id as usize) < expected {
                    VocabError::Format {
                        line: 0,
                        reason: format!("duplicate token id {id}"),
                    }
                } else {
                    VocabError::Gap(expected as TokenId)
                });
            }
            tokens.push(bytes);
        }
        Self::new(tokens, special)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("#special");
        for id in &self.special {
            let _ = write!(out, " {id}");
        }
        out.push('\n');
        for (id, bytes) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{id}\t{}", STANDARD.encode(bytes));
        }
        out
    }
}

/// Longest-match tokenizer for arbitrary vocabularies (e.g. loaded from a
/// file). Bytes that no token covers are skipped, so a vocabulary without
/// byte fallback may not round-trip.
#[derive(Clone, Debug)]
pub struct GreedyTokenizer {
    vocab: TokenVocab,
    trie: VocabTrie,
}

impl GreedyTokenizer {
    pub fn new(vocab: TokenVocab) -> Self {
        let trie = VocabTrie::new(&vocab);
        Self { vocab, trie }
    }
}

impl Tokenizer for GreedyTokenizer {
    fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    fn encode(&self, text: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            match self.trie.longest_prefix(&text[pos..]) {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => pos += 1,
            }
        }
        out
    }
}
