//! JSON string escaping of the input text.
//!
//! Inside a JSON string literal the decoded bytes spell the *escaped* input,
//! so copying is checked against that form. Escaping follows `serde_json`:
//! `"` and `\` are backslash-escaped, control characters use the short forms
//! where JSON has them and `\u00XX` otherwise, everything else is verbatim.

use std::fmt::Write as _;

/// Appends the JSON escape of one character.
pub fn escape_char(c: char, out: &mut String) {
    match c {
        '"' => out.push_str("\\\""),
        '\\' => out.push_str("\\\\"),
        '\n' => out.push_str("\\n"),
        '\r' => out.push_str("\\r"),
        '\t' => out.push_str("\\t"),
        '\u{08}' => out.push_str("\\b"),
        '\u{0c}' => out.push_str("\\f"),
        c if (c as u32) < 0x20 => {
            let _ = write!(out, "\\u{:04x}", c as u32);
        }
        c => out.push(c),
    }
}

/// JSON string escape of `s`, without the surrounding quotes.
pub fn escape_json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        escape_char(c, &mut out);
    }
    out
}

/// The escaped input together with its escape-unit boundaries.
#[derive(Clone, Debug)]
pub struct EscapedInput {
    bytes: Vec<u8>,
    // escaped byte offset of every original char start, plus the end
    char_starts: Vec<usize>,
    boundary: Vec<bool>,
}

impl EscapedInput {
    pub fn new(input: &str) -> Self {
        let mut escaped = String::with_capacity(input.len() + 8);
        let mut char_starts = Vec::with_capacity(input.len() + 1);
        for c in input.chars() {
            char_starts.push(escaped.len());
            escape_char(c, &mut escaped);
        }
        char_starts.push(escaped.len());
        let mut boundary = vec![false; escaped.len() + 1];
        for &s in &char_starts {
            boundary[s] = true;
        }
        Self {
            bytes: escaped.into_bytes(),
            char_starts,
            boundary,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Whether `pos` separates two escape units (i.e. two original chars).
    pub fn is_boundary(&self, pos: usize) -> bool {
        self.boundary.get(pos).copied().unwrap_or(false)
    }

    /// Escaped offsets where an original character starts (end excluded).
    pub fn span_starts(&self) -> &[usize] {
        &self.char_starts[..self.char_starts.len() - 1]
    }

    /// Original character offset of an escaped boundary offset.
    pub fn char_offset(&self, pos: usize) -> Option<usize> {
        self.char_starts.binary_search(&pos).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quote_is_escaped() {
        let e = EscapedInput::new("a\"b");
        assert_eq!(e.bytes(), b"a\\\"b");
        assert_eq!(e.len(), 4);
        assert!(e.is_boundary(1));
        assert!(!e.is_boundary(2));
        assert_eq!(e.char_offset(3), Some(2));
    }

    proptest! {
        #[test]
        fn matches_serde_json(s in "[a-z\"\\\\\u{0}-\u{1f}\u{7f}é€😀/ ]{0,20}") {
            let full = serde_json::to_string(&s).unwrap();
            prop_assert_eq!(escape_json_str(&s), &full[1..full.len() - 1]);
        }

        #[test]
        fn boundaries_unescape_to_substrings(s in "[ab\"\\\\\n\u{1}é😀]{0,12}") {
            let e = EscapedInput::new(&s);
            let chars: Vec<char> = s.chars().collect();
            for (i, &a) in e.char_starts.iter().enumerate() {
                for (j, &b) in e.char_starts.iter().enumerate().skip(i) {
                    let lit = format!("\"{}\"", std::str::from_utf8(&e.bytes()[a..b]).unwrap());
                    let back: String = serde_json::from_str(&lit).unwrap();
                    prop_assert_eq!(back, chars[i..j].iter().collect::<String>());
                }
            }
        }
    }
}
