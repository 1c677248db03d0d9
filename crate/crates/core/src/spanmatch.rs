//! Locating generated span text inside the input text.
//!
//! Matching is exact: no case folding, no whitespace normalization. A span
//! whose text does not occur verbatim is reported as missing and ends up as a
//! span content error upstream.

use regex::Regex;

use crate::span::CharMap;

/// Which occurrence of the needle to return.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocateMode {
    Leftmost,
    /// 1-based occurrence index. Occurrences are counted with overlaps, so
    /// `"aa"` occurs twice in `"aaa"`.
    Occurrence(usize),
    /// The occurrence whose start is closest to the estimate (in chars);
    /// ties go to the smaller start.
    Nearest(usize),
}

/// Character start offsets of every (possibly overlapping) occurrence.
pub fn occurrences(needle: &str, haystack: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let map = CharMap::new(haystack);
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let byte = from + rel;
        // `find` only reports char-aligned matches for a valid UTF-8 needle
        out.push(map.char_offset(byte).expect("match on char boundary"));
        let step = haystack[byte..].chars().next().map_or(1, char::len_utf8);
        from = byte + step;
    }
    out
}

/// Finds `needle` in `haystack` and returns its `(start, end)` character
/// range, or `None` if the requested occurrence does not exist.
pub fn locate(needle: &str, haystack: &str, mode: LocateMode) -> Option<(usize, usize)> {
    if needle.is_empty() {
        return None;
    }
    let len = needle.chars().count();
    let start = match mode {
        LocateMode::Leftmost => {
            let byte = haystack.find(needle)?;
            haystack[..byte].chars().count()
        }
        LocateMode::Occurrence(n) => {
            if n == 0 {
                return None;
            }
            *occurrences(needle, haystack).get(n - 1)?
        }
        LocateMode::Nearest(estimate) => occurrences(needle, haystack)
            .into_iter()
            .min_by_key(|&s| (s.abs_diff(estimate), s))?,
    };
    Some((start, start + len))
}

/// Description of an inline tag format, e.g. `<entity type="PER">...</entity>`.
#[derive(Clone, Debug)]
pub struct TagGrammar {
    pub open_prefix: String,
    pub open_suffix: String,
    pub close: String,
}

impl Default for TagGrammar {
    fn default() -> Self {
        Self::xml_entity()
    }
}

impl TagGrammar {
    pub fn xml_entity() -> Self {
        Self {
            open_prefix: "<entity type=\"".into(),
            open_suffix: "\">".into(),
            close: "</entity>".into(),
        }
    }

    pub fn open_tag(&self, label: &str) -> String {
        format!("{}{}{}", self.open_prefix, label, self.open_suffix)
    }

    fn regex(&self) -> Regex {
        let pattern = format!(
            "{}(?P<label>[^\"<>]*?){}|(?P<close>{})",
            regex::escape(&self.open_prefix),
            regex::escape(&self.open_suffix),
            regex::escape(&self.close)
        );
        Regex::new(&pattern).expect("tag grammar compiles")
    }
}

/// One tagged item with the position its text would have in the untagged
/// copy of the output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedItem {
    pub text: String,
    pub label: String,
    pub estimate: usize,
}

/// Result of scanning a tagged output.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagScan {
    /// Items in order of their opening tag.
    pub items: Vec<TaggedItem>,
    /// Tags that could not be paired (stray close, unclosed open); everything
    /// after the first imbalance is dropped.
    pub unbalanced: usize,
    /// Total number of opening tags seen, balanced or not.
    pub open_tags: usize,
    /// Output with all tags removed.
    pub stripped: String,
}

/// Scans tags left to right, computing for each tagged span the character
/// offset of its content in the tag-stripped output (the running offset).
pub fn running_offset_estimate(tagged_output: &str, grammar: &TagGrammar) -> TagScan {
    let re = grammar.regex();
    let mut scan = TagScan::default();
    // (label, estimate, byte offset of content start in `stripped`, slot in items)
    let mut stack: Vec<(String, usize, usize, usize)> = Vec::new();
    let mut stripped_chars = 0usize;
    let mut last = 0usize;
    let mut broken = false;

    for caps in re.captures_iter(tagged_output) {
        let m = caps.get(0).expect("whole match");
        let between = &tagged_output[last..m.start()];
        scan.stripped.push_str(between);
        stripped_chars += between.chars().count();
        last = m.end();
        if let Some(label) = caps.name("label") {
            scan.open_tags += 1;
            if broken {
                scan.unbalanced += 1;
                continue;
            }
            stack.push((
                label.as_str().to_string(),
                stripped_chars,
                scan.stripped.len(),
                scan.items.len(),
            ));
            scan.items.push(TaggedItem {
                text: String::new(),
                label: String::new(),
                estimate: 0,
            });
        } else if broken {
            continue;
        } else if let Some((label, estimate, byte_start, slot)) = stack.pop() {
            scan.items[slot] = TaggedItem {
                text: scan.stripped[byte_start..].to_string(),
                label,
                estimate,
            };
        } else {
            scan.unbalanced += 1;
            broken = true;
        }
    }
    scan.stripped.push_str(&tagged_output[last..]);

    // unclosed opens: drop their placeholders
    if !stack.is_empty() {
        scan.unbalanced += stack.len();
        let dead: Vec<usize> = stack.iter().map(|s| s.3).collect();
        let mut slot = 0;
        scan.items.retain(|_| {
            let keep = !dead.contains(&slot);
            slot += 1;
            keep
        });
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TURING: &str = "Turing was born in London.";

    #[test]
    fn locate_examples() {
        assert_eq!(locate("London", TURING, LocateMode::Leftmost), Some((19, 25)));
        assert_eq!(
            locate("the", "the cat and the dog", LocateMode::Occurrence(2)),
            Some((12, 15))
        );
        assert_eq!(locate("x", "abc", LocateMode::Leftmost), None);
        assert_eq!(locate("the", "the cat", LocateMode::Occurrence(2)), None);
        assert_eq!(locate("the", "the cat", LocateMode::Occurrence(0)), None);
        assert_eq!(locate("", "abc", LocateMode::Leftmost), None);
    }

    #[test]
    fn nearest_ties_go_left() {
        // occurrences at 0 and 4, estimate 2 is equidistant
        assert_eq!(locate("ab", "ab  ab", LocateMode::Nearest(2)), Some((0, 2)));
        assert_eq!(locate("ab", "ab  ab", LocateMode::Nearest(3)), Some((4, 6)));
    }

    #[test]
    fn occurrences_overlap_and_count_chars() {
        assert_eq!(occurrences("aa", "aaa"), vec![0, 1]);
        assert_eq!(occurrences("ž", "žaž"), vec![0, 2]);
    }

    #[test]
    fn running_offsets_on_table_sentence() {
        let out = "<entity type=\"PER\">Turing</entity> was born in <entity type=\"LOC\">London</entity>.";
        let scan = running_offset_estimate(out, &TagGrammar::default());
        assert_eq!(scan.stripped, TURING);
        assert_eq!(scan.unbalanced, 0);
        // strip-and-count oracle
        let estimates: Vec<(String, usize)> = scan.items.iter().map(|i| (i.text.clone(), i.estimate)).collect();
        let oracle: Vec<(String, usize)> = ["Turing", "London"]
            .iter()
            .map(|w| (w.to_string(), TURING.find(w).unwrap()))
            .collect();
        assert_eq!(estimates, oracle);
        assert_eq!(scan.items[1].label, "LOC");
    }

    #[test]
    fn running_offsets_without_tags() {
        let scan = running_offset_estimate("plain text", &TagGrammar::default());
        assert!(scan.items.is_empty());
        assert_eq!(scan.stripped, "plain text");
    }

    #[test]
    fn inserted_word_shifts_estimate_but_nearest_recovers() {
        let out = "Turing was born right in <entity type=\"LOC\">London</entity>.";
        let scan = running_offset_estimate(out, &TagGrammar::default());
        let item = &scan.items[0];
        assert_eq!(item.estimate, 19 + "right ".len());
        assert_eq!(
            locate(&item.text, TURING, LocateMode::Nearest(item.estimate)),
            Some((19, 25))
        );
    }

    #[test]
    fn unbalanced_tags_keep_prefix() {
        let out = "<entity type=\"PER\">A</entity> b </entity> <entity type=\"LOC\">C</entity>";
        let scan = running_offset_estimate(out, &TagGrammar::default());
        assert_eq!(scan.items.len(), 1);
        assert_eq!(scan.items[0].text, "A");
        assert_eq!(scan.unbalanced, 2);

        let scan = running_offset_estimate("<entity type=\"PER\">A b", &TagGrammar::default());
        assert!(scan.items.is_empty());
        assert_eq!(scan.unbalanced, 1);
    }

    #[test]
    fn nested_tags_are_paired_innermost_first() {
        let out = "<entity type=\"ORG\">Bank of <entity type=\"LOC\">Oslo</entity></entity>";
        let scan = running_offset_estimate(out, &TagGrammar::default());
        assert_eq!(scan.items[0].text, "Bank of Oslo");
        assert_eq!(scan.items[1].text, "Oslo");
        assert_eq!(scan.items[1].estimate, 8);
    }

    proptest! {
        #[test]
        fn nearest_is_closest(hay in "[ab ]{0,30}", needle in "[ab]{1,3}", est in 0usize..35) {
            let all = occurrences(&needle, &hay);
            match locate(&needle, &hay, LocateMode::Nearest(est)) {
                None => prop_assert!(all.is_empty()),
                Some((s, e)) => {
                    prop_assert_eq!(&hay[s..e], needle.as_str());
                    for o in all {
                        prop_assert!(s.abs_diff(est) <= o.abs_diff(est));
                    }
                }
            }
        }

        #[test]
        fn first_occurrence_is_leftmost(hay in "[abž ]{0,30}", needle in "[abž]{1,3}") {
            let left = locate(&needle, &hay, LocateMode::Leftmost);
            if let Some((s, e)) = left {
                let chars: Vec<char> = hay.chars().collect();
                let got: String = chars[s..e].iter().collect();
                prop_assert_eq!(got, needle.clone());
                prop_assert_eq!(locate(&needle, &hay, LocateMode::Occurrence(1)), left);
            }
        }
    }
}
