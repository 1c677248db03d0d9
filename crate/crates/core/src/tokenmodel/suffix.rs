/// Sorted suffix table over a byte text.
///
/// Only the suffixes starting at the indexed positions are kept, so the
/// index can be restricted to, say, character boundaries. All suffixes that
/// share a prefix form one contiguous range of the table, which is what
/// [`SuffixIndex::narrow`] exploits.
#[derive(Clone, Debug)]
pub struct SuffixIndex {
    text: Vec<u8>,
    sorted: Vec<u32>,
}

impl SuffixIndex {
    /// Indexes every position `0..text.len()`.
    pub fn new(text: &[u8]) -> Self {
        Self::with_positions(text, 0..text.len())
    }

    /// Indexes only the given start positions (each `< text.len()`).
    pub fn with_positions(text: &[u8], positions: impl IntoIterator<Item = usize>) -> Self {
        let mut sorted: Vec<u32> = positions
            .into_iter()
            .inspect(|&p| assert!(p < text.len(), "position {p} out of range"))
            .map(|p| p as u32)
            .collect();
        sorted.sort_unstable_by(|&a, &b| text[a as usize..].cmp(&text[b as usize..]));
        sorted.dedup();
        Self {
            text: text.to_vec(),
            sorted,
        }
    }

    pub fn text(&self) -> &[u8] {
        &self.text
    }

    /// Number of indexed positions.
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn full_range(&self) -> (usize, usize) {
        (0, self.sorted.len())
    }

    /// Text position of the `rank`-th suffix in sorted order.
    pub fn position(&self, rank: usize) -> usize {
        self.sorted[rank] as usize
    }

    /// Given a range of suffixes that share their first `depth` bytes,
    /// returns the subrange whose byte at `depth` equals `byte`.
    pub fn narrow(&self, lo: usize, hi: usize, depth: usize, byte: u8) -> (usize, usize) {
        let key = |rank: &u32| self.text.get(*rank as usize + depth).copied();
        let slice = &self.sorted[lo..hi];
        let start = slice.partition_point(|r| key(r) < Some(byte));
        let end = slice.partition_point(|r| key(r) <= Some(byte));
        (lo + start, lo + end)
    }

    /// Suffix-table range of the indexed positions whose suffix starts with
    /// `prefix`.
    pub fn range(&self, prefix: &[u8]) -> (usize, usize) {
        let (mut lo, mut hi) = self.full_range();
        for (depth, &b) in prefix.iter().enumerate() {
            (lo, hi) = self.narrow(lo, hi, depth, b);
            if lo == hi {
                break;
            }
        }
        (lo, hi)
    }

    /// Indexed positions `p` with `text[p..]` starting with `prefix`, ascending.
    pub fn query(&self, prefix: &[u8]) -> Vec<usize> {
        let (lo, hi) = self.range(prefix);
        let mut out: Vec<usize> = (lo..hi).map(|r| self.position(r)).collect();
        out.sort_unstable();
        out
    }
}
