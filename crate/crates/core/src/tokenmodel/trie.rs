use super::vocab::{TokenId, TokenVocab};

#[derive(Clone, Debug, Default)]
struct Node {
    // sorted by byte
    children: Vec<(u8, u32)>,
    // ids whose bytes end exactly here (duplicates are possible)
    terminals: Vec<TokenId>,
}

/// Byte trie over the non-special tokens of a vocabulary.
#[derive(Clone, Debug)]
pub struct VocabTrie {
    nodes: Vec<Node>,
}

pub type NodeId = u32;

impl VocabTrie {
    pub fn new(vocab: &TokenVocab) -> Self {
        let mut nodes = vec![Node::default()];
        for id in 0..vocab.size() as TokenId {
            if vocab.is_special(id) {
                continue;
            }
            let mut node = 0usize;
            for &b in vocab.bytes(id) {
                node = match nodes[node].children.binary_search_by_key(&b, |c| c.0) {
                    Ok(i) => nodes[node].children[i].1 as usize,
                    Err(i) => {
                        let next = nodes.len() as u32;
                        nodes[node].children.insert(i, (b, next));
                        nodes.push(Node::default());
                        next as usize
                    }
                };
            }
            nodes[node].terminals.push(id);
        }
        Self { nodes }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn children(&self, node: NodeId) -> &[(u8, NodeId)] {
        &self.nodes[node as usize].children
    }

    pub fn child(&self, node: NodeId, byte: u8) -> Option<NodeId> {
        let children = self.children(node);
        children
            .binary_search_by_key(&byte, |c| c.0)
            .ok()
            .map(|i| children[i].1)
    }

    pub fn terminals(&self, node: NodeId) -> &[TokenId] {
        &self.nodes[node as usize].terminals
    }

    /// Ids of every token that is a prefix of `text`, shortest first.
    pub fn prefixes_of<'a>(&'a self, text: &'a [u8]) -> impl Iterator<Item = TokenId> + 'a {
        let mut node = Some(self.root());
        let mut depth = 0usize;
        std::iter::from_fn(move || {
            let current = node?;
            node = text.get(depth).and_then(|&b| self.child(current, b));
            depth += 1;
            Some(self.terminals(current).iter().copied())
        })
        .flatten()
    }

    /// Longest token that is a prefix of `text`, with its byte length.
    pub fn longest_prefix(&self, text: &[u8]) -> Option<(TokenId, usize)> {
        let mut best = None;
        let mut node = self.root();
        for (i, &b) in text.iter().enumerate() {
            match self.child(node, b) {
                Some(next) => node = next,
                None => break,
            }
            if let Some(&id) = self.terminals(node).first() {
                best = Some((id, i + 1));
            }
        }
        best
    }
}
