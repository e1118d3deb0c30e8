//! Online n-gram prefix trie.
//!
//! Every contiguous window of an inserted sequence, up to `n_max` tokens, is
//! stored as a root path. Windows starting on the last token of a multi-token
//! sequence are skipped since they have no continuation. Each node keeps
//! three raw statistics:
//!
//! * frequency: number of inserted windows whose prefix ends at the node,
//! * depth: path length from the root, fixed at creation,
//! * recency: latest timestamp of any insertion touching the node.
//!
//! Insertion walks at most `len * n_max` nodes no matter how much has been
//! stored already. Nodes live in an arena; children are kept sorted by token
//! id, which makes iteration order (and therefore snapshots) deterministic.
//!
//! # Snapshot layout
//!
//! All integers little-endian.
//!
//! ```text
//! magic            8 bytes   "ODDTRIE\0"
//! version          u16       currently 1
//! n_max            u32
//! last_timestamp   u64
//! total_insertions u64       cumulative inserted token positions
//! node_count       u64       excluding the root
//! root_children    u32
//! node records, preorder, children in ascending token order:
//!     token u32 | frequency u64 | depth u32 | recency u64 | child_count u32
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub const DEFAULT_N_MAX: usize = 5;

const MAGIC: &[u8; 8] = b"ODDTRIE\0";
pub const SNAPSHOT_VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 4 + 8 + 8 + 8 + 4;
const RECORD_LEN: usize = 4 + 8 + 4 + 8 + 4;

/// Raw per-node statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    pub frequency: u64,
    pub depth: u32,
    pub recency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrieConfig {
    pub n_max: usize,
}

impl Default for TrieConfig {
    fn default() -> Self {
        TrieConfig { n_max: DEFAULT_N_MAX }
    }
}

impl TrieConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::InvalidConfig(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        if self.n_max > u32::MAX as usize {
            return Err(Error::InvalidConfig("n_max too large".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrieStats {
    /// Distinct nodes, root excluded.
    pub nodes: usize,
    /// Cumulative inserted token positions.
    pub total_insertions: u64,
}

type NodeIdx = u32;
const ROOT: NodeIdx = 0;

/// Child list of a node. A lone child is stored inline; larger lists live in
/// a side table so that a node stays 32 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
enum Children {
    #[default]
    Empty,
    One((TokenId, NodeIdx)),
    Many(u32),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    frequency: u64,
    recency: u64,
    depth: u32,
    children: Children,
}

impl Node {
    fn new(depth: u32, recency: u64) -> Self {
        Node { frequency: 0, recency, depth, children: Children::Empty }
    }

    fn features(&self) -> Features {
        Features { frequency: self.frequency, depth: self.depth, recency: self.recency }
    }
}

#[derive(Debug, Clone)]
pub struct PrefixTrie {
    config: TrieConfig,
    nodes: Vec<Node>,
    /// Sorted child lists of nodes with two or more children.
    lists: Vec<Vec<(TokenId, NodeIdx)>>,
    total_insertions: u64,
    last_timestamp: Option<u64>,
}

impl Default for PrefixTrie {
    fn default() -> Self {
        Self::new(TrieConfig::default()).expect("default config is valid")
    }
}

impl PrefixTrie {
    pub fn new(config: TrieConfig) -> Result<Self> {
        config.validate()?;
        Ok(PrefixTrie {
            config,
            nodes: vec![Node::new(0, 0)],
            lists: Vec::new(),
            total_insertions: 0,
            last_timestamp: None,
        })
    }

    pub fn config(&self) -> TrieConfig {
        self.config
    }

    pub fn n_max(&self) -> usize {
        self.config.n_max
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.last_timestamp
    }

    pub fn stats(&self) -> TrieStats {
        TrieStats { nodes: self.nodes.len() - 1, total_insertions: self.total_insertions }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Inserts every window of `tokens` of length up to `n_max`. Timestamps
    /// must be non-decreasing across calls. Returns the node count afterwards.
    pub fn insert_sequence(&mut self, tokens: &[TokenId], timestamp: u64) -> Result<usize> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(last) = self.last_timestamp {
            if timestamp < last {
                return Err(Error::TimestampRegression { last, got: timestamp });
            }
        }
        // A window that starts on the final token has no continuation and can
        // never produce a candidate; it is only stored for one-token sequences.
        let starts = if tokens.len() == 1 { 1 } else { tokens.len() - 1 };
        for start in 0..starts {
            let end = (start + self.config.n_max).min(tokens.len());
            let mut node = ROOT;
            for (offset, &token) in tokens[start..end].iter().enumerate() {
                node = self.child_or_insert(node, token, offset as u32 + 1, timestamp);
                let f = &mut self.nodes[node as usize];
                f.frequency += 1;
                f.recency = f.recency.max(timestamp);
            }
        }
        self.total_insertions += tokens.len() as u64;
        self.last_timestamp = Some(timestamp);
        Ok(self.stats().nodes)
    }

    fn child_or_insert(&mut self, parent: NodeIdx, token: TokenId, depth: u32, ts: u64) -> NodeIdx {
        match self.child(parent, token) {
            Some(c) => c,
            None => {
                let idx = self.nodes.len() as NodeIdx;
                self.nodes.push(Node::new(depth, ts));
                self.add_child(parent, token, idx);
                idx
            }
        }
    }

    fn children(&self, node: NodeIdx) -> &[(TokenId, NodeIdx)] {
        match &self.nodes[node as usize].children {
            Children::Empty => &[],
            Children::One(pair) => std::slice::from_ref(pair),
            Children::Many(i) => &self.lists[*i as usize],
        }
    }

    fn child(&self, node: NodeIdx, token: TokenId) -> Option<NodeIdx> {
        match self.nodes[node as usize].children {
            Children::Empty => None,
            Children::One((t, c)) => (t == token).then_some(c),
            Children::Many(i) => {
                let v = &self.lists[i as usize];
                v.binary_search_by_key(&token, |&(t, _)| t).ok().map(|j| v[j].1)
            }
        }
    }

    /// Adds a child for a token known to be absent.
    fn add_child(&mut self, node: NodeIdx, token: TokenId, child: NodeIdx) {
        let slot = &mut self.nodes[node as usize].children;
        match *slot {
            Children::Empty => *slot = Children::One((token, child)),
            Children::One((t, c)) => {
                let (a, b) = ((t, c), (token, child));
                *slot = Children::Many(self.lists.len() as u32);
                self.lists.push(if t < token { vec![a, b] } else { vec![b, a] });
            }
            Children::Many(i) => {
                let v = &mut self.lists[i as usize];
                let j = v.binary_search_by_key(&token, |&(t, _)| t).unwrap_err();
                v.insert(j, (token, child));
            }
        }
    }

    fn find(&self, path: &[TokenId]) -> Option<NodeIdx> {
        let mut node = ROOT;
        for &t in path {
            node = self.child(node, t)?;
        }
        Some(node)
    }

    /// Features of the node reached by `path`, if present.
    pub fn features(&self, path: &[TokenId]) -> Option<Features> {
        if path.is_empty() {
            return None;
        }
        self.find(path).map(|n| self.nodes[n as usize].features())
    }

    /// Children of the node matching `suffix`, in ascending token order.
    /// An unmatched suffix yields an empty list.
    pub fn next_tokens(&self, suffix: &[TokenId]) -> Vec<(TokenId, Features)> {
        let mut out = Vec::new();
        self.for_each_next(suffix, |t, f| out.push((t, f)));
        out
    }

    /// Like [`PrefixTrie::next_tokens`] without allocating. Returns whether
    /// the suffix matched a node.
    pub fn for_each_next(&self, suffix: &[TokenId], mut f: impl FnMut(TokenId, Features)) -> bool {
        match self.find(suffix) {
            Some(n) => {
                for &(t, c) in self.children(n) {
                    f(t, self.nodes[c as usize].features());
                }
                true
            }
            None => false,
        }
    }

    /// Visits every node in preorder with its full path.
    pub fn walk(&self, mut visit: impl FnMut(&[TokenId], Features)) {
        let mut path = Vec::new();
        let mut stack: Vec<(NodeIdx, usize)> = vec![(ROOT, 0)];
        while let Some((node, next_child)) = stack.pop() {
            let children = self.children(node);
            if next_child < children.len() {
                stack.push((node, next_child + 1));
                let (tok, child) = children[next_child];
                path.push(tok);
                visit(&path, self.nodes[child as usize].features());
                stack.push((child, 0));
            } else if node != ROOT {
                path.pop();
            }
        }
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * (self.nodes.len() - 1));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.n_max as u32).to_le_bytes());
        out.extend_from_slice(&self.last_timestamp.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&self.total_insertions.to_le_bytes());
        out.extend_from_slice(&((self.nodes.len() - 1) as u64).to_le_bytes());
        out.extend_from_slice(&(self.children(ROOT).len() as u32).to_le_bytes());

        let mut stack: Vec<NodeIdx> = self.children(ROOT).iter().rev().map(|&(_, c)| c).collect();
        let mut tokens: Vec<TokenId> = self.children(ROOT).iter().rev().map(|&(t, _)| t).collect();
        while let (Some(node), Some(tok)) = (stack.pop(), tokens.pop()) {
            let n = &self.nodes[node as usize];
            out.extend_from_slice(&tok.0.to_le_bytes());
            out.extend_from_slice(&n.frequency.to_le_bytes());
            out.extend_from_slice(&n.depth.to_le_bytes());
            out.extend_from_slice(&n.recency.to_le_bytes());
            out.extend_from_slice(&(self.children(node).len() as u32).to_le_bytes());
            for &(t, c) in self.children(node).iter().rev() {
                stack.push(c);
                tokens.push(t);
            }
        }
        out
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptSnapshot("bad magic".into()));
        }
        let version = r.u16()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: SNAPSHOT_VERSION });
        }
        let n_max = r.u32()? as usize;
        let config = TrieConfig { n_max };
        config.validate().map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
        let last_ts = r.u64()?;
        let total_insertions = r.u64()?;
        let node_count = r.u64()?;
        let root_children = r.u32()?;
        if node_count > ((bytes.len() - r.pos) / RECORD_LEN) as u64 {
            return Err(Error::CorruptSnapshot("node count exceeds payload".into()));
        }

        let mut trie = PrefixTrie::new(config)?;
        trie.total_insertions = total_insertions;
        trie.last_timestamp = (node_count > 0 || total_insertions > 0).then_some(last_ts);
        trie.nodes.reserve(node_count as usize);

        // (parent, remaining children to read)
        let mut stack: Vec<(NodeIdx, u32)> = vec![(ROOT, root_children)];
        while let Some(top) = stack.last_mut() {
            if top.1 == 0 {
                stack.pop();
                continue;
            }
            top.1 -= 1;
            let parent = top.0;
            let token = TokenId(r.u32()?);
            let frequency = r.u64()?;
            let depth = r.u32()?;
            let recency = r.u64()?;
            let child_count = r.u32()?;
            let parent_node = &trie.nodes[parent as usize];
            if depth != parent_node.depth + 1 || depth as usize > n_max {
                return Err(Error::CorruptSnapshot(format!("node depth {depth} breaks the path structure")));
            }
            if frequency == 0 {
                return Err(Error::CorruptSnapshot("node with zero frequency".into()));
            }
            if trie.children(parent).last().is_some_and(|&(t, _)| t >= token) {
                return Err(Error::CorruptSnapshot("children out of order".into()));
            }
            if trie.nodes.len() as u64 > node_count {
                return Err(Error::CorruptSnapshot("more nodes than declared".into()));
            }
            let idx = trie.nodes.len() as NodeIdx;
            trie.nodes.push(Node { frequency, recency, depth, children: Children::Empty });
            trie.add_child(parent, token, idx);
            stack.push((idx, child_count));
        }
        if (trie.nodes.len() - 1) as u64 != node_count {
            return Err(Error::CorruptSnapshot("fewer nodes than declared".into()));
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptSnapshot("trailing bytes".into()));
        }
        Ok(trie)
    }
}

/// Feature-level equality: same node set with the same statistics.
impl PartialEq for PrefixTrie {
    fn eq(&self, other: &Self) -> bool {
        if self.config != other.config
            || self.total_insertions != other.total_insertions
            || self.nodes.len() != other.nodes.len()
        {
            return false;
        }
        let mut a = Vec::new();
        self.walk(|p, f| a.push((p.to_vec(), f)));
        let mut b = Vec::new();
        other.walk(|p, f| b.push((p.to_vec(), f)));
        a == b
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::CorruptSnapshot(format!("truncated at byte {}", self.pos))),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
