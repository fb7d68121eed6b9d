//! The unified DAG: a rooted graph whose terminals are the tokens of a
//! sentence, with labeled edges split into a primary tree and remote
//! (reentrant) edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node inside a [`UnifiedGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Index of an edge inside a [`UnifiedGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

/// Named-entity IOB indicator of a token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeIob {
    #[default]
    O,
    B,
    I,
}

impl NeIob {
    /// Numeric value used as a classifier feature.
    pub fn value(self) -> f64 {
        match self {
            NeIob::O => 0.0,
            NeIob::B => 1.0,
            NeIob::I => 2.0,
        }
    }
}

/// A token with the input annotations consumed by the parser.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Token {
    /// 1-based position in the sentence.
    pub position: usize,
    pub text: String,
    pub pos_tag: String,
    pub dep_rel: String,
    pub ne_iob: NeIob,
    pub ne_type: String,
    pub shape: String,
    pub is_punct: bool,
    /// Source-format columns the parser does not read, kept for lossless
    /// round trips.
    pub extra: BTreeMap<String, String>,
}

impl Token {
    /// Creates a token with only its text filled in; the shape and
    /// punctuation flag are derived from the text.
    pub fn new(position: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        Token {
            position,
            shape: word_shape(&text),
            is_punct: !text.is_empty()
                && text
                    .chars()
                    .all(|c| c.is_ascii_punctuation() || is_unicode_punct(c)),
            text,
            pos_tag: String::new(),
            dep_rel: String::new(),
            ne_iob: NeIob::O,
            ne_type: String::new(),
            extra: BTreeMap::new(),
        }
    }

    /// One-character prefix.
    pub fn prefix(&self) -> String {
        self.text.chars().take(1).collect()
    }

    /// Three-character suffix.
    pub fn suffix(&self) -> String {
        let chars: Vec<char> = self.text.chars().collect();
        let start = chars.len().saturating_sub(3);
        chars[start..].iter().collect()
    }
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '–' | '—' | '“' | '”' | '‘' | '’' | '…' | '«' | '»' | '¿' | '¡'
    )
}

/// Orthographic shape of a word: upper-case letters map to `X`, lower-case
/// to `x`, digits to `d`; runs longer than four characters of one class are
/// truncated, so "Paris" becomes "Xxxxx" and "1984" becomes "dddd".
pub fn word_shape(text: &str) -> String {
    let mut shape = String::new();
    let mut last = None;
    let mut run = 0;
    for c in text.chars() {
        let class = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if Some(class) == last {
            run += 1;
        } else {
            run = 1;
            last = Some(class);
        }
        if run <= 4 {
            shape.push(class);
        }
    }
    shape
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    Terminal,
    Nonterminal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    /// Present exactly for terminals.
    pub terminal_position: Option<usize>,
    /// Concept label; metadata only, never predicted.
    pub label: Option<String>,
    /// Concept category; metadata only, never predicted.
    pub category: Option<String>,
    pub implicit: bool,
}

impl Node {
    pub fn nonterminal() -> Self {
        Node {
            kind: NodeKind::Nonterminal,
            terminal_position: None,
            label: None,
            category: None,
            implicit: false,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.kind == NodeKind::Terminal
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    pub label: String,
    pub remote: bool,
}

/// A rooted, labeled DAG over the tokens of one sentence.
///
/// Construction is append-only: nodes and edges can be added but never
/// removed, which is what the transition system needs. Converters that
/// drop material build a fresh graph.
#[derive(Clone, Debug)]
pub struct UnifiedGraph {
    pub id: String,
    tokens: Vec<Token>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root: NodeId,
    outgoing: Vec<Vec<EdgeId>>,
    incoming: Vec<Vec<EdgeId>>,
    terminals: Vec<NodeId>,
}

impl UnifiedGraph {
    /// Creates a graph holding a root and one terminal per token. The root
    /// is `NodeId(0)` and the terminal for position `i` is `NodeId(i)`.
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        let mut graph = UnifiedGraph {
            id: id.into(),
            tokens: Vec::new(),
            nodes: Vec::new(),
            edges: Vec::new(),
            root: NodeId(0),
            outgoing: Vec::new(),
            incoming: Vec::new(),
            terminals: Vec::new(),
        };
        graph.push_node(Node {
            kind: NodeKind::Root,
            terminal_position: None,
            label: None,
            category: None,
            implicit: false,
        });
        for (i, mut token) in tokens.into_iter().enumerate() {
            token.position = i + 1;
            graph.push_node(Node {
                kind: NodeKind::Terminal,
                terminal_position: Some(i + 1),
                label: None,
                category: None,
                implicit: false,
            });
            graph.tokens.push(token);
        }
        graph
    }

    /// Builds a graph from raw parts without checking any invariant; use
    /// [`UnifiedGraph::validate`] afterwards.
    pub fn from_parts(
        id: impl Into<String>,
        tokens: Vec<Token>,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        root: NodeId,
    ) -> Result<Self> {
        let mut graph = UnifiedGraph {
            id: id.into(),
            tokens,
            nodes: Vec::new(),
            edges: Vec::new(),
            root,
            outgoing: Vec::new(),
            incoming: Vec::new(),
            terminals: Vec::new(),
        };
        for node in nodes {
            graph.push_node(node);
        }
        if root.0 >= graph.nodes.len() {
            return Err(Error::UnknownNode(root));
        }
        for edge in edges {
            graph.add_edge(edge.parent, edge.child, edge.label, edge.remote)?;
        }
        Ok(graph)
    }

    fn push_node(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len());
        if let Some(pos) = node.terminal_position {
            if self.terminals.len() <= pos {
                self.terminals.resize(pos + 1, NodeId(usize::MAX));
            }
            if self.terminals[pos].0 == usize::MAX {
                self.terminals[pos] = id;
            }
        }
        self.nodes.push(node);
        self.outgoing.push(Vec::new());
        self.incoming.push(Vec::new());
        id
    }

    /// Adds a node and returns its id.
    pub fn add_node(&mut self, node: Node) -> NodeId {
        self.push_node(node)
    }

    /// Adds an edge. Only endpoint existence is checked here.
    pub fn add_edge(
        &mut self,
        parent: NodeId,
        child: NodeId,
        label: impl Into<String>,
        remote: bool,
    ) -> Result<EdgeId> {
        for node in [parent, child] {
            if node.0 >= self.nodes.len() {
                return Err(Error::UnknownNode(node));
            }
        }
        let id = EdgeId(self.edges.len());
        self.edges.push(Edge {
            parent,
            child,
            label: label.into(),
            remote,
        });
        self.outgoing[parent.0].push(id);
        self.incoming[child.0].push(id);
        Ok(id)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = (NodeId, &Node)> + '_ {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    /// Terminal node anchored at a 1-based token position.
    pub fn terminal(&self, position: usize) -> Option<NodeId> {
        self.terminals
            .get(position)
            .copied()
            .filter(|id| id.0 != usize::MAX)
    }

    /// Token of a terminal node.
    pub fn token_of(&self, id: NodeId) -> Option<&Token> {
        self.nodes[id.0]
            .terminal_position
            .and_then(|p| self.tokens.get(p.wrapping_sub(1)))
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.outgoing[id.0].iter().map(move |e| &self.edges[e.0])
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.incoming[id.0].iter().map(move |e| &self.edges[e.0])
    }

    pub fn primary_children(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.outgoing(id).filter(|e| !e.remote)
    }

    /// The primary incoming edge, if any (the first one if several).
    pub fn primary_parent_edge(&self, id: NodeId) -> Option<&Edge> {
        self.incoming(id).find(|e| !e.remote)
    }

    pub fn primary_parent(&self, id: NodeId) -> Option<NodeId> {
        self.primary_parent_edge(id).map(|e| e.parent)
    }

    pub fn has_edge(&self, parent: NodeId, child: NodeId, label: &str, remote: bool) -> bool {
        self.outgoing(parent)
            .any(|e| e.child == child && e.label == label && e.remote == remote)
    }

    /// True if `to` can be reached from `from` following edges of either
    /// kind (a node reaches itself).
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if std::mem::replace(&mut seen[n.0], true) {
                continue;
            }
            stack.extend(self.outgoing(n).map(|e| e.child));
        }
        false
    }

    /// Positions of the terminals reachable over primary edges.
    pub fn terminal_yield(&self, node: NodeId) -> Result<BTreeSet<usize>> {
        if !self.contains(node) {
            return Err(Error::UnknownNode(node));
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![node];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(p) = self.nodes[n.0].terminal_position {
                out.insert(p);
            }
            stack.extend(self.primary_children(n).map(|e| e.child));
        }
        Ok(out)
    }

    /// 0 for terminals (and childless nodes), otherwise one more than the
    /// highest primary child.
    pub fn node_height(&self, node: NodeId) -> usize {
        let mut memo = HashMap::new();
        self.height_memo(node, &mut memo, 0)
    }

    fn height_memo(&self, node: NodeId, memo: &mut HashMap<NodeId, usize>, depth: usize) -> usize {
        if let Some(h) = memo.get(&node) {
            return *h;
        }
        // Primary cycles only occur in invalid graphs; cap the recursion.
        if depth > self.nodes.len() {
            return 0;
        }
        let h = self
            .primary_children(node)
            .map(|e| 1 + self.height_memo(e.child, memo, depth + 1))
            .max()
            .unwrap_or(0);
        memo.insert(node, h);
        h
    }

    /// Checks every structural invariant, returning all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.tokens.len();

        let roots: Vec<NodeId> = self
            .nodes()
            .filter(|(_, node)| node.kind == NodeKind::Root)
            .map(|(id, _)| id)
            .collect();
        if roots.len() != 1 || roots[0] != self.root {
            out.push(Violation::RootCount { roots });
        }
        if self.contains(self.root) && self.incoming(self.root).next().is_some() {
            out.push(Violation::RootHasParent);
        }

        let mut seen_edges = HashSet::new();
        for edge in &self.edges {
            if edge.parent == edge.child {
                out.push(Violation::SelfLoop { node: edge.parent });
            }
            if !seen_edges.insert((edge.parent, edge.child, edge.label.as_str(), edge.remote)) {
                out.push(Violation::DuplicateEdge {
                    parent: edge.parent,
                    child: edge.child,
                    label: edge.label.clone(),
                });
            }
        }

        for (id, node) in self.nodes() {
            if id == self.root {
                continue;
            }
            let primary = self.incoming(id).filter(|e| !e.remote).count();
            if primary != 1 {
                out.push(Violation::PrimaryParents {
                    node: id,
                    count: primary,
                });
            }
            match node.kind {
                NodeKind::Terminal => {
                    match node.terminal_position {
                        Some(p) if (1..=n).contains(&p) => {}
                        other => out.push(Violation::TerminalPosition {
                            node: id,
                            position: other,
                        }),
                    }
                    if self.outgoing(id).next().is_some() {
                        out.push(Violation::TerminalHasChildren { node: id });
                    }
                }
                _ => {
                    if node.terminal_position.is_some() {
                        out.push(Violation::TerminalPosition {
                            node: id,
                            position: node.terminal_position,
                        });
                    }
                }
            }
            if node.implicit {
                let has_terminal = self
                    .terminal_yield(id)
                    .map(|y| !y.is_empty())
                    .unwrap_or(false);
                if has_terminal {
                    out.push(Violation::ImplicitWithTerminals { node: id });
                }
            }
        }

        let mut positions: Vec<usize> = self
            .nodes
            .iter()
            .filter(|node| node.kind == NodeKind::Terminal)
            .filter_map(|node| node.terminal_position)
            .collect();
        positions.sort_unstable();
        if positions != (1..=n).collect::<Vec<_>>() {
            out.push(Violation::TerminalCoverage {
                expected: n,
                found: positions,
            });
        }

        if let Some(node) = self.find_cycle() {
            out.push(Violation::Cycle { node });
        }
        out
    }

    /// Returns a node on a directed cycle, if one exists.
    pub fn find_cycle(&self) -> Option<NodeId> {
        // 0 = unvisited, 1 = on the current path, 2 = done
        let mut color = vec![0u8; self.nodes.len()];
        for start in 0..self.nodes.len() {
            if color[start] != 0 {
                continue;
            }
            let mut stack: Vec<(NodeId, usize)> = vec![(NodeId(start), 0)];
            color[start] = 1;
            while let Some((node, next)) = stack.last().copied() {
                let out = &self.outgoing[node.0];
                if next < out.len() {
                    stack.last_mut().unwrap().1 += 1;
                    let child = self.edges[out[next].0].child;
                    match color[child.0] {
                        0 => {
                            color[child.0] = 1;
                            stack.push((child, 0));
                        }
                        1 => return Some(child),
                        _ => {}
                    }
                } else {
                    color[node.0] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Serializes into one JSON line (without the trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&GraphRecord::from(self)).expect("graph records always serialize")
    }

    /// Parses one JSON line.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let record: GraphRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("column {}: {}", e.column(), e),
        })?;
        record.into_graph()
    }

    /// Parses a JSON-lines corpus; blank lines are skipped.
    pub fn read_jsonl(text: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(Self::from_json_line(line).map_err(|e| e.at_line(i + 1))?);
        }
        Ok(out)
    }

    pub fn write_jsonl(graphs: &[UnifiedGraph]) -> String {
        let mut out = String::new();
        for g in graphs {
            out.push_str(&g.to_json_line());
            out.push('\n');
        }
        out
    }

    /// Canonical description of the graph that ignores node ids: every
    /// node is described by its primary subtree, and remote edges by the
    /// descriptions of their endpoints. Two graphs over the same tokens
    /// are equal up to node renaming iff their signatures are equal.
    pub fn signature(&self) -> GraphSignature {
        let mut memo = HashMap::new();
        let names: Vec<String> = (0..self.nodes.len())
            .map(|i| self.subtree_signature(NodeId(i), &mut memo))
            .collect();
        let mut edges: Vec<(String, String, String, bool)> = self
            .edges
            .iter()
            .map(|e| {
                (
                    names[e.parent.0].clone(),
                    names[e.child.0].clone(),
                    e.label.clone(),
                    e.remote,
                )
            })
            .collect();
        edges.sort();
        let mut nodes: Vec<String> = names
            .iter()
            .zip(&self.nodes)
            .map(|(name, node)| {
                format!(
                    "{}|{:?}|{:?}|{:?}|{}",
                    name, node.kind, node.label, node.category, node.implicit
                )
            })
            .collect();
        nodes.sort();
        GraphSignature {
            tokens: self.tokens.clone(),
            nodes,
            edges,
        }
    }

    fn subtree_signature(&self, node: NodeId, memo: &mut HashMap<NodeId, String>) -> String {
        if let Some(s) = memo.get(&node) {
            return s.clone();
        }
        let n = &self.nodes[node.0];
        let s = if let Some(p) = n.terminal_position {
            format!("t{}", p)
        } else {
            let mut children: Vec<String> = self
                .primary_children(node)
                .map(|e| format!("{}:{}", e.label, self.subtree_signature(e.child, memo)))
                .collect();
            children.sort();
            let tag = if node == self.root { "R" } else { "N" };
            format!("{}({})", tag, children.join(","))
        };
        memo.insert(node, s.clone());
        s
    }
}

/// Id-independent form of a graph; see [`UnifiedGraph::signature`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSignature {
    pub tokens: Vec<Token>,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String, String, bool)>,
}

impl GraphSignature {
    /// Drops node metadata (labels, categories, implicit flags), keeping
    /// only what a parser produces.
    pub fn structure(&self) -> GraphSignature {
        let mut nodes: Vec<String> = self
            .nodes
            .iter()
            .map(|n| n.split('|').take(2).collect::<Vec<_>>().join("|"))
            .collect();
        nodes.sort();
        GraphSignature {
            tokens: self.tokens.clone(),
            nodes,
            edges: self.edges.clone(),
        }
    }
}

/// A broken invariant, naming the offending node or edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    RootCount {
        roots: Vec<NodeId>,
    },
    RootHasParent,
    PrimaryParents {
        node: NodeId,
        count: usize,
    },
    Cycle {
        node: NodeId,
    },
    SelfLoop {
        node: NodeId,
    },
    DuplicateEdge {
        parent: NodeId,
        child: NodeId,
        label: String,
    },
    TerminalPosition {
        node: NodeId,
        position: Option<usize>,
    },
    TerminalHasChildren {
        node: NodeId,
    },
    TerminalCoverage {
        expected: usize,
        found: Vec<usize>,
    },
    ImplicitWithTerminals {
        node: NodeId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootCount { roots } => write!(f, "single root: found roots {:?}", roots),
            Violation::RootHasParent => write!(f, "root without parent: root has incoming edges"),
            Violation::PrimaryParents { node, count } => {
                write!(
                    f,
                    "single primary parent: node {} has {} primary parents",
                    node, count
                )
            }
            Violation::Cycle { node } => write!(f, "acyclicity: node {} lies on a cycle", node),
            Violation::SelfLoop { node } => write!(f, "no self-loops: node {}", node),
            Violation::DuplicateEdge {
                parent,
                child,
                label,
            } => {
                write!(
                    f,
                    "unique edges: {} -{}-> {} repeated",
                    parent, label, child
                )
            }
            Violation::TerminalPosition { node, position } => {
                write!(
                    f,
                    "terminal anchoring: node {} has position {:?}",
                    node, position
                )
            }
            Violation::TerminalHasChildren { node } => {
                write!(f, "childless terminals: node {} has children", node)
            }
            Violation::TerminalCoverage { expected, found } => write!(
                f,
                "terminal coverage: expected positions 1..={}, found {:?}",
                expected, found
            ),
            Violation::ImplicitWithTerminals { node } => {
                write!(f, "implicit nodes: node {} has terminal descendants", node)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TokenRecord {
    position: usize,
    text: String,
    #[serde(default)]
    pos: String,
    #[serde(default)]
    dep: String,
    #[serde(default)]
    ne_iob: NeIob,
    #[serde(default)]
    ne_type: String,
    #[serde(default)]
    shape: String,
    #[serde(default)]
    punct: Option<bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RecordId {
    Num(u64),
    Str(String),
}

impl RecordId {
    fn key(&self) -> String {
        match self {
            RecordId::Num(n) => n.to_string(),
            RecordId::Str(s) => s.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: RecordId,
    kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal_position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default)]
    implicit: bool,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    parent: RecordId,
    child: RecordId,
    label: String,
    #[serde(default)]
    remote: bool,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    id: String,
    tokens: Vec<TokenRecord>,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    root: RecordId,
}

impl From<&UnifiedGraph> for GraphRecord {
    fn from(g: &UnifiedGraph) -> Self {
        GraphRecord {
            id: g.id.clone(),
            tokens: g
                .tokens
                .iter()
                .map(|t| TokenRecord {
                    position: t.position,
                    text: t.text.clone(),
                    pos: t.pos_tag.clone(),
                    dep: t.dep_rel.clone(),
                    ne_iob: t.ne_iob,
                    ne_type: t.ne_type.clone(),
                    shape: t.shape.clone(),
                    punct: Some(t.is_punct),
                    extra: t.extra.clone(),
                })
                .collect(),
            nodes: g
                .nodes()
                .map(|(id, n)| NodeRecord {
                    id: RecordId::Str(id.0.to_string()),
                    kind: n.kind,
                    terminal_position: n.terminal_position,
                    label: n.label.clone(),
                    category: n.category.clone(),
                    implicit: n.implicit,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    parent: RecordId::Str(e.parent.0.to_string()),
                    child: RecordId::Str(e.child.0.to_string()),
                    label: e.label.clone(),
                    remote: e.remote,
                })
                .collect(),
            root: RecordId::Str(g.root.0.to_string()),
        }
    }
}

impl GraphRecord {
    fn into_graph(self) -> Result<UnifiedGraph> {
        let tokens: Vec<Token> = self
            .tokens
            .into_iter()
            .map(|t| {
                // Shape and punctuation are derived from the text when absent.
                let derived = Token::new(t.position, t.text.clone());
                Token {
                    position: t.position,
                    text: t.text,
                    pos_tag: t.pos,
                    dep_rel: t.dep,
                    ne_iob: t.ne_iob,
                    ne_type: t.ne_type,
                    shape: if t.shape.is_empty() {
                        derived.shape
                    } else {
                        t.shape
                    },
                    is_punct: t.punct.unwrap_or(derived.is_punct),
                    extra: t.extra,
                }
            })
            .collect();
        let mut ids = HashMap::new();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.into_iter().enumerate() {
            if ids.insert(n.id.key(), NodeId(i)).is_some() {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("field nodes[{}].id: duplicate id {:?}", i, n.id.key()),
                });
            }
            nodes.push(Node {
                kind: n.kind,
                terminal_position: n.terminal_position,
                label: n.label,
                category: n.category,
                implicit: n.implicit,
            });
        }
        let lookup = |id: &RecordId, field: String| {
            ids.get(&id.key()).copied().ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("field {}: unknown node id {:?}", field, id.key()),
            })
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            edges.push(Edge {
                parent: lookup(&e.parent, format!("edges[{}].parent", i))?,
                child: lookup(&e.child, format!("edges[{}].child", i))?,
                label: e.label.clone(),
                remote: e.remote,
            });
        }
        let root = lookup(&self.root, "root".to_string())?;
        UnifiedGraph::from_parts(self.id, tokens, nodes, edges, root)
    }
}
