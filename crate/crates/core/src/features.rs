//! Classifier features of a parser state.
//!
//! A [`FeatureConfig`] is a list of rows, each pairing targets (stack and
//! buffer nodes, their children and parents, edges between stack and
//! buffer tops, past actions) with a string of one-letter codes. Every
//! (target, code) pair is one template, and [`extract`] produces one
//! [`FeatureValue`] per template.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, UnifiedGraph};
use crate::transition::ParserState;

/// Head-terminal label priority. The two bilexical labels come first so
/// converted dependency graphs head on their own token.
pub const DEFAULT_PRIORITY: [&str; 16] = [
    "head", "terminal", "C", "N", "H", "P", "S", "A", "D", "T", "E", "R", "F", "G", "L", "U",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Word,
    Pos,
    Dep,
    IncomingLabel,
    NodeLabel,
    Category,
    SeparatorPunct,
    NeType,
    Shape,
    Prefix,
    Suffix,
    GapType,
    Height,
    SeparatorCount,
    GapLength,
    Parents,
    Children,
    ImplicitChildren,
    RemoteChildren,
    RemoteParents,
    NeIob,
    EdgeExists,
    EdgeLabel,
    EdgeDistance,
    ActionType,
    ActionLabel,
    NodeRatio,
}

impl FeatureKind {
    pub fn is_numeric(self) -> bool {
        use FeatureKind::*;
        matches!(
            self,
            GapType
                | Height
                | SeparatorCount
                | GapLength
                | Parents
                | Children
                | ImplicitChildren
                | RemoteChildren
                | RemoteParents
                | NeIob
                | EdgeExists
                | EdgeDistance
                | NodeRatio
        )
    }

    /// Name of the embedding table a categorical kind looks up. Every
    /// edge-label kind shares one table.
    pub fn table(self) -> Option<&'static str> {
        use FeatureKind::*;
        Some(match self {
            Word => "word",
            Pos => "pos",
            Dep => "dep",
            IncomingLabel | EdgeLabel | ActionLabel => "label",
            NodeLabel => "node_label",
            Category => "category",
            SeparatorPunct => "punct",
            NeType => "ne",
            Shape => "shape",
            Prefix => "prefix",
            Suffix => "suffix",
            ActionType => "action",
            _ => return None,
        })
    }

    fn node_code(c: char) -> Option<Self> {
        use FeatureKind::*;
        Some(match c {
            'w' => Word,
            't' => Pos,
            'd' => Dep,
            'e' => IncomingLabel,
            'n' => NodeLabel,
            'c' => Category,
            'p' => SeparatorPunct,
            'T' => NeType,
            '#' => Shape,
            '^' => Prefix,
            '$' => Suffix,
            'x' => GapType,
            'h' => Height,
            'q' => SeparatorCount,
            'y' => GapLength,
            'P' => Parents,
            'C' => Children,
            'I' => ImplicitChildren,
            'E' => RemoteChildren,
            'M' => RemoteParents,
            'N' => NeIob,
            _ => return None,
        })
    }

    fn edge_code(c: char) -> Option<Self> {
        match c {
            'x' => Some(FeatureKind::EdgeExists),
            'e' => Some(FeatureKind::EdgeLabel),
            'd' => Some(FeatureKind::EdgeDistance),
            _ => None,
        }
    }

    fn action_code(c: char) -> Option<Self> {
        match c {
            'A' => Some(FeatureKind::ActionType),
            'e' => Some(FeatureKind::ActionLabel),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    LeftChild,
    RightChild,
    LeftParent,
    RightParent,
}

/// A stack or buffer position followed by child/parent steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub stack: bool,
    pub index: usize,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Node(NodeRef),
    Edge(NodeRef, NodeRef),
    Action(usize),
    NodeRatio,
}

fn parse_node_ref(s: &str) -> Option<NodeRef> {
    let mut chars = s.chars();
    let stack = match chars.next()? {
        's' => true,
        'b' => false,
        _ => return None,
    };
    let index = chars.next()?.to_digit(10)? as usize;
    let steps = chars
        .map(|c| match c {
            'l' => Some(Step::LeftChild),
            'r' => Some(Step::RightChild),
            'L' => Some(Step::LeftParent),
            'R' => Some(Step::RightParent),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Some(NodeRef {
        stack,
        index,
        steps,
    })
}

impl Target {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad feature target {:?}", s));
        if s == "node_ratio" {
            return Ok(Target::NodeRatio);
        }
        if let Some((a, b)) = s.split_once("->") {
            return Ok(Target::Edge(
                parse_node_ref(a).ok_or_else(bad)?,
                parse_node_ref(b).ok_or_else(bad)?,
            ));
        }
        if let Some(i) = s.strip_prefix('a') {
            return i.parse().map(Target::Action).map_err(|_| bad());
        }
        parse_node_ref(s).map(Target::Node).ok_or_else(bad)
    }
}

/// One feature: a target and what to read off it.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub name: String,
    pub target: Target,
    pub kind: FeatureKind,
}

/// A row of the feature table: several targets sharing a code string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub targets: Vec<String>,
    #[serde(default)]
    pub codes: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub rows: Vec<Row>,
    #[serde(default = "default_priority")]
    pub priority: Vec<String>,
}

fn default_priority() -> Vec<String> {
    DEFAULT_PRIORITY.iter().map(|s| s.to_string()).collect()
}

fn row(targets: &[&str], codes: &str) -> Row {
    Row {
        targets: targets.iter().map(|s| s.to_string()).collect(),
        codes: codes.to_string(),
    }
}

impl Default for FeatureConfig {
    /// The full feature table.
    fn default() -> Self {
        FeatureConfig {
            rows: vec![
                row(&["s0"], "wtdencpT#^$xhqyPCIEMN"),
                row(&["s1"], "wtdencT#^$xhyN"),
                row(&["s2"], "wtdencT#^$xhy"),
                row(&["s3"], "wtdencT#^$xhyN"),
                row(&["b0"], "wtdncT#^$hPCIEMN"),
                row(&["b1", "b2", "b3"], "wtdncT#^$"),
                row(
                    &[
                        "s0l", "s0r", "s1l", "s1r", "s0ll", "s0lr", "s0rl", "s0rr", "s1ll", "s1lr",
                        "s1rl", "s1rr",
                    ],
                    "wenc#^$",
                ),
                row(&["s0L", "s0R", "s1L", "s1R", "b0L", "b0R"], "wen#^$"),
                row(&["s0->s1", "s0->b0"], "xd"),
                row(&["s1->s0", "b0->s0"], "x"),
                row(&["s0->b0", "b0->s0"], "e"),
                row(&["a0", "a1"], "eA"),
                row(&["node_ratio"], ""),
            ],
            priority: default_priority(),
        }
    }
}

impl FeatureConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Drops every template of the given kinds, e.g. node labels for tasks
    /// without them.
    pub fn without(mut self, codes: &str) -> Self {
        for row in &mut self.rows {
            let is_node = row
                .targets
                .first()
                .is_some_and(|t| matches!(Target::parse(t), Ok(Target::Node(_))));
            if is_node {
                row.codes.retain(|c| !codes.contains(c));
            }
        }
        self
    }

    /// Expands rows into templates, in row order, targets before codes.
    pub fn templates(&self) -> Result<Vec<Template>> {
        let mut out = Vec::new();
        for row in &self.rows {
            for t in &row.targets {
                let target = Target::parse(t)?;
                if target == Target::NodeRatio {
                    out.push(Template {
                        name: t.clone(),
                        target,
                        kind: FeatureKind::NodeRatio,
                    });
                    continue;
                }
                for c in row.codes.chars() {
                    let kind = match &target {
                        Target::Node(_) => FeatureKind::node_code(c),
                        Target::Edge(..) => FeatureKind::edge_code(c),
                        Target::Action(_) => FeatureKind::action_code(c),
                        Target::NodeRatio => None,
                    }
                    .ok_or_else(|| Error::Config(format!("code {:?} not valid for {}", c, t)))?;
                    out.push(Template {
                        name: format!("{}.{}", t, c),
                        target: target.clone(),
                        kind,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// The value of one template.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureValue {
    /// Target absent or value undefined.
    None,
    /// A head terminal: token position (where the model reads the encoder
    /// output) and text.
    Word(usize, String),
    Category(String),
    Number(f64),
}

impl FeatureValue {
    pub fn number(&self) -> f64 {
        match self {
            FeatureValue::Number(x) => *x,
            _ => 0.0,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::None => f.write_str("NONE"),
            FeatureValue::Word(_, w) => f.write_str(w),
            FeatureValue::Category(s) => f.write_str(s),
            FeatureValue::Number(x) => write!(f, "{}", x),
        }
    }
}

/// Follows the highest-priority primary child edge down to a terminal;
/// ties go to the child whose yield starts leftmost. `None` for nodes
/// without terminals below them.
pub fn head_terminal(graph: &UnifiedGraph, node: NodeId, priority: &[String]) -> Option<NodeId> {
    let rank = |label: &str| {
        priority
            .iter()
            .position(|p| p == label)
            .unwrap_or(priority.len())
    };
    let mut current = node;
    for _ in 0..graph.node_count() {
        let n = graph.node(current);
        if n.is_terminal() {
            return Some(current);
        }
        if n.implicit {
            return None;
        }
        current = graph
            .primary_children(current)
            .filter_map(|e| Some((rank(&e.label), min_yield(graph, e.child)?, e.child)))
            .min()?
            .2;
    }
    None
}

fn min_yield(graph: &UnifiedGraph, node: NodeId) -> Option<usize> {
    graph.terminal_yield(node).ok()?.first().copied()
}

/// Gap type (0 contiguous, 1 one gap, 2 more) and total gap length of a
/// node's yield.
pub fn gap_features(graph: &UnifiedGraph, node: NodeId) -> (usize, usize) {
    let yield_ = graph.terminal_yield(node).unwrap_or_default();
    gaps_of(&yield_)
}

fn gaps_of(yield_: &BTreeSet<usize>) -> (usize, usize) {
    let mut gaps = 0;
    let mut length = 0;
    let mut prev: Option<usize> = None;
    for &p in yield_ {
        if let Some(q) = prev {
            if p > q + 1 {
                gaps += 1;
                length += p - q - 1;
            }
        }
        prev = Some(p);
    }
    (gaps.min(2), length)
}

/// Ordering key for "leftmost"/"rightmost": start of the yield, then id.
fn order_key(graph: &UnifiedGraph, node: NodeId) -> (usize, usize) {
    if node == graph.root() {
        return (0, 0);
    }
    (min_yield(graph, node).unwrap_or(usize::MAX), node.0)
}

fn step(graph: &UnifiedGraph, node: NodeId, s: Step) -> Option<NodeId> {
    let key = |n: &NodeId| order_key(graph, *n);
    match s {
        Step::LeftChild => graph.outgoing(node).map(|e| e.child).min_by_key(key),
        Step::RightChild => graph.outgoing(node).map(|e| e.child).max_by_key(key),
        Step::LeftParent => graph.incoming(node).map(|e| e.parent).min_by_key(key),
        Step::RightParent => graph.incoming(node).map(|e| e.parent).max_by_key(key),
    }
}

fn resolve(state: &ParserState, r: &NodeRef) -> Option<NodeId> {
    let mut node = if r.stack {
        state.s(r.index)?
    } else {
        state.b(r.index)?
    };
    for &s in &r.steps {
        node = step(state.graph(), node, s)?;
    }
    Some(node)
}

fn category(s: &str) -> FeatureValue {
    if s.is_empty() {
        FeatureValue::None
    } else {
        FeatureValue::Category(s.to_string())
    }
}

/// Punctuation tokens strictly between the end of `s1`'s yield and the
/// start of `s0`'s.
fn separators(state: &ParserState) -> Vec<usize> {
    let graph = state.graph();
    let (Some(s0), Some(s1)) = (state.s(0), state.s(1)) else {
        return Vec::new();
    };
    let (Ok(y0), Ok(y1)) = (graph.terminal_yield(s0), graph.terminal_yield(s1)) else {
        return Vec::new();
    };
    let (Some(&start), Some(&end)) = (y0.first(), y1.last()) else {
        return Vec::new();
    };
    (end + 1..start)
        .filter(|&p| graph.tokens()[p - 1].is_punct)
        .collect()
}

/// Feature extractor bound to a configuration.
#[derive(Clone, Debug)]
pub struct Extractor {
    templates: Vec<Template>,
    priority: Vec<String>,
}

impl Extractor {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        Ok(Extractor {
            templates: config.templates()?,
            priority: config.priority.clone(),
        })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn head_terminal(&self, graph: &UnifiedGraph, node: NodeId) -> Option<NodeId> {
        head_terminal(graph, node, &self.priority)
    }

    /// One value per template.
    pub fn extract(&self, state: &ParserState) -> Vec<FeatureValue> {
        self.templates
            .iter()
            .map(|t| self.value(state, t))
            .collect()
    }

    fn value(&self, state: &ParserState, t: &Template) -> FeatureValue {
        let graph = state.graph();
        match &t.target {
            Target::NodeRatio => {
                let n = graph.len_tokens().max(1) as f64;
                let nonterminals = graph.node_count() - graph.len_tokens() - 1;
                FeatureValue::Number(nonterminals as f64 / n)
            }
            Target::Action(i) => {
                let history = state.history();
                let Some(a) = history.len().checked_sub(i + 1).map(|k| &history[k]) else {
                    return FeatureValue::None;
                };
                match t.kind {
                    FeatureKind::ActionType => FeatureValue::Category(a.kind.name().to_string()),
                    _ => a.label.as_deref().map_or(FeatureValue::None, category),
                }
            }
            Target::Edge(a, b) => {
                let (Some(a), Some(b)) = (resolve(state, a), resolve(state, b)) else {
                    return FeatureValue::None;
                };
                let edge = graph.outgoing(a).find(|e| e.child == b);
                match t.kind {
                    FeatureKind::EdgeExists => FeatureValue::Number(edge.is_some() as u8 as f64),
                    FeatureKind::EdgeLabel => {
                        edge.map_or(FeatureValue::None, |e| category(&e.label))
                    }
                    _ => {
                        let pos = |n| {
                            self.head_terminal(graph, n)
                                .and_then(|h| graph.node(h).terminal_position)
                        };
                        match (pos(a), pos(b)) {
                            (Some(x), Some(y)) => FeatureValue::Number(x.abs_diff(y) as f64),
                            _ => FeatureValue::None,
                        }
                    }
                }
            }
            Target::Node(r) => match resolve(state, r) {
                Some(node) => self.node_value(state, node, t.kind),
                None => FeatureValue::None,
            },
        }
    }

    fn node_value(&self, state: &ParserState, node: NodeId, kind: FeatureKind) -> FeatureValue {
        use FeatureKind::*;
        let graph = state.graph();
        let n = graph.node(node);
        let count = |k: usize| FeatureValue::Number(k as f64);
        let token = || {
            self.head_terminal(graph, node)
                .and_then(|h| graph.token_of(h))
        };
        match kind {
            Word => token().map_or(FeatureValue::None, |t| {
                FeatureValue::Word(t.position, t.text.clone())
            }),
            Pos => token().map_or(FeatureValue::None, |t| category(&t.pos_tag)),
            Dep => token().map_or(FeatureValue::None, |t| category(&t.dep_rel)),
            NeType => token().map_or(FeatureValue::None, |t| category(&t.ne_type)),
            Shape => token().map_or(FeatureValue::None, |t| category(&t.shape)),
            Prefix => token().map_or(FeatureValue::None, |t| category(&t.prefix())),
            Suffix => token().map_or(FeatureValue::None, |t| category(&t.suffix())),
            NeIob => token().map_or(FeatureValue::None, |t| {
                FeatureValue::Number(t.ne_iob.value())
            }),
            IncomingLabel => graph
                .incoming(node)
                .next()
                .map_or(FeatureValue::None, |e| category(&e.label)),
            NodeLabel => n.label.as_deref().map_or(FeatureValue::None, category),
            Category => n.category.as_deref().map_or(FeatureValue::None, category),
            SeparatorPunct => {
                let seps = separators(state);
                if seps.is_empty() {
                    FeatureValue::None
                } else {
                    let text: Vec<&str> = seps
                        .iter()
                        .map(|&p| graph.tokens()[p - 1].text.as_str())
                        .collect();
                    FeatureValue::Category(text.join(" "))
                }
            }
            SeparatorCount => count(separators(state).len()),
            GapType => count(gap_features(graph, node).0),
            GapLength => count(gap_features(graph, node).1),
            Height => count(graph.node_height(node)),
            Parents => count(graph.incoming(node).count()),
            Children => count(graph.outgoing(node).count()),
            ImplicitChildren => count(
                graph
                    .outgoing(node)
                    .filter(|e| graph.node(e.child).implicit)
                    .count(),
            ),
            RemoteChildren => count(graph.outgoing(node).filter(|e| e.remote).count()),
            RemoteParents => count(graph.incoming(node).filter(|e| e.remote).count()),
            EdgeExists | EdgeLabel | EdgeDistance | ActionType | ActionLabel | NodeRatio => {
                FeatureValue::None
            }
        }
    }
}
