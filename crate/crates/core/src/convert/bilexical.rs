use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{Node, NodeId, Token, UnifiedGraph};

/// Edge label from a head non-terminal to its own pre-terminal.
pub const HEAD: &str = "head";
/// Edge label from a pre-terminal to its terminal.
pub const TERMINAL: &str = "terminal";
/// Root edge to a top node.
pub const TOP: &str = "top";
/// Root edge to a node without heads.
pub const ROOT: &str = "root";
/// Root edge to a token with neither heads nor dependents.
pub const ORPHAN: &str = "orphan";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    /// Head position; 0 is the artificial root.
    pub head: usize,
    pub dependent: usize,
    pub label: String,
}

impl Arc {
    pub fn new(head: usize, dependent: usize, label: impl Into<String>) -> Self {
        Arc {
            head,
            dependent,
            label: label.into(),
        }
    }
}

/// Source-format columns carried through unchanged. Empty strings stand
/// for `_`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawColumns {
    pub lemma: String,
    pub xpos: String,
    pub feats: String,
    pub deps: String,
    pub misc: String,
    pub frame: String,
}

impl RawColumns {
    const KEYS: [&'static str; 6] = ["lemma", "xpos", "feats", "deps", "misc", "frame"];

    fn fields(&self) -> [&String; 6] {
        [
            &self.lemma,
            &self.xpos,
            &self.feats,
            &self.deps,
            &self.misc,
            &self.frame,
        ]
    }

    /// Non-blank columns keyed by name.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        Self::KEYS
            .iter()
            .zip(self.fields())
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Self {
        let get = |k: &str| map.get(k).cloned().unwrap_or_default();
        RawColumns {
            lemma: get("lemma"),
            xpos: get("xpos"),
            feats: get("feats"),
            deps: get("deps"),
            misc: get("misc"),
            frame: get("frame"),
        }
    }
}

/// A dependency graph over tokens: a tree for syntactic dependencies, a
/// DAG with possibly several heads per token and several tops for
/// semantic dependencies.
#[derive(Clone, Debug, PartialEq)]
pub struct BilexicalGraph {
    pub id: String,
    pub tokens: Vec<Token>,
    pub arcs: Vec<Arc>,
    pub tops: BTreeSet<usize>,
    /// Per-token raw columns; may be empty.
    pub columns: Vec<RawColumns>,
}

/// How root edges map back to arcs in [`to_bilexical`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BilexicalStyle {
    /// Every root edge except orphan attachments becomes a head-0 arc.
    Tree,
    /// Root edges labeled `root` only mark headless tokens and are dropped.
    Semantic,
}

impl BilexicalGraph {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        BilexicalGraph {
            id: id.into(),
            tokens,
            arcs: Vec::new(),
            tops: BTreeSet::new(),
            columns: Vec::new(),
        }
    }

    /// Raw columns of the token at `position`, blank if absent.
    pub fn raw(&self, position: usize) -> RawColumns {
        self.columns.get(position - 1).cloned().unwrap_or_default()
    }

    pub fn arc_set(&self) -> BTreeSet<Arc> {
        self.arcs.iter().cloned().collect()
    }

    /// Checks positions and acyclicity; the error names a cycle if there
    /// is one.
    pub fn check(&self) -> Result<()> {
        let n = self.tokens.len();
        for a in &self.arcs {
            if a.dependent == 0 || a.dependent > n || a.head > n {
                return Err(Error::Conversion(format!(
                    "arc {} -> {} out of range in {}",
                    a.head, a.dependent, self.id
                )));
            }
        }
        if let Some(&t) = self.tops.iter().find(|&&t| t == 0 || t > n) {
            return Err(Error::Conversion(format!(
                "top {} out of range in {}",
                t, self.id
            )));
        }
        if let Some(cycle) = self.find_cycle() {
            let names: Vec<String> = cycle.iter().map(|p| p.to_string()).collect();
            return Err(Error::Conversion(format!(
                "cycle {} in {}",
                names.join(" -> "),
                self.id
            )));
        }
        Ok(())
    }

    /// A cycle of head -> dependent arcs, as a list of positions.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        let n = self.tokens.len();
        let mut children = vec![Vec::new(); n + 1];
        for a in &self.arcs {
            if a.head > 0 && a.head <= n && a.dependent <= n {
                children[a.head].push(a.dependent);
            }
        }
        // 0 unvisited, 1 on path, 2 done
        let mut color = vec![0u8; n + 1];
        let mut path = Vec::new();
        fn visit(
            v: usize,
            children: &[Vec<usize>],
            color: &mut [u8],
            path: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            color[v] = 1;
            path.push(v);
            for &c in &children[v] {
                if color[c] == 1 {
                    let start = path.iter().position(|&p| p == c).unwrap();
                    let mut cycle = path[start..].to_vec();
                    cycle.push(c);
                    return Some(cycle);
                }
                if color[c] == 0 {
                    if let Some(cycle) = visit(c, children, color, path) {
                        return Some(cycle);
                    }
                }
            }
            path.pop();
            color[v] = 2;
            None
        }
        (1..=n).find_map(|v| {
            if color[v] == 0 {
                visit(v, &children, &mut color, &mut path)
            } else {
                None
            }
        })
    }
}

/// Converts a dependency graph: every token gets a pre-terminal, every
/// token with dependents a head non-terminal over that pre-terminal, and
/// arcs become edges between these units. A token's primary parent comes
/// from its lowest head (the root counting as 0); its other heads give
/// remote edges.
pub fn from_bilexical(g: &BilexicalGraph) -> Result<UnifiedGraph> {
    g.check()?;
    let n = g.tokens.len();
    let tokens = g
        .tokens
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.extra.extend(g.raw(t.position).to_map());
            t
        })
        .collect();
    let mut out = UnifiedGraph::new(g.id.clone(), tokens);
    let root = out.root();

    let pre: Vec<NodeId> = (1..=n)
        .map(|i| {
            let p = out.add_node(Node::nonterminal());
            out.add_edge(p, NodeId(i), TERMINAL, false)
                .expect("nodes exist");
            p
        })
        .collect();
    let mut heads: BTreeMap<usize, NodeId> = BTreeMap::new();
    for a in g.arcs.iter().filter(|a| a.head > 0) {
        heads.entry(a.head).or_insert_with(|| {
            let h = out.add_node(Node::nonterminal());
            out.add_edge(h, pre[a.head - 1], HEAD, false)
                .expect("nodes exist");
            h
        });
    }
    let unit = |i: usize| heads.get(&i).copied().unwrap_or(pre[i - 1]);

    // Incoming edges per dependent, with the head position for ordering.
    let mut incoming: BTreeMap<usize, Vec<(usize, String)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for a in &g.arcs {
        if seen.insert((a.head, a.dependent, a.label.clone())) {
            incoming
                .entry(a.dependent)
                .or_default()
                .push((a.head, a.label.clone()));
        }
    }
    for &t in &g.tops {
        if seen.insert((0, t, TOP.to_string())) {
            incoming.entry(t).or_default().push((0, TOP.to_string()));
        }
    }
    for d in 1..=n {
        let mut parents = incoming.remove(&d).unwrap_or_default();
        if parents.is_empty() {
            let label = if heads.contains_key(&d) { ROOT } else { ORPHAN };
            parents.push((0, label.to_string()));
        }
        parents.sort();
        for (i, (h, label)) in parents.into_iter().enumerate() {
            let parent = if h == 0 { root } else { heads[&h] };
            out.add_edge(parent, unit(d), label, i > 0)
                .expect("nodes exist");
        }
    }
    Ok(out)
}

/// Inverse of [`from_bilexical`].
pub fn to_bilexical(graph: &UnifiedGraph, style: BilexicalStyle) -> Result<BilexicalGraph> {
    let mut out = BilexicalGraph::new(graph.id.clone(), graph.tokens().to_vec());
    if graph.tokens().iter().any(|t| !t.extra.is_empty()) {
        out.columns = graph
            .tokens()
            .iter()
            .map(|t| RawColumns::from_map(&t.extra))
            .collect();
        for t in &mut out.tokens {
            t.extra.clear();
        }
    }
    let root = graph.root();
    let fail = |node: NodeId, why: &str| {
        Err(Error::Conversion(format!(
            "node {} in {}: {}",
            node, graph.id, why
        )))
    };

    // Token position of each unit: pre-terminals through their terminal
    // child, head non-terminals through their head child.
    let mut position: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (id, node) in graph.nodes() {
        if id == root || node.is_terminal() {
            continue;
        }
        if let Some(e) = graph
            .outgoing(id)
            .find(|e| !e.remote && e.label == TERMINAL && graph.node(e.child).is_terminal())
        {
            position.insert(id, graph.node(e.child).terminal_position.expect("terminal"));
        }
    }
    for (id, node) in graph.nodes() {
        if id == root || node.is_terminal() || position.contains_key(&id) {
            continue;
        }
        let head = graph.outgoing(id).find(|e| !e.remote && e.label == HEAD);
        match head.and_then(|e| position.get(&e.child)) {
            Some(&p) => {
                position.insert(id, p);
            }
            None => return fail(id, "non-terminal without a head child"),
        }
    }

    for e in graph.edges() {
        if e.parent == root {
            let d = match position.get(&e.child) {
                Some(&d) => d,
                None => return fail(e.child, "root child is not a token unit"),
            };
            match (e.label.as_str(), style) {
                (TOP, _) => {
                    out.tops.insert(d);
                }
                (ORPHAN, _) | (ROOT, BilexicalStyle::Semantic) => {}
                _ => out.arcs.push(Arc::new(0, d, e.label.clone())),
            }
            continue;
        }
        if e.label == TERMINAL || (e.label == HEAD && !e.remote) {
            continue;
        }
        match (position.get(&e.parent), position.get(&e.child)) {
            (Some(&h), Some(&d)) => out.arcs.push(Arc::new(h, d, e.label.clone())),
            _ => return fail(e.parent, "edge between non-token units"),
        }
    }
    out.arcs.sort();
    out.arcs.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<Token> {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| Token::new(i + 1, *w))
            .collect()
    }

    #[test]
    fn single_root_arc() {
        let mut g = BilexicalGraph::new("s", toks(&["go"]));
        g.arcs.push(Arc::new(0, 1, "root"));
        let u = from_bilexical(&g).unwrap();
        assert!(u.is_valid(), "{:?}", u.validate());
        // root -> pre-terminal -> terminal: the token has no dependents.
        assert_eq!(u.node_count(), 3);
        assert_eq!(
            to_bilexical(&u, BilexicalStyle::Tree).unwrap().arc_set(),
            g.arc_set()
        );
    }

    #[test]
    fn cycle_is_named() {
        let mut g = BilexicalGraph::new("c", toks(&["a", "b"]));
        g.arcs.push(Arc::new(1, 2, "x"));
        g.arcs.push(Arc::new(2, 1, "y"));
        let err = from_bilexical(&g).unwrap_err().to_string();
        assert!(err.contains("1 -> 2 -> 1"), "{}", err);
    }

    #[test]
    fn second_head_is_remote() {
        let mut g = BilexicalGraph::new("m", toks(&["a", "b", "c"]));
        g.arcs.push(Arc::new(3, 2, "ARG1"));
        g.arcs.push(Arc::new(1, 2, "ARG2"));
        g.tops.insert(1);
        let u = from_bilexical(&g).unwrap();
        assert!(u.is_valid(), "{:?}", u.validate());
        let remote: Vec<_> = u.edges().iter().filter(|e| e.remote).collect();
        assert_eq!(remote.len(), 1);
        assert_eq!(remote[0].label, "ARG1");
        let back = to_bilexical(&u, BilexicalStyle::Semantic).unwrap();
        assert_eq!(back.arc_set(), g.arc_set());
        assert_eq!(back.tops, g.tops);
    }
}
