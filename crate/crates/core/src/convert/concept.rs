use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::bilexical::{ORPHAN, TERMINAL};
use crate::error::{Error, Result};
use crate::graph::{Node, NodeId, Token, UnifiedGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub constant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub source: String,
    pub target: String,
    pub label: String,
}

/// A rooted concept graph whose concepts are aligned to token positions.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredConceptGraph {
    pub id: String,
    pub tokens: Vec<Token>,
    pub concepts: Vec<Concept>,
    pub relations: Vec<Relation>,
    pub alignments: BTreeMap<String, BTreeSet<usize>>,
    pub root: String,
}

#[derive(Deserialize)]
struct Record {
    id: String,
    tokens: Vec<serde_json::Value>,
    concepts: Vec<Concept>,
    #[serde(default)]
    relations: Vec<Relation>,
    #[serde(default)]
    alignments: BTreeMap<String, Vec<usize>>,
    root: String,
}

impl AnchoredConceptGraph {
    /// Reads one record: the unified token fields plus `concepts`,
    /// `relations`, `alignments` and `root` (a concept id).
    pub fn from_json_line(line: &str) -> Result<Self> {
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        // Reuse the unified reader for tokens.
        let shell = serde_json::json!({
            "id": record.id,
            "tokens": record.tokens,
            "nodes": [{"id": "0", "kind": "root"}],
            "edges": [],
            "root": "0",
        });
        let tokens = UnifiedGraph::from_json_line(&shell.to_string())?
            .tokens()
            .to_vec();
        Ok(AnchoredConceptGraph {
            id: record.id,
            tokens,
            concepts: record.concepts,
            relations: record.relations,
            alignments: record
                .alignments
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            root: record.root,
        })
    }

    pub fn read_jsonl(text: &str) -> Result<Vec<Self>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| Self::from_json_line(l).map_err(|e| e.at_line(i + 1)))
            .collect()
    }
}

/// Numbered `op` relations lose their number.
pub fn normalize_relation(label: &str) -> &str {
    match label.strip_prefix("op") {
        Some(rest) if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) => "op",
        _ => label,
    }
}

/// Converts a concept graph. Concepts become non-terminals keeping their
/// label and category as metadata, and get `terminal` edges to their
/// aligned tokens. Name subgraphs collapse into one node over the name
/// tokens. Concepts without alignments anywhere below them are dropped.
/// The root concept becomes the root; a breadth-first traversal picks
/// primary edges, reentrancies become remote, and remote edges that
/// would close a cycle are dropped with a warning.
pub fn from_concept_graph(g: &AnchoredConceptGraph) -> Result<UnifiedGraph> {
    let n = g.tokens.len();
    let index: HashMap<&str, usize> = g
        .concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let fail = |why: String| Err(Error::Conversion(format!("{}: {}", g.id, why)));
    let root = match index.get(g.root.as_str()) {
        Some(&r) => r,
        None => return fail(format!("root concept {:?} not found", g.root)),
    };
    for r in &g.relations {
        for end in [&r.source, &r.target] {
            if !index.contains_key(end.as_str()) {
                return fail(format!("relation endpoint {:?} not found", end));
            }
        }
    }
    let mut aligned: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.concepts.len()];
    for (id, positions) in &g.alignments {
        let c = match index.get(id.as_str()) {
            Some(&c) => c,
            None => return fail(format!("alignment for unknown concept {:?}", id)),
        };
        if let Some(&p) = positions.iter().find(|&&p| p == 0 || p > n) {
            return fail(format!("alignment {} out of range", p));
        }
        aligned[c].extend(positions.iter().copied());
    }

    let mut children: Vec<Vec<(usize, String)>> = vec![Vec::new(); g.concepts.len()];
    for r in &g.relations {
        let (s, t) = (index[r.source.as_str()], index[r.target.as_str()]);
        let label = normalize_relation(&r.label).to_string();
        if s != t && !children[s].contains(&(t, label.clone())) {
            children[s].push((t, label));
        }
    }

    // Collapse names: a `name` concept absorbs the alignments of its op
    // children, which disappear.
    let mut category: Vec<&str> = g
        .concepts
        .iter()
        .map(|c| if c.constant { "constant" } else { "concept" })
        .collect();
    let mut removed = vec![false; g.concepts.len()];
    for c in 0..g.concepts.len() {
        let is_name_target = g
            .relations
            .iter()
            .any(|r| r.label == "name" && index[r.target.as_str()] == c);
        if g.concepts[c].label != "name" || !is_name_target {
            continue;
        }
        category[c] = "name";
        let parts: Vec<usize> = children[c]
            .iter()
            .filter(|(t, l)| l == "op" && g.concepts[*t].constant)
            .map(|(t, _)| *t)
            .collect();
        for t in parts {
            let positions = aligned[t].clone();
            aligned[c].extend(positions);
            removed[t] = true;
        }
        children[c].retain(|(t, _)| !removed[*t]);
    }

    // Concepts with alignments somewhere at or below them.
    let mut anchored = vec![false; g.concepts.len()];
    fn mark(
        c: usize,
        children: &[Vec<(usize, String)>],
        aligned: &[BTreeSet<usize>],
        removed: &[bool],
        memo: &mut [Option<bool>],
    ) -> bool {
        if let Some(v) = memo[c] {
            return v;
        }
        memo[c] = Some(false);
        let mut v = !aligned[c].is_empty();
        for (t, _) in &children[c] {
            if !removed[*t] && mark(*t, children, aligned, removed, memo) {
                v = true;
            }
        }
        memo[c] = Some(v);
        v
    }
    let mut memo = vec![None; g.concepts.len()];
    for (c, flag) in anchored.iter_mut().enumerate() {
        *flag = !removed[c] && mark(c, &children, &aligned, &removed, &mut memo);
    }
    let keep = |c: usize| c == root || (!removed[c] && anchored[c]);

    let mut out = UnifiedGraph::new(g.id.clone(), g.tokens.clone());
    let mut node_of: HashMap<usize, NodeId> = HashMap::new();
    node_of.insert(root, out.root());
    let describe = |node: &mut Node, c: usize| {
        node.label = Some(g.concepts[c].label.clone());
        node.category = Some(category[c].to_string());
    };
    describe(out.node_mut(NodeId(0)), root);

    // Breadth-first primary tree.
    let mut order = vec![root];
    let mut queue = VecDeque::from([root]);
    let mut deferred = Vec::new();
    while let Some(c) = queue.pop_front() {
        for (t, label) in &children[c] {
            if !keep(*t) {
                continue;
            }
            if node_of.contains_key(t) {
                deferred.push((c, *t, label.clone()));
                continue;
            }
            let mut node = Node::nonterminal();
            describe(&mut node, *t);
            let id = out.add_node(node);
            node_of.insert(*t, id);
            out.add_edge(node_of[&c], id, label.clone(), false)
                .expect("nodes exist");
            order.push(*t);
            queue.push_back(*t);
        }
    }
    // Anchored concepts the traversal never reached hang off the root.
    for (c, outgoing) in children.iter().enumerate().take(g.concepts.len()) {
        if keep(c) && !node_of.contains_key(&c) {
            let mut node = Node::nonterminal();
            describe(&mut node, c);
            let id = out.add_node(node);
            node_of.insert(c, id);
            out.add_edge(out.root(), id, ORPHAN, false)
                .expect("nodes exist");
            order.push(c);
            for (t, label) in outgoing {
                if keep(*t) {
                    deferred.push((c, *t, label.clone()));
                }
            }
        }
    }
    for (s, t, label) in deferred {
        let (p, c) = match (node_of.get(&s), node_of.get(&t)) {
            (Some(&p), Some(&c)) => (p, c),
            _ => continue,
        };
        if out.has_edge(p, c, &label, false) || out.has_edge(p, c, &label, true) {
            continue;
        }
        if p == c || out.reaches(c, p) {
            log::warn!(
                "{}: dropping {} -{}-> {} to keep the graph acyclic",
                g.id,
                g.concepts[s].id,
                label,
                g.concepts[t].id
            );
            continue;
        }
        out.add_edge(p, c, label, true).expect("nodes exist");
    }

    // Alignments: the first concept in traversal order owns the token.
    let mut owned = vec![false; n + 1];
    for c in order {
        let parent = node_of[&c];
        for &p in &aligned[c] {
            out.add_edge(parent, NodeId(p), TERMINAL, owned[p])
                .expect("nodes exist");
            owned[p] = true;
        }
    }
    for p in (1..=n).filter(|&p| !owned[p]) {
        out.add_edge(out.root(), NodeId(p), ORPHAN, false)
            .expect("nodes exist");
    }
    Ok(out)
}
