use std::collections::HashMap;

use crate::error::Result;
use crate::graph::{Edge, NodeId, UnifiedGraph};

/// Labels of inter-scene linkage edges.
pub const LINKAGE_LABELS: [&str; 4] = ["LR", "LA", "LN", "LKG"];

pub fn is_linkage(label: &str) -> bool {
    LINKAGE_LABELS.contains(&label)
}

/// Drops linkage edges, then the non-terminals left without children
/// (the linkage nodes) together with their incoming edges. Everything
/// else is kept as is.
pub fn from_ucca(g: &UnifiedGraph) -> Result<UnifiedGraph> {
    let mut keep_edge: Vec<bool> = g.edges().iter().map(|e| !is_linkage(&e.label)).collect();
    let mut keep_node = vec![true; g.node_count()];
    loop {
        let mut changed = false;
        for (id, node) in g.nodes() {
            if !keep_node[id.0] || id == g.root() || node.is_terminal() {
                continue;
            }
            let had_linkage = g.outgoing(id).any(|e| is_linkage(&e.label));
            let has_children = g
                .edges()
                .iter()
                .enumerate()
                .any(|(i, e)| keep_edge[i] && e.parent == id);
            if had_linkage && !has_children {
                keep_node[id.0] = false;
                for (i, e) in g.edges().iter().enumerate() {
                    if e.child == id {
                        keep_edge[i] = false;
                    }
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut renumber = HashMap::new();
    let mut nodes = Vec::new();
    for (id, node) in g.nodes() {
        if keep_node[id.0] {
            renumber.insert(id, NodeId(nodes.len()));
            nodes.push(node.clone());
        }
    }
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, _)| keep_edge[*i])
        .map(|(_, e)| Edge {
            parent: renumber[&e.parent],
            child: renumber[&e.child],
            label: e.label.clone(),
            remote: e.remote,
        })
        .collect();
    UnifiedGraph::from_parts(
        g.id.clone(),
        g.tokens().to_vec(),
        nodes,
        edges,
        renumber[&g.root()],
    )
}
