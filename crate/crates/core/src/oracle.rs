//! Dynamic oracle: for any parser state derived from a gold graph, the set
//! of transitions after which the gold graph is still reachable.
//!
//! State nodes are aligned to gold nodes bottom-up. Terminals and the root
//! align by construction; a node created by `Node` aligns to the gold
//! primary parent of the child it was created over. With that alignment,
//! every gold edge is either built or pending, and the rules are:
//!
//! * all pending gold edges are built: `Finish` once the buffer is empty;
//! * `s0` has nothing pending: `Reduce`;
//! * otherwise every pending gold edge between `s0` and `s1` is optimal,
//!   and so is `Node` when the gold primary parent of `s0` does not exist
//!   yet;
//! * failing those, `Swap` when everything `s0` still waits for is deeper
//!   in the stack, which sinks `s0` towards it;
//! * failing that, `Shift`.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::{NodeId, UnifiedGraph};
use crate::transition::{ConstraintSet, ParserState, Transition, TransitionKind};

/// Alignment of a parser state against a gold graph.
struct Alignment {
    /// State node -> gold node.
    to_gold: Vec<NodeId>,
    /// Gold node -> state node.
    to_state: HashMap<NodeId, NodeId>,
    /// Gold edge indices already built in the state.
    built: HashSet<usize>,
}

fn unreachable_state(why: impl Into<String>) -> Error {
    Error::Oracle(format!("state not reachable from gold: {}", why.into()))
}

fn label_matches(labeled: bool, state_label: &str, gold_label: &str) -> bool {
    !labeled || state_label == gold_label
}

fn align(state: &ParserState, gold: &UnifiedGraph, labeled: bool) -> Result<Alignment> {
    let graph = state.graph();
    if graph.len_tokens() != gold.len_tokens()
        || graph
            .tokens()
            .iter()
            .zip(gold.tokens())
            .any(|(a, b)| a.text != b.text)
    {
        return Err(unreachable_state("token sequences differ"));
    }
    let mut to_gold = Vec::with_capacity(graph.node_count());
    let mut to_state = HashMap::new();
    for (id, node) in graph.nodes() {
        let target = if id == graph.root() {
            gold.root()
        } else if let Some(p) = node.terminal_position {
            gold.terminal(p)
                .ok_or_else(|| unreachable_state(format!("no gold terminal at {}", p)))?
        } else {
            // Created nodes always have the child they were created over,
            // and that child precedes them.
            let edge = graph
                .primary_children(id)
                .next()
                .ok_or_else(|| unreachable_state(format!("node {} has no child", id)))?;
            let child = to_gold[edge.child.0];
            let parent_edge = gold
                .primary_parent_edge(child)
                .ok_or_else(|| unreachable_state(format!("gold node {} has no parent", child)))?;
            if !label_matches(labeled, &edge.label, &parent_edge.label) {
                return Err(unreachable_state(format!(
                    "node {} has the wrong label",
                    id
                )));
            }
            parent_edge.parent
        };
        if target == gold.root() && id != graph.root() {
            return Err(unreachable_state(format!(
                "node {} duplicates the root",
                id
            )));
        }
        if to_state.insert(target, id).is_some() {
            return Err(unreachable_state(format!(
                "gold node {} built twice",
                target
            )));
        }
        to_gold.push(target);
    }

    let mut built = HashSet::new();
    for edge in graph.edges() {
        let (p, c) = (to_gold[edge.parent.0], to_gold[edge.child.0]);
        let found = gold.edges().iter().enumerate().find(|(i, g)| {
            g.parent == p
                && g.child == c
                && g.remote == edge.remote
                && label_matches(labeled, &edge.label, &g.label)
                && !built.contains(i)
        });
        match found {
            Some((i, _)) => {
                built.insert(i);
            }
            None => {
                return Err(unreachable_state(format!(
                    "edge {} -> {} is not in the gold graph",
                    edge.parent, edge.child
                )))
            }
        }
    }
    Ok(Alignment {
        to_gold,
        to_state,
        built,
    })
}

fn transition_for(kind: TransitionKind, label: &str, labeled: bool) -> Transition {
    if labeled {
        Transition::labeled(kind, label)
    } else {
        Transition::new(kind)
    }
}

/// All optimal transitions in `state` with respect to `gold`.
pub fn optimal_set(
    state: &ParserState,
    gold: &UnifiedGraph,
    constraints: &ConstraintSet,
) -> Result<Vec<Transition>> {
    if state.is_finished() {
        return Ok(Vec::new());
    }
    let labeled = constraints.labeled;
    let al = align(state, gold, labeled)?;
    let graph = state.graph();
    let root = graph.root();

    let pending: Vec<usize> = (0..gold.edges().len())
        .filter(|i| !al.built.contains(i))
        .collect();
    let legal = |ts: Vec<Transition>| -> Vec<Transition> {
        ts.into_iter()
            .filter(|t| state.legal(t, constraints))
            .collect()
    };

    if pending.is_empty() && state.buffer().is_empty() {
        return Ok(legal(vec![Transition::finish()]));
    }
    let s0 = match state.s(0) {
        Some(s0) => s0,
        None => return Ok(legal(vec![Transition::shift()])),
    };
    let g0 = al.to_gold[s0.0];
    let pending_of = |g: NodeId| {
        pending
            .iter()
            .map(|&i| &gold.edges()[i])
            .filter(move |e| e.parent == g || e.child == g)
    };

    if s0 != root && pending_of(g0).next().is_none() {
        return Ok(legal(vec![Transition::reduce()]));
    }

    let mut found = Vec::new();
    if let Some(s1) = state.s(1) {
        let g1 = al.to_gold[s1.0];
        for e in pending_of(g0) {
            let kind = match (e.parent == g1, e.child == g1, e.remote) {
                (true, _, false) => TransitionKind::RightEdge,
                (true, _, true) => TransitionKind::RightRemote,
                (_, true, false) => TransitionKind::LeftEdge,
                (_, true, true) => TransitionKind::LeftRemote,
                _ => continue,
            };
            found.push(transition_for(kind, &e.label, labeled));
        }
    }
    if s0 != root {
        if let Some(parent_edge) = gold.primary_parent_edge(g0) {
            if !al.to_state.contains_key(&parent_edge.parent) {
                found.push(transition_for(
                    TransitionKind::Node,
                    &parent_edge.label,
                    labeled,
                ));
            }
        }
    }
    let found = legal(found);
    if !found.is_empty() {
        return Ok(found);
    }

    if let Some(s1) = state.s(1) {
        if s1 != root && sinks_to_stack(state, &al, g0, pending_of(g0).map(|e| (e.parent, e.child)))
        {
            let swap = legal(vec![Transition::swap()]);
            if !swap.is_empty() {
                return Ok(swap);
            }
        }
    }
    Ok(legal(vec![Transition::shift()]))
}

/// True if every node `g0` still has to be connected to already sits on
/// the stack below `s1`.
fn sinks_to_stack(
    state: &ParserState,
    al: &Alignment,
    g0: NodeId,
    pending: impl Iterator<Item = (NodeId, NodeId)>,
) -> bool {
    let stack = state.stack();
    let below: HashSet<NodeId> = stack[..stack.len().saturating_sub(2)]
        .iter()
        .map(|s| al.to_gold[s.0])
        .collect();
    let mut any = false;
    for (p, c) in pending {
        let other = if p == g0 { c } else { p };
        if !below.contains(&other) {
            return false;
        }
        any = true;
    }
    any
}

/// Fixed preference among optimal transitions: edge creations, then
/// `Node`, `Reduce`, `Shift`, `Swap`, `Finish`; ties keep the order of
/// the optimal set.
pub fn priority_choice(_state: &ParserState, optimal: &[Transition]) -> Transition {
    fn rank(kind: TransitionKind) -> u8 {
        use TransitionKind::*;
        match kind {
            LeftEdge | RightEdge | LeftRemote | RightRemote => 0,
            Node => 1,
            Reduce => 2,
            Shift => 3,
            Swap => 4,
            Finish => 5,
        }
    }
    optimal
        .iter()
        .min_by_key(|t| rank(t.kind))
        .cloned()
        .expect("non-empty optimal set")
}

/// Transition bound for oracle runs: generous enough for any gold graph,
/// small enough to turn an oracle loop into an error.
pub fn step_bound(gold: &UnifiedGraph) -> usize {
    let size = gold.node_count() + gold.edges().len();
    4 * size * size + 100
}

/// Follows the oracle from the initial state until `Finish`, picking among
/// optimal transitions with `choose`.
pub fn oracle_parse_with<F>(
    gold: &UnifiedGraph,
    constraints: &ConstraintSet,
    mut choose: F,
) -> Result<(Vec<Transition>, UnifiedGraph)>
where
    F: FnMut(&ParserState, &[Transition]) -> Transition,
{
    let mut state = ParserState::for_graph(gold)?;
    for _ in 0..step_bound(gold) {
        let optimal = optimal_set(&state, gold, constraints)?;
        if optimal.is_empty() {
            return Err(Error::Oracle(format!(
                "no optimal transition after {:?} on {}",
                state
                    .history()
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>(),
                gold.id
            )));
        }
        let t = choose(&state, &optimal);
        state.apply(&t, constraints)?;
        if state.is_finished() {
            let history = state.history().to_vec();
            return Ok((history, state.into_graph()));
        }
    }
    Err(Error::Oracle(format!("step bound exceeded on {}", gold.id)))
}

/// [`oracle_parse_with`] using [`priority_choice`].
pub fn oracle_parse(
    gold: &UnifiedGraph,
    constraints: &ConstraintSet,
) -> Result<(Vec<Transition>, UnifiedGraph)> {
    oracle_parse_with(gold, constraints, priority_choice)
}
