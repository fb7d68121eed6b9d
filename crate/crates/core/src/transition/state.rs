use std::collections::VecDeque;

use super::{ConstraintSet, Transition, TransitionKind};
use crate::error::{Error, Result};
use crate::graph::{Node as GraphNode, NodeId, Token, UnifiedGraph};

/// Stack, buffer and graph under construction.
///
/// Parsing starts with the root on the stack and the terminals on the
/// buffer. Every node carries a swap index: 0 for the root, the token
/// position for terminals, and for a node created by `Node` the mean of
/// the indices of the stack top and the buffer head (the buffer head
/// counts as `n + 1` when the buffer is empty).
#[derive(Clone, Debug)]
pub struct ParserState {
    stack: Vec<NodeId>,
    buffer: VecDeque<NodeId>,
    graph: UnifiedGraph,
    swap_index: Vec<f64>,
    history: Vec<Transition>,
    finished: bool,
}

impl ParserState {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("token list"));
        }
        let graph = UnifiedGraph::new(id, tokens);
        let n = graph.len_tokens();
        Ok(ParserState {
            stack: vec![graph.root()],
            buffer: (1..=n).map(NodeId).collect(),
            swap_index: (0..=n).map(|i| i as f64).collect(),
            graph,
            history: Vec::new(),
            finished: false,
        })
    }

    /// Initial state over the tokens of an existing graph.
    pub fn for_graph(graph: &UnifiedGraph) -> Result<Self> {
        Self::new(graph.id.clone(), graph.tokens().to_vec())
    }

    /// `i`-th stack node from the top.
    pub fn s(&self, i: usize) -> Option<NodeId> {
        self.stack.len().checked_sub(i + 1).map(|j| self.stack[j])
    }

    /// `i`-th buffer node from the head.
    pub fn b(&self, i: usize) -> Option<NodeId> {
        self.buffer.get(i).copied()
    }

    /// Stack from bottom to top.
    pub fn stack(&self) -> &[NodeId] {
        &self.stack
    }

    pub fn buffer(&self) -> &VecDeque<NodeId> {
        &self.buffer
    }

    pub fn graph(&self) -> &UnifiedGraph {
        &self.graph
    }

    pub fn into_graph(self) -> UnifiedGraph {
        self.graph
    }

    pub fn history(&self) -> &[Transition] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn swap_index(&self, node: NodeId) -> f64 {
        self.swap_index[node.0]
    }

    /// Parent and child of the edge `t` would create. The parent is `None`
    /// for `Node`, whose parent does not exist yet.
    pub fn edge_endpoints(&self, t: &Transition) -> Option<(Option<NodeId>, NodeId)> {
        use TransitionKind::*;
        match t.kind {
            Node => self.s(0).map(|s0| (None, s0)),
            LeftEdge | LeftRemote => Some((Some(self.s(0)?), self.s(1)?)),
            RightEdge | RightRemote => Some((Some(self.s(1)?), self.s(0)?)),
            _ => None,
        }
    }

    /// Checks structural preconditions and the constraint set; the error
    /// names the violated rule.
    pub fn check(&self, t: &Transition, constraints: &ConstraintSet) -> Result<(), String> {
        use TransitionKind::*;
        if self.finished {
            return Err("state is finished".into());
        }
        if t.kind.creates_edge() {
            if constraints.labeled != t.label.is_some() {
                return Err(if constraints.labeled {
                    "labeled task needs an edge label".into()
                } else {
                    "unlabeled task takes no edge label".into()
                });
            }
            if t.kind == Node && !constraints.node_allowed {
                return Err("task does not create nodes".into());
            }
            if t.kind.is_remote() && !constraints.remote_allowed {
                return Err("task has no remote edges".into());
            }
        } else if t.label.is_some() {
            return Err(format!("{} takes no label", t.kind.name()));
        }
        let root = self.graph.root();
        match t.kind {
            Shift => {
                if self.buffer.is_empty() {
                    return Err("buffer is empty".into());
                }
            }
            Reduce => {
                if self.stack.is_empty() {
                    return Err("stack is empty".into());
                }
            }
            Swap => {
                if self.stack.len() < 2 {
                    return Err("swap needs two stack nodes".into());
                }
            }
            Finish => {}
            Node => {
                let s0 = self.s(0).ok_or("stack is empty")?;
                if s0 == root {
                    return Err("root cannot get a parent".into());
                }
                if self.graph.primary_parent(s0).is_some() {
                    return Err("node already has a primary parent".into());
                }
            }
            LeftEdge | RightEdge | LeftRemote | RightRemote => {
                let (parent, child) = match self.edge_endpoints(t) {
                    Some((Some(p), c)) => (p, c),
                    _ => return Err("edge needs two stack nodes".into()),
                };
                if child == root {
                    return Err("root cannot get a parent".into());
                }
                if self.graph.node(parent).is_terminal() {
                    return Err("terminals cannot have children".into());
                }
                let remote = t.kind.is_remote();
                if !remote && self.graph.primary_parent(child).is_some() {
                    return Err("node already has a primary parent".into());
                }
                if self.graph.has_edge(parent, child, t.edge_label(), remote) {
                    return Err("edge already exists".into());
                }
                if self.graph.reaches(child, parent) {
                    return Err("edge would create a cycle".into());
                }
            }
        }
        match constraints.violated(self, t) {
            Some(rule) => Err(rule.name().to_string()),
            None => Ok(()),
        }
    }

    pub fn legal(&self, t: &Transition, constraints: &ConstraintSet) -> bool {
        self.check(t, constraints).is_ok()
    }

    /// Applies a legal transition; illegal ones are rejected without
    /// touching the state.
    pub fn apply(&mut self, t: &Transition, constraints: &ConstraintSet) -> Result<()> {
        self.check(t, constraints)
            .map_err(|rule| Error::IllegalTransition {
                transition: t.to_string(),
                rule,
            })?;
        self.apply_unchecked(t);
        Ok(())
    }

    /// Applies a transition whose legality was established by the caller.
    pub fn apply_unchecked(&mut self, t: &Transition) {
        use TransitionKind::*;
        match t.kind {
            Shift => {
                let b0 = self.buffer.pop_front().expect("shift with empty buffer");
                self.stack.push(b0);
            }
            Reduce => {
                self.stack.pop();
            }
            Swap => {
                let s0 = self.stack.pop().expect("swap with empty stack");
                let s1 = self.stack.pop().expect("swap with one stack node");
                self.stack.push(s0);
                self.buffer.push_front(s1);
            }
            Finish => {
                self.finished = true;
            }
            Node => {
                let s0 = self.s(0).expect("node with empty stack");
                let next = match self.b(0) {
                    Some(b0) => self.swap_index(b0),
                    None => (self.graph.len_tokens() + 1) as f64,
                };
                let index = (self.swap_index(s0) + next) / 2.0;
                let node = self.graph.add_node(GraphNode::nonterminal());
                self.graph
                    .add_edge(node, s0, t.edge_label(), false)
                    .expect("endpoints exist");
                self.swap_index.push(index);
                self.buffer.push_front(node);
            }
            LeftEdge | RightEdge | LeftRemote | RightRemote => {
                let (parent, child) = match self.edge_endpoints(t) {
                    Some((Some(p), c)) => (p, c),
                    _ => unreachable!("edge without two stack nodes"),
                };
                self.graph
                    .add_edge(parent, child, t.edge_label(), t.kind.is_remote())
                    .expect("endpoints exist");
            }
        }
        self.history.push(t.clone());
    }

    /// Attaches every parentless non-root node to the root, so that a
    /// parse cut short still yields a well-formed graph.
    pub fn attach_orphans(&mut self, label: &str) {
        let root = self.graph.root();
        let orphans: Vec<NodeId> = self
            .graph
            .nodes()
            .filter(|(id, _)| *id != root && self.graph.primary_parent(*id).is_none())
            .map(|(id, _)| id)
            .collect();
        for node in orphans {
            self.graph
                .add_edge(root, node, label, false)
                .expect("endpoints exist");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::{TaskConfig, Transition as T, TransitionKind as K};

    fn tokens(n: usize) -> Vec<Token> {
        (1..=n).map(|i| Token::new(i, format!("w{}", i))).collect()
    }

    fn labeled() -> ConstraintSet {
        ConstraintSet::for_task(&TaskConfig::labeled("t", ["A", "P"])).unwrap()
    }

    #[test]
    fn initial_state() {
        let s = ParserState::new("x", tokens(7)).unwrap();
        assert_eq!(s.stack(), &[NodeId(0)]);
        assert_eq!(
            s.buffer().iter().copied().collect::<Vec<_>>(),
            (1..=7).map(NodeId).collect::<Vec<_>>()
        );
        assert_eq!(s.swap_index(NodeId(0)), 0.0);
        assert_eq!(s.swap_index(NodeId(3)), 3.0);
        assert_eq!(s.graph().node_count(), 8);
        assert!(ParserState::new("x", vec![]).is_err());
    }

    #[test]
    fn shift_then_node_takes_mean_swap_index() {
        let c = labeled();
        let mut s = ParserState::new("x", tokens(4)).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        assert_eq!(s.stack(), &[NodeId(0), NodeId(1)]);
        s.apply(&T::shift(), &c).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        s.apply(&T::labeled(K::Node, "P"), &c).unwrap();
        let node = s.b(0).unwrap();
        assert_eq!(s.swap_index(node), 3.5);
        assert!(s.graph().has_edge(node, NodeId(3), "P", false));
    }

    #[test]
    fn edge_directions() {
        let c = labeled();
        let mut s = ParserState::new("x", tokens(1)).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        s.apply(&T::labeled(K::Node, "P"), &c).unwrap();
        s.apply(&T::reduce(), &c).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        // s1 = root, s0 = new node: RightEdge makes s0 the child.
        let node = s.s(0).unwrap();
        s.apply(&T::labeled(K::RightEdge, "A"), &c).unwrap();
        assert!(s.graph().has_edge(NodeId(0), node, "A", false));
        assert!(s.apply(&T::labeled(K::LeftEdge, "A"), &c).is_err());
        s.apply(&T::finish(), &c).unwrap();
        assert!(s.is_finished());
        assert!(s.graph().is_valid());
    }

    #[test]
    fn swap_needs_two_nodes_and_increasing_index() {
        let c = labeled();
        let mut s = ParserState::new("x", tokens(3)).unwrap();
        assert!(!s.legal(&T::swap(), &c));
        s.apply(&T::shift(), &c).unwrap();
        // s1 is the root
        assert!(!s.legal(&T::swap(), &c));
        s.apply(&T::shift(), &c).unwrap();
        s.apply(&T::swap(), &c).unwrap();
        assert_eq!(s.b(0), Some(NodeId(1)));
        s.apply(&T::shift(), &c).unwrap();
        // the pair (2, 1) was swapped already
        let err = s.apply(&T::swap(), &c).unwrap_err();
        assert!(err.to_string().contains("swapped"), "{}", err);
    }

    #[test]
    fn single_parent_terminals() {
        let mut task = TaskConfig::labeled("ucca", ["A", "P"]);
        task.single_parent_terminals = true;
        let c = ConstraintSet::for_task(&task).unwrap();
        let mut s = ParserState::new("x", tokens(2)).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        s.apply(&T::labeled(K::Node, "P"), &c).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        // s1 = terminal 1 (has a parent), s0 = its parent: a remote edge
        // from s0 back onto the terminal is forbidden.
        assert!(!s.legal(&T::labeled(K::LeftRemote, "A"), &c));
        let general = labeled();
        assert!(s.legal(&T::labeled(K::LeftRemote, "A"), &general));
    }

    #[test]
    fn reduce_rules() {
        let c = labeled();
        let mut s = ParserState::new("x", tokens(1)).unwrap();
        assert!(!s.legal(&T::reduce(), &c), "root");
        s.apply(&T::shift(), &c).unwrap();
        assert!(!s.legal(&T::reduce(), &c), "parentless");
        assert!(
            !s.legal(&T::finish(), &c),
            "buffer empty but terminal detached"
        );
    }

    #[test]
    fn labels_must_match_task() {
        let c = labeled();
        let mut s = ParserState::new("x", tokens(1)).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        assert!(!s.legal(&T::new(K::Node), &c));
        let u = ConstraintSet::for_task(&TaskConfig::unlabeled("u")).unwrap();
        assert!(s.legal(&T::new(K::Node), &u));
        assert!(!s.legal(&T::labeled(K::Node, "A"), &u));
    }

    #[test]
    fn attach_orphans_makes_graph_valid() {
        let c = labeled();
        let mut s = ParserState::new("x", tokens(3)).unwrap();
        s.apply(&T::shift(), &c).unwrap();
        s.apply(&T::labeled(K::Node, "P"), &c).unwrap();
        s.attach_orphans("A");
        assert!(s.graph().is_valid(), "{:?}", s.graph().validate());
    }
}
