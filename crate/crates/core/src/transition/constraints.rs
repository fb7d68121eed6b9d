use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ParserState, Transition, TransitionKind};
use crate::error::{Error, Result};
use crate::graph::NodeId;

fn yes() -> bool {
    true
}

fn default_node_ratio() -> f64 {
    10.0
}

/// Per-task parsing configuration: label inventory, structural flags and
/// task-specific constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub name: String,
    #[serde(default = "yes")]
    pub labeled: bool,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default = "yes")]
    pub remote_allowed: bool,
    #[serde(default = "yes")]
    pub node_allowed: bool,
    /// A terminal may only have one parent (hierarchical schemes).
    #[serde(default)]
    pub single_parent_terminals: bool,
    /// Optional frame file restricting core arguments per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    /// Upper bound on non-terminals per token.
    #[serde(default = "default_node_ratio")]
    pub max_node_ratio: f64,
}

impl TaskConfig {
    pub fn labeled<I, S>(name: &str, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TaskConfig {
            name: name.to_string(),
            labeled: true,
            labels: labels.into_iter().map(Into::into).collect(),
            remote_allowed: true,
            node_allowed: true,
            single_parent_terminals: false,
            frames: None,
            max_node_ratio: default_node_ratio(),
        }
    }

    pub fn unlabeled(name: &str) -> Self {
        TaskConfig {
            labeled: false,
            ..Self::labeled(name, Vec::<String>::new())
        }
    }

    /// Parses a task table from TOML.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a task object from JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a task file, TOML or JSON by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut task = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if let (Some(frames), Some(dir)) = (&task.frames, path.parent()) {
            if frames.is_relative() {
                task.frames = Some(dir.join(frames));
            }
        }
        Ok(task)
    }
}

/// Core arguments allowed per frame, read from a file with one frame per
/// line: the frame name followed by its allowed argument labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameTable {
    frames: HashMap<String, HashSet<String>>,
}

impl FrameTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut frames = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let frame = fields.next().ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "missing frame name".into(),
            })?;
            frames.insert(frame.to_string(), fields.map(str::to_string).collect());
        }
        Ok(FrameTable { frames })
    }

    pub fn allowed(&self, frame: &str) -> Option<&HashSet<String>> {
        self.frames.get(frame)
    }

    fn is_core_argument(label: &str) -> bool {
        label.len() > 3
            && label.starts_with("ARG")
            && label[3..].chars().all(|c| c.is_ascii_digit())
    }
}

/// A single legality rule.
#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    /// Nodes already swapped past each other are not swapped again: Swap
    /// needs the swap index of s1 below that of s0.
    SwapOrder,
    /// The root stays on the stack until Finish.
    RootStays,
    /// Finish needs an empty buffer and every node attached.
    FinishCoverage,
    /// Non-root nodes without a primary parent may not be reduced.
    ReduceAttached,
    /// Caps the number of non-terminals at `ratio` times the token count.
    NodeBudget(f64),
    /// A terminal may only have one parent.
    SingleParentTerminals,
    /// A frame's children may only carry its listed core arguments.
    FrameArguments(FrameTable),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::SwapOrder => "swapped nodes are not swapped again",
            Rule::RootStays => "root cannot be reduced",
            Rule::FinishCoverage => "finish needs an empty buffer and all nodes attached",
            Rule::ReduceAttached => "parentless nodes cannot be reduced",
            Rule::NodeBudget(_) => "node budget exhausted",
            Rule::SingleParentTerminals => "a terminal may only have one parent",
            Rule::FrameArguments(_) => "argument not defined for frame",
        }
    }

    fn allows(&self, state: &ParserState, t: &Transition) -> bool {
        use TransitionKind::*;
        let graph = state.graph();
        match self {
            Rule::SwapOrder => match (t.kind, state.s(1), state.s(0)) {
                (Swap, Some(s1), Some(s0)) => state.swap_index(s1) < state.swap_index(s0),
                _ => true,
            },
            Rule::RootStays => match (t.kind, state.s(0), state.s(1)) {
                (Reduce, Some(s0), _) => s0 != graph.root(),
                (Swap, _, Some(s1)) => s1 != graph.root(),
                _ => true,
            },
            Rule::FinishCoverage => {
                t.kind != Finish
                    || (state.buffer().is_empty()
                        && graph.nodes().all(|(id, _)| {
                            id == graph.root() || graph.primary_parent(id).is_some()
                        }))
            }
            Rule::ReduceAttached => match (t.kind, state.s(0)) {
                (Reduce, Some(s0)) => s0 == graph.root() || graph.primary_parent(s0).is_some(),
                _ => true,
            },
            Rule::NodeBudget(ratio) => {
                t.kind != Node || {
                    let nonterminals = graph.node_count() - graph.len_tokens() - 1;
                    (nonterminals as f64) < ratio * graph.len_tokens() as f64
                }
            }
            Rule::SingleParentTerminals => match state.edge_endpoints(t) {
                Some((_, child)) => {
                    !graph.node(child).is_terminal() || graph.incoming(child).next().is_none()
                }
                None => true,
            },
            Rule::FrameArguments(frames) => {
                let label = t.edge_label();
                if !t.kind.creates_edge() || !FrameTable::is_core_argument(label) {
                    return true;
                }
                let parent = match state.edge_endpoints(t) {
                    Some((Some(p), _)) => p,
                    _ => return true,
                };
                match frame_of(state, parent).and_then(|f| frames.allowed(&f)) {
                    Some(allowed) => allowed.contains(label),
                    None => true,
                }
            }
        }
    }
}

/// The frame evoked by a node: its concept label if it has one, otherwise
/// the lower-cased text of its first terminal child.
fn frame_of(state: &ParserState, node: NodeId) -> Option<String> {
    let graph = state.graph();
    if let Some(label) = &graph.node(node).label {
        return Some(label.clone());
    }
    graph
        .outgoing(node)
        .find_map(|e| graph.token_of(e.child))
        .map(|t| t.text.to_lowercase())
}

/// The generic rules plus a task's own rules.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub task: String,
    pub labeled: bool,
    pub remote_allowed: bool,
    pub node_allowed: bool,
    pub rules: Vec<Rule>,
}

impl ConstraintSet {
    pub fn generic(task: &str) -> Self {
        ConstraintSet {
            task: task.to_string(),
            labeled: true,
            remote_allowed: true,
            node_allowed: true,
            rules: vec![
                Rule::SwapOrder,
                Rule::RootStays,
                Rule::FinishCoverage,
                Rule::ReduceAttached,
                Rule::NodeBudget(default_node_ratio()),
            ],
        }
    }

    /// Builds the constraint set of a task, loading its frame file if one
    /// is configured.
    pub fn for_task(task: &TaskConfig) -> Result<Self> {
        let mut set = Self::generic(&task.name);
        set.labeled = task.labeled;
        set.remote_allowed = task.remote_allowed;
        set.node_allowed = task.node_allowed;
        for rule in &mut set.rules {
            if let Rule::NodeBudget(r) = rule {
                *r = task.max_node_ratio;
            }
        }
        if task.single_parent_terminals {
            set.rules.push(Rule::SingleParentTerminals);
        }
        if let Some(path) = &task.frames {
            let text = std::fs::read_to_string(path)?;
            set.rules
                .push(Rule::FrameArguments(FrameTable::parse(&text)?));
        }
        Ok(set)
    }

    /// The first rule that forbids `t` in `state`, if any.
    pub fn violated(&self, state: &ParserState, t: &Transition) -> Option<&Rule> {
        self.rules.iter().find(|r| !r.allows(state, t))
    }
}
