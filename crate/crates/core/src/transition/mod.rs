//! The transition system: parser state, transition inventory, legality
//! under per-task constraint sets, and transition application.

mod constraints;
mod state;

use std::fmt;
use std::str::FromStr;

pub use constraints::{ConstraintSet, FrameTable, Rule, TaskConfig};
pub use state::ParserState;

use crate::error::{Error, Result};

/// Label used on edges built by unlabeled tasks.
pub const NO_LABEL: &str = "";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransitionKind {
    Shift,
    Reduce,
    Node,
    LeftEdge,
    RightEdge,
    LeftRemote,
    RightRemote,
    Swap,
    Finish,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 9] = [
        TransitionKind::Shift,
        TransitionKind::Reduce,
        TransitionKind::Node,
        TransitionKind::LeftEdge,
        TransitionKind::RightEdge,
        TransitionKind::LeftRemote,
        TransitionKind::RightRemote,
        TransitionKind::Swap,
        TransitionKind::Finish,
    ];

    /// Kinds that create an edge (and therefore carry a label in labeled
    /// tasks).
    pub fn creates_edge(self) -> bool {
        matches!(
            self,
            TransitionKind::Node
                | TransitionKind::LeftEdge
                | TransitionKind::RightEdge
                | TransitionKind::LeftRemote
                | TransitionKind::RightRemote
        )
    }

    pub fn is_remote(self) -> bool {
        matches!(
            self,
            TransitionKind::LeftRemote | TransitionKind::RightRemote
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TransitionKind::Shift => "Shift",
            TransitionKind::Reduce => "Reduce",
            TransitionKind::Node => "Node",
            TransitionKind::LeftEdge => "LeftEdge",
            TransitionKind::RightEdge => "RightEdge",
            TransitionKind::LeftRemote => "LeftRemote",
            TransitionKind::RightRemote => "RightRemote",
            TransitionKind::Swap => "Swap",
            TransitionKind::Finish => "Finish",
        }
    }
}

/// A transition, optionally carrying an edge label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub kind: TransitionKind,
    pub label: Option<String>,
}

impl Transition {
    pub fn new(kind: TransitionKind) -> Self {
        Transition { kind, label: None }
    }

    pub fn labeled(kind: TransitionKind, label: impl Into<String>) -> Self {
        Transition {
            kind,
            label: Some(label.into()),
        }
    }

    pub fn shift() -> Self {
        Self::new(TransitionKind::Shift)
    }

    pub fn reduce() -> Self {
        Self::new(TransitionKind::Reduce)
    }

    pub fn swap() -> Self {
        Self::new(TransitionKind::Swap)
    }

    pub fn finish() -> Self {
        Self::new(TransitionKind::Finish)
    }

    /// Label of the edge this transition would create.
    pub fn edge_label(&self) -> &str {
        self.label.as_deref().unwrap_or(NO_LABEL)
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{}-{}", self.kind.name(), l),
            None => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, label) = match s.split_once('-') {
            Some((n, l)) => (n, Some(l.to_string())),
            None => (s, None),
        };
        let kind = TransitionKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown transition {:?}", s)))?;
        Ok(Transition { kind, label })
    }
}

/// All transitions a task's classifier chooses from, in a fixed order.
///
/// Labeled tasks get one transition per (edge-creating kind, label) pair
/// plus Shift, Reduce, Swap and Finish; unlabeled tasks get the nine
/// label-free kinds. Kinds disabled by the task flags are left out.
pub fn transition_inventory(task: &TaskConfig) -> Vec<Transition> {
    let mut out = vec![Transition::shift(), Transition::reduce()];
    for kind in [
        TransitionKind::Node,
        TransitionKind::LeftEdge,
        TransitionKind::RightEdge,
        TransitionKind::LeftRemote,
        TransitionKind::RightRemote,
    ] {
        if kind == TransitionKind::Node && !task.node_allowed {
            continue;
        }
        if kind.is_remote() && !task.remote_allowed {
            continue;
        }
        if task.labeled {
            out.extend(
                task.labels
                    .iter()
                    .map(|l| Transition::labeled(kind, l.clone())),
            );
        } else {
            out.push(Transition::new(kind));
        }
    }
    out.push(Transition::swap());
    out.push(Transition::finish());
    out
}

/// Looks a task up by name and returns its inventory.
pub fn inventory_for(tasks: &[TaskConfig], name: &str) -> Result<Vec<Transition>> {
    tasks
        .iter()
        .find(|t| t.name == name)
        .map(transition_inventory)
        .ok_or_else(|| Error::UnknownTask(name.to_string()))
}
