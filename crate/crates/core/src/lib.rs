//! Transition-based parsing into a unified DAG format.
//!
//! Four families of annotation (hierarchical semantic graphs, anchored
//! concept graphs, bilexical semantic dependencies and syntactic
//! dependency trees) are converted into one rooted DAG format
//! ([`graph::UnifiedGraph`]), parsed by a single transition system
//! ([`transition`]) and scored by a neural classifier ([`model`]) that can
//! be trained on one task or on several tasks sharing an encoder
//! ([`training`]).

pub mod convert;
pub mod error;
pub mod graph;

pub use error::{Error, Result};
pub mod eval;
pub mod features;
pub mod model;
pub mod oracle;
pub mod training;
pub mod transition;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/conversion.md")]
    mod conversion {}
    #[doc = include_str!("../../../book/src/transitions.md")]
    mod transitions {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
