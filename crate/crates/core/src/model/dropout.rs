use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureValue, NodeRef, Target, Template};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutConfig {
    /// Between MLP layers.
    pub mlp: f64,
    /// Between encoder layers.
    pub recurrent: f64,
    pub word_alpha: f64,
    pub tag_alpha: f64,
    pub dep_alpha: f64,
    /// Per-step probability of node dropout.
    pub node: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig {
            mlp: 0.4,
            recurrent: 0.4,
            word_alpha: 0.2,
            tag_alpha: 0.2,
            dep_alpha: 0.5,
            node: 0.1,
        }
    }
}

impl DropoutConfig {
    pub fn none() -> Self {
        DropoutConfig {
            mlp: 0.0,
            recurrent: 0.0,
            word_alpha: 0.0,
            tag_alpha: 0.0,
            dep_alpha: 0.0,
            node: 0.0,
        }
    }
}

/// Probability that a value seen `count` times is replaced by zeros.
pub fn word_dropout_probability(count: u64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else {
        alpha / (count as f64 + alpha)
    }
}

/// Draws whether to drop a value seen `count` times.
pub fn word_dropout(count: u64, alpha: f64, rng: &mut ChaCha8Rng) -> bool {
    let p = word_dropout_probability(count, alpha);
    p > 0.0 && rng.gen::<f64>() < p
}

/// With probability `p`, picks one node target among those with a value
/// and marks all its templates for zeroing. Returns the chosen target and
/// a per-template mask.
pub fn node_dropout(
    templates: &[Template],
    values: &[FeatureValue],
    p: f64,
    rng: &mut ChaCha8Rng,
) -> (Option<NodeRef>, Vec<bool>) {
    let mut mask = vec![false; templates.len()];
    if p <= 0.0 || rng.gen::<f64>() >= p {
        return (None, mask);
    }
    let mut present: Vec<&NodeRef> = Vec::new();
    for (t, v) in templates.iter().zip(values) {
        if let Target::Node(r) = &t.target {
            if *v != FeatureValue::None && !present.contains(&r) {
                present.push(r);
            }
        }
    }
    let Some(&chosen) = present.choose(rng) else {
        return (None, mask);
    };
    for (m, t) in mask.iter_mut().zip(templates) {
        *m = matches!(&t.target, Target::Node(r) if r == chosen);
    }
    (Some(chosen.clone()), mask)
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else
/// `1 / (1 - p)`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> ndarray::Array1<f64> {
    let keep = 1.0 - p;
    ndarray::Array1::from_shape_fn(len, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}
