use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named parameter matrices. Vectors are stored as `1 x n` rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Array2<f64>>,
}

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform in +-sqrt(6 / (rows + cols)).
    Glorot,
    Zeros,
    Uniform(f64),
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init, rng: &mut ChaCha8Rng) {
        let tensor = match init {
            Init::Zeros => Array2::zeros((rows, cols)),
            Init::Glorot => {
                let r = (6.0 / (rows + cols).max(1) as f64).sqrt();
                uniform(rows, cols, r, rng)
            }
            Init::Uniform(r) => uniform(rows, cols, r, rng),
        };
        self.insert(name, tensor);
    }

    pub fn insert(&mut self, name: &str, tensor: Array2<f64>) {
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("no parameter {}", name))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }
}

fn uniform(rows: usize, cols: usize, r: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    if r == 0.0 {
        return Array2::zeros((rows, cols));
    }
    let dist = Uniform::new_inclusive(-r, r);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Gradient accumulators, created on first use. The set of keys is the
/// set of parameters a computation touched.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    tensors: BTreeMap<String, Array2<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&mut self, store: &ParamStore, name: &str) -> &mut Array2<f64> {
        if !self.tensors.contains_key(name) {
            let shape = store.get(name).raw_dim();
            self.tensors.insert(name.to_string(), Array2::zeros(shape));
        }
        self.tensors.get_mut(name).expect("just inserted")
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.get(name)
    }

    pub fn touched(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn clear(&mut self) {
        self.tensors.clear();
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Adds `factor` times `other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (name, g) in &other.tensors {
            match self.tensors.get_mut(name) {
                Some(t) => t.scaled_add(factor, g),
                None => {
                    self.tensors.insert(name.clone(), g * factor);
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.tensors.values_mut() {
            g.mapv_inplace(|x| x * factor);
        }
    }
}

/// Update rule of an [`Optimizer`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    Sgd {
        lr: f64,
    },
    AmsGrad {
        alpha: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Rule {
    pub fn amsgrad(alpha: f64, beta1: f64, beta2: f64) -> Self {
        Rule::AmsGrad {
            alpha,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

/// Applies gradients. Every parameter is decayed at each step, whether
/// or not it has a gradient.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub rule: Rule,
    pub weight_decay: f64,
    /// Rescale the gradient to at most this global norm.
    pub clip: Option<f64>,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
    v_max: BTreeMap<String, Array2<f64>>,
    pub steps: u64,
}

impl Optimizer {
    pub fn new(rule: Rule, weight_decay: f64) -> Self {
        Optimizer {
            rule,
            weight_decay,
            clip: None,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            v_max: BTreeMap::new(),
            steps: 0,
        }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip = clip;
        self
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (name, g) in &grads.tensors {
            if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {} ({})", name, bad)));
            }
        }
        let scale = match self.clip {
            Some(c) => {
                let norm = grads.norm();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let decay = 1.0 - self.weight_decay;
        self.steps += 1;
        for (name, p) in params.iter_mut() {
            let g = grads.tensors.get(name);
            match self.rule {
                Rule::Sgd { lr } => match g {
                    Some(g) => Zip::from(&mut *p)
                        .and(g)
                        .for_each(|p, &g| *p = *p * decay - lr * scale * g),
                    None => p.mapv_inplace(|x| x * decay),
                },
                Rule::AmsGrad {
                    alpha,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let shape = p.raw_dim();
                    let m = self
                        .m
                        .entry(name.to_string())
                        .or_insert_with(|| Array2::zeros(shape));
                    let v = self
                        .v
                        .entry(name.to_string())
                        .or_insert_with(|| Array2::zeros(shape));
                    let v_max = self
                        .v_max
                        .entry(name.to_string())
                        .or_insert_with(|| Array2::zeros(shape));
                    let zero;
                    let g = match g {
                        Some(g) => g,
                        None => {
                            zero = Array2::zeros(shape);
                            &zero
                        }
                    };
                    Zip::from(&mut *p).and(g).and(m).and(v).and(v_max).for_each(
                        |p, &g, m, v, v_max| {
                            let g = g * scale;
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *v = beta2 * *v + (1.0 - beta2) * g * g;
                            *v_max = v_max.max(*v);
                            *p = *p * decay - alpha * *m / (v_max.sqrt() + eps);
                        },
                    );
                }
            }
        }
        Ok(())
    }
}
