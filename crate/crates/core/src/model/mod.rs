//! The transition classifier.
//!
//! Token embeddings feed a task-specific and/or a shared BiLSTM; each
//! task's MLP reads the parser-state features, where head-terminal
//! templates select encoder outputs, and ends in a softmax over the task's
//! transition inventory. Gradients are computed by hand, in double
//! precision.

mod checkpoint;
mod dropout;
mod lstm;
mod params;
mod vocab;

pub use checkpoint::{MAGIC, VERSION};
pub use dropout::{
    dropout_mask, node_dropout, word_dropout, word_dropout_probability, DropoutConfig,
};
pub use lstm::BiLstm;
pub use params::{Gradients, Init, Optimizer, ParamStore, Rule};
pub use vocab::{Pretrained, Vocab, Vocabularies, NONE, UNK};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{Extractor, FeatureConfig, FeatureKind, FeatureValue};
use crate::graph::Token;
use crate::transition::{transition_inventory, ConstraintSet, TaskConfig, Transition};

/// Embedding sizes per table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dims {
    pub word: usize,
    pub pretrained: usize,
    pub pos: usize,
    pub dep: usize,
    pub ne: usize,
    pub punct: usize,
    pub action: usize,
    pub label: usize,
    pub node_label: usize,
    pub category: usize,
    pub shape: usize,
    pub prefix: usize,
    pub suffix: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            word: 200,
            pretrained: 300,
            pos: 20,
            dep: 10,
            ne: 3,
            punct: 1,
            action: 3,
            label: 20,
            node_label: 20,
            category: 3,
            shape: 3,
            prefix: 2,
            suffix: 3,
        }
    }
}

impl Dims {
    fn of(&self, table: &str) -> usize {
        match table {
            "word" => self.word,
            "pretrained" => self.pretrained,
            "pos" => self.pos,
            "dep" => self.dep,
            "ne" => self.ne,
            "punct" => self.punct,
            "action" => self.action,
            "label" => self.label,
            "node_label" => self.node_label,
            "category" => self.category,
            "shape" => self.shape,
            "prefix" => self.prefix,
            "suffix" => self.suffix,
            _ => 0,
        }
    }
}

/// Depth and width of an encoder (width per direction) or an MLP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layers {
    pub layers: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub dims: Dims,
    /// Encoder used by every task.
    pub shared_encoder: Option<Layers>,
    /// Encoder owned by the main task.
    pub main_encoder: Option<Layers>,
    pub main_mlp: Layers,
    pub aux_mlp: Layers,
    #[serde(default)]
    pub dropout: DropoutConfig,
    /// Embeddings start uniform in +-this.
    #[serde(default = "default_embedding_range")]
    pub embedding_range: f64,
}

fn default_embedding_range() -> f64 {
    0.1
}

impl ModelConfig {
    /// One task with its own 2-layer, 500-wide encoder.
    pub fn single_task() -> Self {
        ModelConfig {
            dims: Dims::default(),
            shared_encoder: None,
            main_encoder: Some(Layers {
                layers: 2,
                dim: 500,
            }),
            main_mlp: Layers { layers: 2, dim: 50 },
            aux_mlp: Layers { layers: 1, dim: 50 },
            dropout: DropoutConfig::default(),
            embedding_range: default_embedding_range(),
        }
    }

    /// Main-task and shared encoders of 2 layers, 300 wide.
    pub fn multitask() -> Self {
        ModelConfig {
            shared_encoder: Some(Layers {
                layers: 2,
                dim: 300,
            }),
            main_encoder: Some(Layers {
                layers: 2,
                dim: 300,
            }),
            ..Self::single_task()
        }
    }
}

mod inventory_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::transition::Transition;

    pub fn serialize<S: Serializer>(inv: &[Transition], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(inv.iter().map(|t| t.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Transition>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// A task as the classifier sees it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTask {
    pub name: String,
    pub labeled: bool,
    pub main: bool,
    #[serde(with = "inventory_serde")]
    pub inventory: Vec<Transition>,
    pub features: FeatureConfig,
    /// Structural flags and constraints used when parsing.
    pub config: TaskConfig,
}

impl ModelTask {
    pub fn new(task: &TaskConfig, main: bool) -> Self {
        ModelTask {
            name: task.name.clone(),
            labeled: task.labeled,
            main,
            inventory: transition_inventory(task),
            features: FeatureConfig::default(),
            config: task.clone(),
        }
    }

    pub fn constraints(&self) -> Result<ConstraintSet> {
        ConstraintSet::for_task(&self.config)
    }
}

#[derive(Clone, Debug)]
enum Slot {
    Skip,
    Numeric,
    Word,
    Table {
        param: String,
        vocab: String,
        dim: usize,
        alpha: f64,
    },
}

#[derive(Clone, Debug)]
struct TokenBlock {
    param: String,
    vocab: &'static str,
    dim: usize,
    alpha: f64,
}

#[derive(Clone, Debug)]
struct Head {
    spec: ModelTask,
    extractor: Extractor,
    encoder: Option<BiLstm>,
    enc_dim: usize,
    slots: Vec<Slot>,
    input_dim: usize,
    mlp: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    vocabs: Vocabularies,
    params: ParamStore,
    shared: Option<BiLstm>,
    blocks: Vec<TokenBlock>,
    token_dim: usize,
    heads: Vec<Head>,
}

/// Gradient sink and dropout source for a training pass. Without an RNG
/// no dropout is applied.
pub struct Training<'a> {
    pub grads: &'a mut Gradients,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

/// Result of one training step.
#[derive(Clone, Debug)]
pub struct Step {
    pub loss: f64,
    pub probabilities: Array1<f64>,
}

fn label_table(task: &str) -> String {
    format!("label.{}", task)
}

/// Embedding row used by each input block of one token, `None` when dropped.
type EmbeddingRows = Vec<Option<usize>>;

impl Model {
    /// Builds and randomly initializes a model. Labeled tasks' edge labels
    /// are added to the vocabularies.
    pub fn new(
        config: ModelConfig,
        tasks: Vec<ModelTask>,
        mut vocabs: Vocabularies,
        seed: u64,
    ) -> Result<Self> {
        for t in tasks.iter().filter(|t| t.labeled) {
            vocabs.add_labels(
                &t.name,
                t.inventory.iter().filter_map(|x| x.label.as_deref()),
            );
        }
        let mut model = Self::assemble(config, tasks, vocabs, ParamStore::new())?;
        model.init(seed);
        Ok(model)
    }

    fn assemble(
        config: ModelConfig,
        tasks: Vec<ModelTask>,
        vocabs: Vocabularies,
        params: ParamStore,
    ) -> Result<Self> {
        if tasks.iter().filter(|t| t.main).count() != 1 {
            return Err(Error::Model("exactly one main task is required".into()));
        }
        let d = &config.dims;
        let dr = &config.dropout;
        let blocks: Vec<TokenBlock> = [
            ("word", "word", dr.word_alpha),
            ("pretrained", "word", 0.0),
            ("pos", "pos", dr.tag_alpha),
            ("dep", "dep", dr.dep_alpha),
            ("ne", "ne", 0.0),
            ("shape", "shape", 0.0),
            ("prefix", "prefix", 0.0),
            ("suffix", "suffix", 0.0),
            ("punct", "punct", 0.0),
        ]
        .into_iter()
        .filter(|(t, _, _)| d.of(t) > 0)
        .map(|(t, vocab, alpha)| TokenBlock {
            param: format!("emb.{}", t),
            vocab,
            dim: d.of(t),
            alpha,
        })
        .collect();
        // One numeric column for the named-entity IOB value.
        let token_dim = blocks.iter().map(|b| b.dim).sum::<usize>() + 1;
        let shared = config
            .shared_encoder
            .map(|l| BiLstm::new("shared.enc", l.layers, l.dim, token_dim));

        let mut heads = Vec::new();
        for spec in tasks {
            let encoder = match (spec.main, config.main_encoder) {
                (true, Some(l)) => Some(BiLstm::new(
                    format!("task.{}.enc", spec.name),
                    l.layers,
                    l.dim,
                    token_dim,
                )),
                _ => None,
            };
            let enc_dim = encoder.as_ref().map_or(0, |e| e.output_dim())
                + shared.as_ref().map_or(0, |e| e.output_dim());
            if enc_dim == 0 {
                return Err(Error::Model(format!("task {} has no encoder", spec.name)));
            }
            let extractor = Extractor::new(&spec.features)?;
            let slots: Vec<Slot> = extractor
                .templates()
                .iter()
                .map(|t| slot(&config, &spec, t.kind))
                .collect();
            let input_dim = slots
                .iter()
                .map(|s| match s {
                    Slot::Skip => 0,
                    Slot::Numeric => 1,
                    Slot::Word => enc_dim,
                    Slot::Table { dim, .. } => *dim,
                })
                .sum();
            let mlp_layers = if spec.main {
                config.main_mlp
            } else {
                config.aux_mlp
            };
            let mlp = (0..mlp_layers.layers)
                .map(|k| format!("task.{}.mlp{}", spec.name, k))
                .chain(std::iter::once(format!("task.{}.out", spec.name)))
                .collect();
            heads.push(Head {
                spec,
                extractor,
                encoder,
                enc_dim,
                slots,
                input_dim,
                mlp,
            });
        }
        let mut model = Model {
            config,
            vocabs,
            params,
            shared,
            blocks,
            token_dim,
            heads,
        };
        model.vocabs.reindex();
        for table in model.embedding_tables().values().map(|(v, _)| v) {
            model.vocabs.table(table)?;
        }
        Ok(model)
    }

    /// Embedding parameters: name to (vocabulary, dim).
    fn embedding_tables(&self) -> std::collections::BTreeMap<String, (String, usize)> {
        let mut out = std::collections::BTreeMap::new();
        for b in &self.blocks {
            out.insert(b.param.clone(), (b.vocab.to_string(), b.dim));
        }
        for h in &self.heads {
            for s in &h.slots {
                if let Slot::Table {
                    param, vocab, dim, ..
                } = s
                {
                    out.insert(param.clone(), (vocab.clone(), *dim));
                }
            }
        }
        out
    }

    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let range = self.config.embedding_range;
        for (name, (vocab, dim)) in self.embedding_tables() {
            let rows = self.vocabs.table(&vocab).map_or(2, |v| v.len());
            let init = if name == "emb.pretrained" {
                Init::Zeros
            } else {
                Init::Uniform(range)
            };
            store.add(&name, rows, dim, init, &mut rng);
        }
        if let Some(e) = &self.shared {
            e.init(&mut store, &mut rng);
        }
        for h in &self.heads {
            if let Some(e) = &h.encoder {
                e.init(&mut store, &mut rng);
            }
            let layers = if h.spec.main {
                self.config.main_mlp
            } else {
                self.config.aux_mlp
            };
            let mut input = h.input_dim;
            for (k, p) in h.mlp.iter().enumerate() {
                let out = if k + 1 == h.mlp.len() {
                    h.spec.inventory.len()
                } else {
                    layers.dim
                };
                store.add(&format!("{}.w", p), out, input, Init::Glorot, &mut rng);
                store.add(&format!("{}.b", p), 1, out, Init::Zeros, &mut rng);
                input = out;
            }
        }
        self.params = store;
    }

    /// Copies pre-trained vectors into the pre-trained embedding block for
    /// every known word; returns how many rows were set.
    pub fn set_pretrained(&mut self, vectors: &Pretrained) -> Result<usize> {
        let dim = self.config.dims.pretrained;
        if vectors.vectors.is_empty() || dim == 0 {
            return Ok(0);
        }
        if vectors.dim != dim {
            return Err(Error::Model(format!(
                "pre-trained vectors have {} dimensions, model expects {}",
                vectors.dim, dim
            )));
        }
        let vocab = self.vocabs.table("word")?.clone();
        let table = self
            .params
            .get_mut("emb.pretrained")
            .expect("pretrained table");
        let mut set = 0;
        for (word, v) in &vectors.vectors {
            let i = vocab.lookup(word);
            if i > UNK {
                table.row_mut(i).assign(&Array1::from(v.clone()));
                set += 1;
            }
        }
        Ok(set)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn vocabs(&self) -> &Vocabularies {
        &self.vocabs
    }

    pub fn tasks(&self) -> impl Iterator<Item = &ModelTask> {
        self.heads.iter().map(|h| &h.spec)
    }

    pub fn main_task(&self) -> &ModelTask {
        self.tasks().find(|t| t.main).expect("one main task")
    }

    fn head(&self, task: &str) -> Result<&Head> {
        self.heads
            .iter()
            .find(|h| h.spec.name == task)
            .ok_or_else(|| Error::UnknownTask(task.to_string()))
    }

    pub fn task(&self, task: &str) -> Result<&ModelTask> {
        Ok(&self.head(task)?.spec)
    }

    pub fn extractor(&self, task: &str) -> Result<&Extractor> {
        Ok(&self.head(task)?.extractor)
    }

    /// Width of the per-token representation a task reads.
    pub fn encoder_dim(&self, task: &str) -> Result<usize> {
        Ok(self.head(task)?.enc_dim)
    }

    /// Width of a task's MLP input.
    pub fn input_dim(&self, task: &str) -> Result<usize> {
        Ok(self.head(task)?.input_dim)
    }

    /// Hex SHA-256 of every task's feature configuration.
    pub fn feature_hash(&self) -> String {
        let mut h = Sha256::new();
        for head in &self.heads {
            h.update(head.spec.name.as_bytes());
            h.update(head.spec.features.to_toml().as_bytes());
        }
        h.finalize().iter().map(|b| format!("{:02x}", b)).collect()
    }

    /// Per-token representations for a task (`n x encoder_dim`).
    pub fn encode(&self, task: &str, tokens: &[Token]) -> Result<Array2<f64>> {
        Ok(self.pass(task, tokens, None)?.encoded)
    }

    /// Starts processing a sentence: embeds and encodes its tokens.
    pub fn pass<'a>(
        &'a self,
        task: &str,
        tokens: &[Token],
        mut training: Option<Training<'a>>,
    ) -> Result<Pass<'a>> {
        let head = self.head(task)?;
        if tokens.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let mut rng = training.as_mut().and_then(|t| t.rng.as_deref_mut());
        let (x, rows) = self.token_input(tokens, rng.as_deref_mut())?;
        let p = self.config.dropout.recurrent;
        let own = head
            .encoder
            .as_ref()
            .map(|e| e.forward(&self.params, &x, p, rng.as_deref_mut()));
        let shared = self
            .shared
            .as_ref()
            .map(|e| e.forward(&self.params, &x, p, rng));
        let mut encoded = Array2::zeros((tokens.len(), head.enc_dim));
        let split = own.as_ref().map_or(0, |(o, _)| o.ncols());
        if let Some((o, _)) = &own {
            encoded.slice_mut(s![.., ..split]).assign(o);
        }
        if let Some((o, _)) = &shared {
            encoded.slice_mut(s![.., split..]).assign(o);
        }
        let state = training.map(|t| TrainState {
            d_enc: Array2::zeros(encoded.raw_dim()),
            grads: t.grads,
            rng: t.rng,
            rows,
            own: own.map(|(_, c)| c),
            shared: shared.map(|(_, c)| c),
        });
        Ok(Pass {
            model: self,
            head,
            encoded,
            train: state,
        })
    }

    /// Token input matrix and, per token and block, the embedding row used
    /// (`None` when dropped).
    fn token_input(
        &self,
        tokens: &[Token],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, Vec<EmbeddingRows>)> {
        let mut x = Array2::zeros((tokens.len(), self.token_dim));
        let mut rows = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let mut offset = 0;
            let mut used = Vec::with_capacity(self.blocks.len());
            for b in &self.blocks {
                let vocab = self.vocabs.table(b.vocab)?;
                let value = match b.vocab {
                    "word" => t.text.clone(),
                    "pos" => t.pos_tag.clone(),
                    "dep" => t.dep_rel.clone(),
                    "ne" => t.ne_type.clone(),
                    "shape" => t.shape.clone(),
                    "prefix" => t.prefix(),
                    "suffix" => t.suffix(),
                    _ if t.is_punct => t.text.clone(),
                    _ => String::new(),
                };
                let row = if value.is_empty() {
                    NONE
                } else {
                    vocab.lookup(&value)
                };
                let dropped = match rng.as_deref_mut() {
                    Some(rng) if row > UNK => word_dropout(vocab.count(row), b.alpha, rng),
                    _ => false,
                };
                if dropped {
                    used.push(None);
                } else {
                    x.slice_mut(s![i, offset..offset + b.dim])
                        .assign(&self.params.get(&b.param).row(row));
                    used.push(Some(row));
                }
                offset += b.dim;
            }
            x[[i, offset]] = t.ne_iob.value();
            rows.push(used);
        }
        Ok((x, rows))
    }
}

fn slot(config: &ModelConfig, spec: &ModelTask, kind: FeatureKind) -> Slot {
    use FeatureKind::*;
    if kind == Word {
        return Slot::Word;
    }
    if kind.is_numeric() {
        return Slot::Numeric;
    }
    let dr = &config.dropout;
    let (param, vocab, dim, alpha) = match kind {
        IncomingLabel | EdgeLabel | ActionLabel => {
            if !spec.labeled {
                return Slot::Skip;
            }
            (
                format!("task.{}.label", spec.name),
                label_table(&spec.name),
                config.dims.label,
                0.0,
            )
        }
        _ => {
            let table = kind.table().expect("categorical kind has a table");
            let alpha = match kind {
                Pos => dr.tag_alpha,
                Dep => dr.dep_alpha,
                _ => 0.0,
            };
            (
                format!("emb.{}", table),
                table.to_string(),
                config.dims.of(table),
                alpha,
            )
        }
    };
    if dim == 0 {
        Slot::Skip
    } else {
        Slot::Table {
            param,
            vocab,
            dim,
            alpha,
        }
    }
}

/// Negative sum of log-probabilities of the optimal transitions.
pub fn loss(probabilities: &Array1<f64>, optimal: &[usize]) -> Result<f64> {
    if optimal.is_empty() {
        return Err(Error::Model("empty optimal set".into()));
    }
    let mut seen = optimal.to_vec();
    seen.sort_unstable();
    seen.dedup();
    Ok(seen.iter().map(|&i| -probabilities[i].ln()).sum())
}

struct TrainState<'a> {
    grads: &'a mut Gradients,
    rng: Option<&'a mut ChaCha8Rng>,
    rows: Vec<Vec<Option<usize>>>,
    own: Option<lstm::BiLstmCache>,
    shared: Option<lstm::BiLstmCache>,
    d_enc: Array2<f64>,
}

enum Source<'a> {
    Row(&'a str, usize),
    Encoded(usize),
}

struct Forward<'a> {
    pieces: Vec<(usize, usize, Source<'a>)>,
    /// Input of each layer; the last is the input of the output layer.
    acts: Vec<Array1<f64>>,
    pre: Vec<Array1<f64>>,
    masks: Vec<Option<Array1<f64>>>,
    logits: Array1<f64>,
}

/// A sentence being parsed or trained on.
pub struct Pass<'a> {
    model: &'a Model,
    head: &'a Head,
    encoded: Array2<f64>,
    train: Option<TrainState<'a>>,
}

impl<'a> Pass<'a> {
    pub fn encoded(&self) -> &Array2<f64> {
        &self.encoded
    }

    pub fn inventory(&self) -> &'a [Transition] {
        &self.head.spec.inventory
    }

    pub fn extractor(&self) -> &'a Extractor {
        &self.head.extractor
    }

    /// Transition distribution without dropout.
    pub fn probabilities(&mut self, values: &[FeatureValue]) -> Result<Array1<f64>> {
        let f = self.forward(values, false)?;
        Ok(softmax(&f.logits))
    }

    /// Forward and backward for one parser state; the loss is the
    /// negative log-likelihood of the optimal set.
    pub fn train_step(&mut self, values: &[FeatureValue], optimal: &[usize]) -> Result<Step> {
        if self.train.is_none() {
            return Err(Error::Model("train_step outside a training pass".into()));
        }
        if optimal.is_empty() {
            return Err(Error::Model("empty optimal set".into()));
        }
        let f = self.forward(values, true)?;
        let probs = softmax(&f.logits);
        let loss = loss(&probs, optimal)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss of task {}",
                self.head.spec.name
            )));
        }
        let mut set = optimal.to_vec();
        set.sort_unstable();
        set.dedup();
        let mut d = probs.mapv(|p| p * set.len() as f64);
        for &i in &set {
            d[i] -= 1.0;
        }
        self.backward(f, d);
        Ok(Step {
            loss,
            probabilities: probs,
        })
    }

    fn forward(&mut self, values: &[FeatureValue], training: bool) -> Result<Forward<'a>> {
        let head = self.head;
        let model = self.model;
        if values.len() != head.slots.len() {
            return Err(Error::Model(format!(
                "expected {} feature values, got {}",
                head.slots.len(),
                values.len()
            )));
        }
        let config = &model.config.dropout;
        let mut rng = match (&mut self.train, training) {
            (Some(t), true) => t.rng.as_deref_mut(),
            _ => None,
        };
        let dropped = match rng.as_deref_mut() {
            Some(rng) => node_dropout(head.extractor.templates(), values, config.node, rng).1,
            None => vec![false; values.len()],
        };
        let mut x = Array1::zeros(head.input_dim);
        let mut pieces = Vec::new();
        let mut offset = 0;
        for ((slot, value), &drop) in head.slots.iter().zip(values).zip(&dropped) {
            match slot {
                Slot::Skip => {}
                Slot::Numeric => {
                    if !drop {
                        x[offset] = value.number();
                    }
                    offset += 1;
                }
                Slot::Word => {
                    let dim = head.enc_dim;
                    if let (false, FeatureValue::Word(p, _)) = (drop, value) {
                        x.slice_mut(s![offset..offset + dim])
                            .assign(&self.encoded.row(p - 1));
                        pieces.push((offset, dim, Source::Encoded(p - 1)));
                    }
                    offset += dim;
                }
                Slot::Table {
                    param,
                    vocab,
                    dim,
                    alpha,
                } => {
                    let v = model.vocabs.table(vocab)?;
                    let row = match value {
                        FeatureValue::None => NONE,
                        FeatureValue::Category(c) => v.lookup(c),
                        FeatureValue::Word(_, w) => v.lookup(w),
                        FeatureValue::Number(_) => UNK,
                    };
                    let word_drop = match rng.as_deref_mut() {
                        Some(rng) if row > UNK => word_dropout(v.count(row), *alpha, rng),
                        _ => false,
                    };
                    if !drop && !word_drop {
                        x.slice_mut(s![offset..offset + dim])
                            .assign(&model.params.get(param).row(row));
                        pieces.push((offset, *dim, Source::Row(param.as_str(), row)));
                    }
                    offset += dim;
                }
            }
        }

        let p = config.mlp;
        let n = head.mlp.len();
        let mut acts = vec![x];
        let mut pre = Vec::new();
        let mut masks = Vec::new();
        for (k, name) in head.mlp.iter().enumerate() {
            let w = model.params.get(&format!("{}.w", name));
            let b = model.params.get(&format!("{}.b", name)).row(0);
            let a = w.dot(&acts[k]) + b;
            if k + 1 == n {
                return Ok(Forward {
                    pieces,
                    acts,
                    pre,
                    masks,
                    logits: a,
                });
            }
            let mut h = a.mapv(|v| v.max(0.0));
            let mask = match rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    let m = dropout_mask(h.len(), p, rng);
                    h *= &m;
                    Some(m)
                }
                _ => None,
            };
            pre.push(a);
            masks.push(mask);
            acts.push(h);
        }
        unreachable!("an MLP has an output layer")
    }

    fn backward(&mut self, f: Forward<'a>, d_logits: Array1<f64>) {
        let model = self.model;
        let store = &model.params;
        let t = self.train.as_mut().expect("training pass");
        let mut d = d_logits;
        for k in (0..self.head.mlp.len()).rev() {
            let name = &self.head.mlp[k];
            if k + 1 < self.head.mlp.len() {
                if let Some(m) = &f.masks[k] {
                    d *= m;
                }
                d.zip_mut_with(&f.pre[k], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            let wname = format!("{}.w", name);
            let col = d.view().insert_axis(Axis(1));
            let row = f.acts[k].view().insert_axis(Axis(0));
            general_mat_mul(1.0, &col, &row, 1.0, t.grads.entry(store, &wname));
            let mut gb = t.grads.entry(store, &format!("{}.b", name)).row_mut(0);
            gb += &d;
            d = store.get(&wname).t().dot(&d);
        }
        for (offset, dim, source) in f.pieces {
            let part = d.slice(s![offset..offset + dim]);
            match source {
                Source::Row(param, row) => {
                    let mut g = t.grads.entry(store, param).row_mut(row);
                    g += &part;
                }
                Source::Encoded(p) => {
                    let mut g = t.d_enc.row_mut(p);
                    g += &part;
                }
            }
        }
    }

    /// Backpropagates the accumulated encoder-output gradient through the
    /// encoders and token embeddings.
    pub fn finish(self) {
        let Some(t) = self.train else { return };
        let model = self.model;
        let store = &model.params;
        let mut dx = Array2::<f64>::zeros((self.encoded.nrows(), model.token_dim));
        let split = self.head.encoder.as_ref().map_or(0, |e| e.output_dim());
        if let (Some(e), Some(c)) = (&self.head.encoder, &t.own) {
            let d = t.d_enc.slice(s![.., ..split]).to_owned();
            dx += &e.backward(store, c, &d, t.grads);
        }
        if let (Some(e), Some(c)) = (&model.shared, &t.shared) {
            let d = t.d_enc.slice(s![.., split..]).to_owned();
            dx += &e.backward(store, c, &d, t.grads);
        }
        for (i, rows) in t.rows.iter().enumerate() {
            let mut offset = 0;
            for (b, row) in model.blocks.iter().zip(rows) {
                if let Some(row) = row {
                    let mut g = t.grads.entry(store, &b.param).row_mut(*row);
                    g += &dx.slice(s![i, offset..offset + b.dim]);
                }
                offset += b.dim;
            }
        }
    }
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|l| (l - max).exp());
    let z = e.sum();
    e / z
}
