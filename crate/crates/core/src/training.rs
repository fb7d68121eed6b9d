//! Training loops and greedy decoding.
//!
//! Every epoch draws as many sentences from each task as the main task's
//! training corpus holds and shuffles them into one stream. Training runs
//! a phase of plain SGD followed by a phase of AMSGrad, each for the same
//! number of epochs. After every epoch the main task's dev corpus is
//! parsed and the model with the best average labeled F1 is kept.
//!
//! Supervision comes from the dynamic oracle: at every state the loss
//! covers all optimal transitions, and the optimal transition the model
//! scores highest is the one applied.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convert::{read_unified, Format};
use crate::error::{Error, Result};
use crate::eval::{corpus_score, Scores};
use crate::features::FeatureConfig;
use crate::graph::{Token, UnifiedGraph};
use crate::model::{
    Gradients, Model, ModelConfig, ModelTask, Optimizer, Pretrained, Rule, Training, Vocabularies,
};
use crate::oracle::{optimal_set, oracle_parse, step_bound};
use crate::transition::{ConstraintSet, ParserState, TaskConfig, Transition, NO_LABEL};

/// Draws each epoch's sentences. Every task contributes `main_size`
/// sentences per epoch, taken without replacement from a shuffled order
/// that is reshuffled whenever the corpus runs out.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    sizes: Vec<usize>,
    main_size: usize,
    orders: Vec<Vec<usize>>,
    cursors: Vec<usize>,
}

impl EpochSampler {
    /// `sizes` are corpus sizes per task; `main` indexes the main task.
    pub fn new(sizes: &[usize], main: usize) -> Result<Self> {
        let main_size = *sizes.get(main).ok_or(Error::Empty("task list"))?;
        if main_size == 0 {
            return Err(Error::Empty("main training corpus"));
        }
        if sizes.contains(&0) {
            return Err(Error::Empty("auxiliary training corpus"));
        }
        Ok(EpochSampler {
            sizes: sizes.to_vec(),
            main_size,
            orders: vec![Vec::new(); sizes.len()],
            cursors: vec![0; sizes.len()],
        })
    }

    /// The next epoch as `(task, sentence)` pairs in training order.
    pub fn epoch(&mut self, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let mut stream = Vec::with_capacity(self.main_size * self.sizes.len());
        for task in 0..self.sizes.len() {
            for _ in 0..self.main_size {
                if self.cursors[task] == self.orders[task].len() {
                    let mut order: Vec<usize> = (0..self.sizes[task]).collect();
                    order.shuffle(rng);
                    self.orders[task] = order;
                    self.cursors[task] = 0;
                }
                stream.push((task, self.orders[task][self.cursors[task]]));
                self.cursors[task] += 1;
            }
        }
        stream.shuffle(rng);
        stream
    }
}

/// Optimization schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// Epochs per phase.
    pub epochs: usize,
    pub sgd_lr: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Transitions per update.
    pub minibatch: usize,
    /// Global gradient norm bound.
    pub clip: Option<f64>,
    /// Stop as soon as the dev average F1 reaches this value.
    pub stop_at: Option<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epochs: 50,
            sgd_lr: 0.1,
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-5,
            minibatch: 100,
            clip: Some(5.0),
            stop_at: None,
        }
    }
}

impl Schedule {
    fn optimizer(&self, epoch: usize) -> Optimizer {
        let rule = if epoch <= self.epochs {
            Rule::Sgd { lr: self.sgd_lr }
        } else {
            Rule::amsgrad(self.alpha, self.beta1, self.beta2)
        };
        Optimizer::new(rule, self.weight_decay).with_clip(self.clip)
    }

    fn phase(&self, epoch: usize) -> &'static str {
        if epoch <= self.epochs {
            "sgd"
        } else {
            "amsgrad"
        }
    }
}

/// Loss of one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SentenceLoss {
    pub loss: f64,
    pub transitions: usize,
}

/// Runs the oracle over `gold`, accumulating the gradient of the summed
/// loss into `grads`.
pub fn train_sentence(
    model: &Model,
    task: &str,
    constraints: &ConstraintSet,
    gold: &UnifiedGraph,
    grads: &mut Gradients,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<SentenceLoss> {
    let mut state = ParserState::for_graph(gold)?;
    let mut pass = model.pass(task, gold.tokens(), Some(Training { grads, rng }))?;
    let inventory = pass.inventory();
    let extractor = pass.extractor();
    let mut out = SentenceLoss::default();
    for _ in 0..step_bound(gold) {
        let optimal = optimal_set(&state, gold, constraints)?;
        if optimal.is_empty() {
            return Err(Error::Oracle(format!(
                "no optimal transition on {}",
                gold.id
            )));
        }
        let indices = optimal
            .iter()
            .map(|t| {
                inventory.iter().position(|x| x == t).ok_or_else(|| {
                    Error::Model(format!(
                        "transition {} is not in the inventory of {}",
                        t, task
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let values = extractor.extract(&state);
        let step = pass.train_step(&values, &indices)?;
        out.loss += step.loss;
        out.transitions += 1;
        let mut best = indices[0];
        for &i in &indices {
            if step.probabilities[i] > step.probabilities[best]
                || (step.probabilities[i] == step.probabilities[best] && i < best)
            {
                best = i;
            }
        }
        state.apply(&inventory[best], constraints)?;
        if state.is_finished() {
            pass.finish();
            return Ok(out);
        }
    }
    Err(Error::Oracle(format!("step bound exceeded on {}", gold.id)))
}

/// A greedy parse.
#[derive(Clone, Debug)]
pub struct Parsed {
    pub graph: UnifiedGraph,
    pub transitions: usize,
    /// The step bound was hit or no transition was legal; parentless
    /// nodes were attached to the root.
    pub truncated: bool,
}

/// Greedy decoder for one task of a model.
pub struct Parser<'a> {
    model: &'a Model,
    task: String,
    constraints: ConstraintSet,
    fallback_label: String,
}

impl<'a> Parser<'a> {
    pub fn new(model: &'a Model, task: &str) -> Result<Self> {
        let spec = model.task(task)?;
        let fallback_label = spec
            .inventory
            .iter()
            .find_map(|t| t.label.clone())
            .unwrap_or_else(|| NO_LABEL.to_string());
        Ok(Parser {
            model,
            task: task.to_string(),
            constraints: spec.constraints()?,
            fallback_label,
        })
    }

    /// Applies the most probable legal transition until `Finish`, for at
    /// most `10 n + 20` steps. Ties go to the lower inventory index.
    pub fn parse(&self, id: &str, tokens: &[Token]) -> Result<Parsed> {
        let mut state = ParserState::new(id, tokens.to_vec())?;
        let mut pass = self.model.pass(&self.task, tokens, None)?;
        let inventory: &[Transition] = pass.inventory();
        let extractor = pass.extractor();
        let bound = 10 * tokens.len() + 20;
        let mut transitions = 0;
        while transitions < bound && !state.is_finished() {
            let probs = pass.probabilities(&extractor.extract(&state))?;
            let mut best: Option<usize> = None;
            for (i, t) in inventory.iter().enumerate() {
                if best.is_none_or(|b| probs[i] > probs[b]) && state.legal(t, &self.constraints) {
                    best = Some(i);
                }
            }
            let Some(best) = best else { break };
            state.apply(&inventory[best], &self.constraints)?;
            transitions += 1;
        }
        let truncated = !state.is_finished();
        if truncated {
            warn!("parse of {} stopped after {} transitions", id, transitions);
            state.attach_orphans(&self.fallback_label);
        }
        Ok(Parsed {
            graph: state.into_graph(),
            transitions,
            truncated,
        })
    }

    /// Parses every sentence of `inputs` (their edges are ignored), in
    /// parallel over `jobs` threads (0 = all cores). Output order follows
    /// the input.
    pub fn parse_all(&self, inputs: &[UnifiedGraph], jobs: usize) -> Result<Vec<Parsed>> {
        let one = |g: &UnifiedGraph| self.parse(&g.id, g.tokens());
        if jobs == 1 {
            return inputs.iter().map(one).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| inputs.par_iter().map(one).collect())
    }
}

/// A task's training corpus.
#[derive(Clone, Debug)]
pub struct TaskCorpus {
    pub task: String,
    pub train: Vec<UnifiedGraph>,
    /// Multiplies this task's loss.
    pub loss_weight: f64,
}

/// Progress after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: &'static str,
    /// Mean loss per transition.
    pub loss: f64,
    pub transitions: usize,
    pub dev: Scores,
    pub dev_average_f1: f64,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    /// The model after the best epoch, or the initial model if no epoch
    /// ran.
    pub model: Model,
    /// 0 for the initial model.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Options of [`train`] beyond the schedule.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub schedule: Schedule,
    pub seed: u64,
    /// Threads for dev parsing (0 = all cores).
    pub jobs: usize,
    /// The best model is written here as `best.ckpt` whenever it changes.
    pub checkpoint_dir: Option<PathBuf>,
}

/// Drops training graphs the oracle cannot reproduce.
fn oracle_filter(model: &Model, corpus: &TaskCorpus) -> Result<Vec<UnifiedGraph>> {
    let constraints = model.task(&corpus.task)?.constraints()?;
    let mut kept = Vec::with_capacity(corpus.train.len());
    for g in &corpus.train {
        match oracle_parse(g, &constraints) {
            Ok(_) => kept.push(g.clone()),
            Err(e) => warn!("skipping {} for task {}: {}", g.id, corpus.task, e),
        }
    }
    Ok(kept)
}

/// Scores the model's main-task parses of `dev`, labeled if the main task
/// is labeled.
pub fn evaluate_dev(model: &Model, dev: &[UnifiedGraph], jobs: usize) -> Result<Scores> {
    let main = model.main_task();
    let parser = Parser::new(model, &main.name)?;
    let parsed: Vec<UnifiedGraph> = parser
        .parse_all(dev, jobs)?
        .into_iter()
        .map(|p| p.graph)
        .collect();
    Ok(corpus_score(&parsed, dev, main.labeled)?.total)
}

/// Trains `model` and returns the epoch whose dev score is highest, ties
/// going to the earliest epoch.
pub fn train(
    mut model: Model,
    corpora: &[TaskCorpus],
    dev: &[UnifiedGraph],
    options: &TrainOptions,
) -> Result<Outcome> {
    let schedule = &options.schedule;
    let main_name = model.main_task().name.clone();
    let main = corpora
        .iter()
        .position(|c| c.task == main_name)
        .ok_or_else(|| Error::Config(format!("no training corpus for main task {}", main_name)))?;
    if dev.is_empty() {
        return Err(Error::Empty("dev corpus"));
    }
    let mut data = Vec::with_capacity(corpora.len());
    let mut constraints = Vec::with_capacity(corpora.len());
    for c in corpora {
        data.push(oracle_filter(&model, c)?);
        constraints.push(model.task(&c.task)?.constraints()?);
    }
    let sizes: Vec<usize> = data.iter().map(Vec::len).collect();
    let mut sampler = EpochSampler::new(&sizes, main)?;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(options.seed);
    dropout_rng.set_stream(1);

    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::new();
    let mut optimizer = schedule.optimizer(1);
    for epoch in 1..=2 * schedule.epochs {
        if epoch == schedule.epochs + 1 {
            optimizer = schedule.optimizer(epoch);
        }
        let mut grads = Gradients::new();
        let mut pending = 0;
        let (mut loss, mut transitions) = (0.0, 0);
        for (task, sentence) in sampler.epoch(&mut sample_rng) {
            let c = &corpora[task];
            let gold = &data[task][sentence];
            let s = if c.loss_weight == 1.0 {
                train_sentence(
                    &model,
                    &c.task,
                    &constraints[task],
                    gold,
                    &mut grads,
                    Some(&mut dropout_rng),
                )?
            } else {
                let mut own = Gradients::new();
                let s = train_sentence(
                    &model,
                    &c.task,
                    &constraints[task],
                    gold,
                    &mut own,
                    Some(&mut dropout_rng),
                )?;
                grads.add_scaled(&own, c.loss_weight);
                s
            };
            loss += s.loss * c.loss_weight;
            transitions += s.transitions;
            pending += s.transitions;
            if pending >= schedule.minibatch {
                optimizer.step(model.params_mut(), &grads)?;
                grads.clear();
                pending = 0;
            }
        }
        if pending > 0 {
            optimizer.step(model.params_mut(), &grads)?;
        }
        let scores = evaluate_dev(&model, dev, options.jobs)?;
        let record = EpochRecord {
            epoch,
            phase: schedule.phase(epoch),
            loss: loss / transitions.max(1) as f64,
            transitions,
            dev: scores,
            dev_average_f1: scores.average_f1(),
        };
        info!(
            "epoch {} {} loss {:.4} dev primary P {:.4} R {:.4} F1 {:.4} remote P {:.4} R {:.4} F1 {:.4}",
            epoch,
            record.phase,
            record.loss,
            scores.primary.precision(),
            scores.primary.recall(),
            scores.primary.f1(),
            scores.remote.precision(),
            scores.remote.recall(),
            scores.remote.f1(),
        );
        let avg = record.dev_average_f1;
        history.push(record);
        if avg > best.2 {
            best = (model.clone(), epoch, avg);
            if let Some(dir) = &options.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                model.save_file(&dir.join("best.ckpt"))?;
            }
        }
        if schedule.stop_at.is_some_and(|t| avg >= t) {
            break;
        }
    }
    Ok(Outcome {
        model: best.0,
        best_epoch: best.1,
        history,
    })
}

/// One task of a training configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    /// Task configuration file (TOML or JSON).
    pub config: PathBuf,
    pub train: PathBuf,
    /// Required for the main task.
    #[serde(default)]
    pub dev: Option<PathBuf>,
    /// Corpus format; guessed from the extension if absent.
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub main: bool,
    #[serde(default = "one")]
    pub loss_weight: f64,
    /// Feature template file; the default templates otherwise.
    #[serde(default)]
    pub features: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

/// A training run as read from TOML. Relative paths are resolved against
/// the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: usize,
    pub checkpoint_dir: PathBuf,
    /// Architecture; the single-task or multitask preset by task count if
    /// absent.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
    #[serde(default)]
    pub pretrained_limit: Option<usize>,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskEntry>,
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            c.resolve(dir);
        }
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        if self.schedule.epochs == 0 {
            return Err(Error::Config("schedule.epochs must be at least 1".into()));
        }
        if self.schedule.minibatch == 0 {
            return Err(Error::Config(
                "schedule.minibatch must be at least 1".into(),
            ));
        }
        let mains: Vec<&TaskEntry> = self.tasks.iter().filter(|t| t.main).collect();
        if mains.len() != 1 {
            return Err(Error::Config(format!(
                "exactly one main task is required, found {}",
                mains.len()
            )));
        }
        if mains[0].dev.is_none() {
            return Err(Error::Config("the main task needs a dev corpus".into()));
        }
        Ok(())
    }

    fn resolve(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.checkpoint_dir);
        if let Some(p) = &mut self.pretrained {
            fix(p);
        }
        for t in &mut self.tasks {
            fix(&mut t.config);
            fix(&mut t.train);
            if let Some(p) = &mut t.dev {
                fix(p);
            }
            if let Some(p) = &mut t.features {
                fix(p);
            }
        }
    }
}

/// Reads a corpus in the given or guessed format.
pub fn read_corpus(path: &Path, format: Option<&str>) -> Result<Vec<UnifiedGraph>> {
    let format = match format {
        Some(f) => f.parse()?,
        None => Format::from_path(path).unwrap_or(Format::Unified),
    };
    read_unified(format, &std::fs::read_to_string(path)?)
}

/// Loads everything a configuration names, builds the model and trains
/// it. The best model is also written to `checkpoint_dir/best.ckpt`.
pub fn run(config: &TrainConfig) -> Result<Outcome> {
    let mut tasks = Vec::new();
    let mut corpora = Vec::new();
    let mut dev = Vec::new();
    for entry in &config.tasks {
        let task = TaskConfig::load(&entry.config)?;
        let mut spec = ModelTask::new(&task, entry.main);
        if let Some(f) = &entry.features {
            spec.features = FeatureConfig::load(f)?;
        }
        let train = read_corpus(&entry.train, entry.format.as_deref())?;
        info!("task {}: {} training sentences", task.name, train.len());
        if entry.main {
            let path = entry.dev.as_ref().expect("checked");
            dev = read_corpus(path, entry.format.as_deref())?;
        }
        corpora.push(TaskCorpus {
            task: task.name.clone(),
            train,
            loss_weight: entry.loss_weight,
        });
        tasks.push(spec);
    }
    let mut vocabs = Vocabularies::from_graphs(corpora.iter().flat_map(|c| &c.train));
    let pretrained = match &config.pretrained {
        Some(p) => Some(Pretrained::load(p, config.pretrained_limit)?),
        None => None,
    };
    if let Some(p) = &pretrained {
        vocabs.add_words(p.vectors.keys().map(String::as_str));
    }
    let model_config = config.model.clone().unwrap_or_else(|| {
        if tasks.len() == 1 {
            ModelConfig::single_task()
        } else {
            ModelConfig::multitask()
        }
    });
    let mut model = Model::new(model_config, tasks, vocabs, config.seed)?;
    if let Some(p) = &pretrained {
        let n = model.set_pretrained(p)?;
        info!("{} pre-trained vectors loaded", n);
    }
    let options = TrainOptions {
        schedule: config.schedule.clone(),
        seed: config.seed,
        jobs: config.jobs,
        checkpoint_dir: Some(config.checkpoint_dir.clone()),
    };
    let outcome = train(model, &corpora, &dev, &options)?;
    std::fs::create_dir_all(&config.checkpoint_dir)?;
    outcome
        .model
        .save_file(&config.checkpoint_dir.join("best.ckpt"))?;
    let history =
        serde_json::to_string_pretty(&outcome.history).map_err(|e| Error::Model(e.to_string()))?;
    std::fs::write(config.checkpoint_dir.join("history.json"), history)?;
    Ok(outcome)
}
