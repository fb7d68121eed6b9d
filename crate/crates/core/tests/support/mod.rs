//! Shared test helpers: a random valid-graph generator and an exhaustive
//! search over transition sequences that does not use the oracle.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unidag::graph::{Node, NodeId, Token, UnifiedGraph};
use unidag::transition::{ConstraintSet, ParserState, Transition, TransitionKind};

pub const LABELS: [&str; 5] = ["A", "C", "E", "H", "P"];

pub fn tokens(n: usize) -> Vec<Token> {
    (1..=n).map(|i| Token::new(i, format!("w{}", i))).collect()
}

/// Knobs for [`random_graph`].
#[derive(Clone, Copy, Debug)]
pub struct GraphShape {
    pub max_tokens: usize,
    pub max_remotes: usize,
    /// Probability that a group is built from scattered units.
    pub discontinuity: f64,
    /// Probability of a unary group.
    pub unary: f64,
    /// Remote edges never point at terminals.
    pub single_parent_terminals: bool,
}

impl Default for GraphShape {
    fn default() -> Self {
        GraphShape {
            max_tokens: 20,
            max_remotes: 3,
            discontinuity: 0.15,
            unary: 0.15,
            single_parent_terminals: false,
        }
    }
}

/// A random well-formed graph: primary tree built by grouping units
/// bottom-up, plus a few acyclic remote edges.
pub fn random_graph(rng: &mut ChaCha8Rng, shape: GraphShape, id: &str) -> UnifiedGraph {
    let n = rng.gen_range(1..=shape.max_tokens);
    let mut g = UnifiedGraph::new(id, tokens(n));
    let mut units: Vec<NodeId> = (1..=n).map(NodeId).collect();
    let label = |rng: &mut ChaCha8Rng| *LABELS.choose(rng).unwrap();

    let groups = rng.gen_range(0..=2 * n);
    for _ in 0..groups {
        if units.len() < 2 && !rng.gen_bool(shape.unary) {
            break;
        }
        let size = if rng.gen_bool(shape.unary) {
            1
        } else {
            rng.gen_range(2..=3.min(units.len()).max(2))
                .min(units.len())
        };
        let picked: Vec<usize> = if rng.gen_bool(shape.discontinuity) {
            let mut idx: Vec<usize> = (0..units.len()).collect();
            idx.shuffle(rng);
            let mut idx = idx[..size].to_vec();
            idx.sort_unstable();
            idx
        } else {
            let start = rng.gen_range(0..=units.len() - size);
            (start..start + size).collect()
        };
        let parent = g.add_node(Node::nonterminal());
        for &i in &picked {
            let l = label(rng);
            g.add_edge(parent, units[i], l, false).unwrap();
        }
        let first = picked[0];
        for &i in picked.iter().rev() {
            units.remove(i);
        }
        units.insert(first, parent);
    }
    for u in units {
        let l = label(rng);
        g.add_edge(g.root(), u, l, false).unwrap();
    }

    let nonterminals: Vec<NodeId> = g
        .nodes()
        .filter(|(id, node)| *id != g.root() && !node.is_terminal())
        .map(|(id, _)| id)
        .collect();
    if !nonterminals.is_empty() {
        let remotes = rng.gen_range(0..=shape.max_remotes);
        for _ in 0..remotes * 4 {
            if g.edges().iter().filter(|e| e.remote).count() >= remotes {
                break;
            }
            let parent = *nonterminals.choose(rng).unwrap();
            let child = NodeId(rng.gen_range(1..g.node_count()));
            if shape.single_parent_terminals && g.node(child).is_terminal() {
                continue;
            }
            if child == parent
                || g.reaches(child, parent)
                || g.outgoing(parent).any(|e| e.child == child)
            {
                continue;
            }
            let l = label(rng);
            g.add_edge(parent, child, l, true).unwrap();
        }
    }
    assert!(g.is_valid(), "generator produced {:?}", g.validate());
    g
}

/// `graph` with every token text replaced by `word(position)`.
pub fn reword(graph: &UnifiedGraph, mut word: impl FnMut(usize) -> String) -> UnifiedGraph {
    let toks = graph
        .tokens()
        .iter()
        .map(|t| Token::new(t.position, word(t.position)))
        .collect();
    UnifiedGraph::from_parts(
        graph.id.clone(),
        toks,
        graph.nodes().map(|(_, n)| n.clone()).collect(),
        graph.edges().to_vec(),
        graph.root(),
    )
    .unwrap()
}

/// Random graphs over words drawn from a small vocabulary.
pub fn synthetic_corpus(n: usize, max_tokens: usize, seed: u64) -> Vec<UnifiedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = GraphShape {
        max_tokens,
        ..GraphShape::default()
    };
    (0..n)
        .map(|i| {
            let g = random_graph(&mut rng, shape, &format!("s{}", i));
            let mut words = ChaCha8Rng::seed_from_u64(seed ^ (i as u64 + 1));
            reword(&g, |_| format!("v{}", words.gen_range(0..40)))
        })
        .collect()
}

/// Every transition that could be legal for a labeled task over `labels`.
pub fn candidates(labels: &[String]) -> Vec<Transition> {
    let mut out = vec![
        Transition::shift(),
        Transition::reduce(),
        Transition::swap(),
        Transition::finish(),
    ];
    for kind in TransitionKind::ALL
        .iter()
        .copied()
        .filter(|k| k.creates_edge())
    {
        for l in labels {
            out.push(Transition::labeled(kind, l.clone()));
        }
    }
    out
}

pub type Key = String;

pub fn key(state: &ParserState) -> Key {
    let edges: Vec<_> = state
        .graph()
        .edges()
        .iter()
        .map(|e| (e.parent.0, e.child.0, e.label.clone(), e.remote))
        .collect();
    let idx: Vec<String> = (0..state.graph().node_count())
        .map(|i| format!("{}", state.swap_index(NodeId(i))))
        .collect();
    format!(
        "{:?}|{:?}|{:?}|{:?}|{}",
        state.stack(),
        state.buffer(),
        edges,
        idx,
        state.is_finished()
    )
}

/// True if the partial graph maps injectively into `gold`, terminals by
/// position and root to root, with every edge landing on a gold edge of
/// the same label and type, and every unbuilt gold edge between nodes that
/// are still on the stack or buffer (or not created yet). Plain
/// backtracking.
pub fn embeds(parser: &ParserState, gold: &UnifiedGraph) -> bool {
    let state = parser.graph();
    let n = state.node_count();
    let alive: BTreeSet<usize> = parser
        .stack()
        .iter()
        .chain(parser.buffer().iter())
        .map(|id| id.0)
        .collect();
    let mut fixed: HashMap<usize, usize> = HashMap::new();
    fixed.insert(state.root().0, gold.root().0);
    for (id, node) in state.nodes() {
        if let Some(p) = node.terminal_position {
            fixed.insert(id.0, gold.terminal(p).unwrap().0);
        }
    }
    let gold_edges: BTreeSet<(usize, usize, String, bool)> = gold
        .edges()
        .iter()
        .map(|e| (e.parent.0, e.child.0, e.label.clone(), e.remote))
        .collect();
    let free: Vec<usize> = (0..n).filter(|i| !fixed.contains_key(i)).collect();
    let gold_free: Vec<usize> = gold
        .nodes()
        .filter(|(id, node)| *id != gold.root() && !node.is_terminal())
        .map(|(id, _)| id.0)
        .collect();

    fn consistent(
        map: &HashMap<usize, usize>,
        state: &UnifiedGraph,
        gold_edges: &BTreeSet<(usize, usize, String, bool)>,
    ) -> bool {
        state
            .edges()
            .iter()
            .all(|e| match (map.get(&e.parent.0), map.get(&e.child.0)) {
                (Some(&p), Some(&c)) => gold_edges.contains(&(p, c, e.label.clone(), e.remote)),
                _ => true,
            })
    }

    // Every unbuilt gold edge must still be buildable: mapped endpoints
    // have to be alive.
    let completable = |map: &HashMap<usize, usize>| {
        let inverse: HashMap<usize, usize> = map.iter().map(|(s, g)| (*g, *s)).collect();
        let built: BTreeSet<(usize, usize, String, bool)> = state
            .edges()
            .iter()
            .map(|e| (map[&e.parent.0], map[&e.child.0], e.label.clone(), e.remote))
            .collect();
        gold_edges.iter().filter(|e| !built.contains(*e)).all(|e| {
            [e.0, e.1]
                .iter()
                .all(|g| inverse.get(g).is_none_or(|s| alive.contains(s)))
        })
    };

    #[allow(clippy::too_many_arguments)]
    fn search(
        k: usize,
        free: &[usize],
        gold_free: &[usize],
        map: &mut HashMap<usize, usize>,
        used: &mut BTreeSet<usize>,
        state: &UnifiedGraph,
        gold_edges: &BTreeSet<(usize, usize, String, bool)>,
        done: &dyn Fn(&HashMap<usize, usize>) -> bool,
    ) -> bool {
        if !consistent(map, state, gold_edges) {
            return false;
        }
        if k == free.len() {
            return done(map);
        }
        for &g in gold_free {
            if used.contains(&g) {
                continue;
            }
            map.insert(free[k], g);
            used.insert(g);
            if search(k + 1, free, gold_free, map, used, state, gold_edges, done) {
                return true;
            }
            map.remove(&free[k]);
            used.remove(&g);
        }
        false
    }

    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut map = fixed;
    search(
        0,
        &free,
        &gold_free,
        &mut map,
        &mut used,
        state,
        &gold_edges,
        &completable,
    )
}

/// Exhaustive reachability of the gold graph from parser states, found
/// by depth-first search over every legal transition.
pub struct Reachability<'a> {
    gold: &'a UnifiedGraph,
    constraints: &'a ConstraintSet,
    candidates: Vec<Transition>,
    memo: HashMap<Key, bool>,
    target: unidag::graph::GraphSignature,
}

impl<'a> Reachability<'a> {
    pub fn new(gold: &'a UnifiedGraph, constraints: &'a ConstraintSet) -> Self {
        let labels: BTreeSet<String> = gold.edges().iter().map(|e| e.label.clone()).collect();
        Reachability {
            gold,
            constraints,
            candidates: candidates(&labels.into_iter().collect::<Vec<_>>()),
            memo: HashMap::new(),
            target: gold.signature(),
        }
    }

    pub fn legal_moves(&self, state: &ParserState) -> Vec<Transition> {
        self.candidates
            .iter()
            .filter(|t| state.legal(t, self.constraints))
            .cloned()
            .collect()
    }

    /// Can a finished state with exactly the gold graph be reached?
    pub fn reaches_gold(&mut self, state: &ParserState) -> bool {
        if state.is_finished() {
            return state.graph().signature() == self.target;
        }
        let k = key(state);
        if let Some(&v) = self.memo.get(&k) {
            return v;
        }
        // Provisional value breaks cycles, which the transition system
        // should not have anyway.
        self.memo.insert(k.clone(), false);
        let mut result = false;
        if embeds(state, self.gold) {
            for t in self.legal_moves(state) {
                let mut next = state.clone();
                next.apply_unchecked(&t);
                if self.reaches_gold(&next) {
                    result = true;
                    break;
                }
            }
        }
        self.memo.insert(k, result);
        result
    }

    pub fn states_explored(&self) -> usize {
        self.memo.len()
    }

    /// Every state reachable from the initial one through states from
    /// which gold is still reachable.
    pub fn good_states(&mut self) -> Vec<ParserState> {
        let init = ParserState::for_graph(self.gold).unwrap();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut stack = vec![init];
        while let Some(s) = stack.pop() {
            if !seen.insert(key(&s)) || !self.reaches_gold(&s) {
                continue;
            }
            if !s.is_finished() {
                for t in self.legal_moves(&s) {
                    let mut next = s.clone();
                    next.apply_unchecked(&t);
                    stack.push(next);
                }
            }
            out.push(s);
        }
        out
    }
}

pub mod models {
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use unidag::features::{FeatureConfig, FeatureValue, Row};
    use unidag::graph::UnifiedGraph;
    use unidag::model::{
        Dims, DropoutConfig, Gradients, Layers, Model, ModelConfig, ModelTask, Training,
        Vocabularies,
    };
    use unidag::oracle::{oracle_parse_with, priority_choice};
    use unidag::transition::{ConstraintSet, TaskConfig};

    pub fn task(name: &str, labeled: bool) -> TaskConfig {
        if labeled {
            TaskConfig::labeled(name, super::LABELS)
        } else {
            TaskConfig::unlabeled(name)
        }
    }

    pub fn dims(d: usize) -> Dims {
        Dims {
            word: d,
            pretrained: d,
            pos: d,
            dep: d,
            ne: d,
            punct: d,
            action: d,
            label: d,
            node_label: d,
            category: d,
            shape: d,
            prefix: d,
            suffix: d,
        }
    }

    /// A feature subset covering every slot type.
    pub fn small_features() -> FeatureConfig {
        let row = |targets: &[&str], codes: &str| Row {
            targets: targets.iter().map(|s| s.to_string()).collect(),
            codes: codes.to_string(),
        };
        FeatureConfig {
            rows: vec![
                row(&["s0"], "wtdeh#CE"),
                row(&["s1", "b0"], "w^"),
                row(&["s0l"], "we"),
                row(&["s0->s1"], "xed"),
                row(&["a0"], "eA"),
                row(&["node_ratio"], ""),
            ],
            priority: FeatureConfig::default().priority,
        }
    }

    /// Shared and main encoders of one layer each, tiny widths, no dropout.
    pub fn tiny_config() -> ModelConfig {
        ModelConfig {
            dims: dims(1),
            shared_encoder: Some(Layers { layers: 1, dim: 2 }),
            main_encoder: Some(Layers { layers: 2, dim: 2 }),
            main_mlp: Layers { layers: 2, dim: 3 },
            aux_mlp: Layers { layers: 1, dim: 3 },
            dropout: DropoutConfig::none(),
            embedding_range: 0.5,
        }
    }

    /// Main labeled task "main" and unlabeled "aux".
    pub fn multitask_model(
        config: ModelConfig,
        features: FeatureConfig,
        graphs: &[UnifiedGraph],
        seed: u64,
    ) -> Model {
        let mut main = ModelTask::new(&task("main", true), true);
        main.features = features.clone();
        let mut aux = ModelTask::new(&task("aux", false), false);
        aux.features = features;
        Model::new(
            config,
            vec![main, aux],
            Vocabularies::from_graphs(graphs),
            seed,
        )
        .unwrap()
    }

    pub fn graphs(n: usize, seed: u64, max_tokens: usize) -> Vec<UnifiedGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = super::GraphShape {
            max_tokens,
            ..Default::default()
        };
        (0..n)
            .map(|i| super::random_graph(&mut rng, shape, &format!("g{}", i)))
            .collect()
    }

    pub type Steps = Vec<(Vec<FeatureValue>, Vec<usize>)>;

    /// Feature vectors and optimal inventory indices along the oracle path.
    pub fn oracle_steps(model: &Model, name: &str, gold: &UnifiedGraph) -> Steps {
        let spec = model.task(name).unwrap();
        let constraints = ConstraintSet::for_task(&task(name, spec.labeled)).unwrap();
        let extractor = model.extractor(name).unwrap();
        let mut steps = Vec::new();
        oracle_parse_with(gold, &constraints, |state, optimal| {
            let idx = optimal
                .iter()
                .map(|t| spec.inventory.iter().position(|x| x == t).unwrap())
                .collect();
            steps.push((extractor.extract(state), idx));
            priority_choice(state, optimal)
        })
        .unwrap();
        steps
    }

    pub fn total_loss(
        model: &Model,
        name: &str,
        gold: &UnifiedGraph,
        steps: &Steps,
    ) -> (f64, Gradients) {
        let mut grads = Gradients::new();
        let mut pass = model
            .pass(
                name,
                gold.tokens(),
                Some(Training {
                    grads: &mut grads,
                    rng: None,
                }),
            )
            .unwrap();
        let mut total = 0.0;
        for (values, optimal) in steps {
            total += pass.train_step(values, optimal).unwrap().loss;
        }
        pass.finish();
        (total, grads)
    }

    pub fn gradient_check(
        model: &mut Model,
        name: &str,
        gold: &UnifiedGraph,
    ) -> Vec<(String, f64)> {
        let steps = oracle_steps(model, name, gold);
        let (_, grads) = total_loss(model, name, gold, &steps);
        let names: Vec<String> = model.params().names().map(String::from).collect();
        let eps = 1e-5;
        let mut report = Vec::new();
        for pname in names {
            let shape = model.params().get(&pname).raw_dim();
            let analytic = grads
                .get(&pname)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(shape));
            let mut numeric = Array2::<f64>::zeros(shape);
            for idx in ndarray::indices(shape) {
                let original = model.params().get(&pname)[idx];
                model.params_mut().get_mut(&pname).unwrap()[idx] = original + eps;
                let plus = total_loss(model, name, gold, &steps).0;
                model.params_mut().get_mut(&pname).unwrap()[idx] = original - eps;
                let minus = total_loss(model, name, gold, &steps).0;
                model.params_mut().get_mut(&pname).unwrap()[idx] = original;
                numeric[idx] = (plus - minus) / (2.0 * eps);
            }
            let diff = (&analytic - &numeric).mapv(|x| x * x).sum().sqrt();
            let scale =
                analytic.mapv(|x| x * x).sum().sqrt() + numeric.mapv(|x| x * x).sum().sqrt();
            let rel = if scale < 1e-10 { diff } else { diff / scale };
            report.push((pname, rel));
        }
        report
    }

    /// Single labeled task "main" sized to overfit a small corpus quickly.
    pub fn overfit_model(corpus: &[UnifiedGraph]) -> Model {
        let config = ModelConfig {
            dims: dims(8),
            shared_encoder: None,
            main_encoder: Some(Layers { layers: 2, dim: 32 }),
            main_mlp: Layers { layers: 2, dim: 50 },
            aux_mlp: Layers { layers: 1, dim: 50 },
            dropout: DropoutConfig::none(),
            embedding_range: 0.1,
        };
        let mut t = ModelTask::new(&task("main", true), true);
        t.features = FeatureConfig::default();
        Model::new(config, vec![t], Vocabularies::from_graphs(corpus), 7).unwrap()
    }
}
