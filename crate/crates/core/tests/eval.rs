mod support;

use std::collections::{BTreeMap, BTreeSet};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{random_graph, tokens, GraphShape};
use unidag::convert::{from_bilexical, read_conllu};
use unidag::eval::{corpus_score, l1, l1_distance, scheme_overlap, score, word_distribution};
use unidag::graph::{Node, NodeId, Token, UnifiedGraph};

/// Root -> unit over all tokens -> each terminal, labeled by `labels`.
fn flat(id: &str, labels: &[&str]) -> UnifiedGraph {
    let mut g = UnifiedGraph::new(id, tokens(labels.len()));
    let u = g.add_node(Node::nonterminal());
    g.add_edge(g.root(), u, "H", false).unwrap();
    for (i, l) in labels.iter().enumerate() {
        g.add_edge(u, NodeId(i + 1), *l, false).unwrap();
    }
    g
}

/// Yield by explicit traversal of primary edges, independent of the
/// library's own computation.
fn yield_of(g: &UnifiedGraph, node: NodeId) -> Vec<usize> {
    let mut out = BTreeSet::new();
    let mut todo = vec![node];
    while let Some(n) = todo.pop() {
        if let Some(p) = g.node(n).terminal_position {
            out.insert(p);
        }
        for e in g.edges().iter().filter(|e| e.parent == n && !e.remote) {
            todo.push(e.child);
        }
    }
    out.into_iter().collect()
}

/// Matching by repeated removal from a list.
fn naive_counts(
    pred: &UnifiedGraph,
    gold: &UnifiedGraph,
    labeled: bool,
    remote: bool,
) -> (usize, usize, usize) {
    let items = |g: &UnifiedGraph| -> Vec<(Vec<usize>, String)> {
        g.edges()
            .iter()
            .filter(|e| e.remote == remote)
            .map(|e| {
                (
                    yield_of(g, e.child),
                    if labeled {
                        e.label.clone()
                    } else {
                        String::new()
                    },
                )
            })
            .collect()
    };
    let p = items(pred);
    let mut g = items(gold);
    let (np, ng) = (p.len(), g.len());
    let mut matched = 0;
    for x in p {
        if let Some(i) = g.iter().position(|y| *y == x) {
            g.remove(i);
            matched += 1;
        }
    }
    (matched, np, ng)
}

#[test]
fn identical_graphs_score_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let g = random_graph(&mut rng, GraphShape::default(), &format!("g{}", i));
        for labeled in [true, false] {
            let s = score(&g, &g, labeled).unwrap();
            assert_eq!(s.primary.f1(), 1.0);
            assert_eq!(s.remote.f1(), 1.0);
        }
    }
}

#[test]
fn two_of_three_edges_match() {
    // Gold: H {1,2}, A {1}, P {2}.
    let gold = flat("s", &["A", "P"]);
    assert_eq!(gold.edges().len(), 3);
    // Prediction: H {1,2}, A {1}, D {2}.
    let pred = flat("s", &["A", "D"]);
    let s = score(&pred, &gold, true).unwrap();
    assert_eq!(
        (s.primary.matched, s.primary.predicted, s.primary.gold),
        (2, 3, 3)
    );
    for v in [s.primary.precision(), s.primary.recall(), s.primary.f1()] {
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-12);
    }
    // Unlabeled, the label mismatch no longer matters.
    assert_eq!(score(&pred, &gold, false).unwrap().primary.f1(), 1.0);

    // A deeper prediction: H {1,2}, A {1}, P {2}, C {2}.
    let mut deep = UnifiedGraph::new("s", tokens(2));
    let u = deep.add_node(Node::nonterminal());
    deep.add_edge(deep.root(), u, "H", false).unwrap();
    deep.add_edge(u, NodeId(1), "A", false).unwrap();
    let v = deep.add_node(Node::nonterminal());
    deep.add_edge(u, v, "P", false).unwrap();
    deep.add_edge(v, NodeId(2), "C", false).unwrap();
    let s = score(&deep, &gold, true).unwrap();
    assert_eq!(
        (s.primary.matched, s.primary.predicted, s.primary.gold),
        (3, 4, 3)
    );
    assert_eq!(
        (s.primary.matched, s.primary.predicted, s.primary.gold),
        naive_counts(&deep, &gold, true, false)
    );
}

#[test]
fn remote_edges_form_their_own_partition() {
    // A second scene sharing token 1 through a remote edge.
    let mut gold = flat("s", &["A", "P"]);
    let w = gold.add_node(Node::nonterminal());
    gold.add_edge(gold.root(), w, "H", false).unwrap();
    gold.add_edge(w, NodeId(1), "A", true).unwrap();
    let s = score(&gold, &gold, true).unwrap();
    assert_eq!(s.remote.gold, 1);
    assert_eq!(s.remote.f1(), 1.0);

    let mut pred = flat("s", &["A", "P"]);
    let w = pred.add_node(Node::nonterminal());
    pred.add_edge(pred.root(), w, "H", false).unwrap();
    let s = score(&pred, &gold, true).unwrap();
    assert_eq!(
        (s.remote.matched, s.remote.predicted, s.remote.gold),
        (0, 0, 1)
    );
    assert!(s.remote.degenerate());
    assert_eq!(s.remote.precision(), 0.0);
    assert_eq!(s.remote.recall(), 0.0);
    assert_eq!(s.remote.f1(), 0.0);
}

#[test]
fn token_mismatch_is_an_error() {
    let a = flat("s", &["A", "P"]);
    let b = flat("s", &["A", "P", "D"]);
    assert!(score(&a, &b, true).is_err());
    let mut c = UnifiedGraph::new("s", vec![Token::new(1, "x"), Token::new(2, "y")]);
    c.add_edge(c.root(), NodeId(1), "A", false).unwrap();
    assert!(score(&a, &c, true).is_err());
}

#[test]
fn pooled_counts_over_a_corpus() {
    let gold = vec![flat("a", &["A", "P"]), flat("b", &["A", "P", "D"])];
    // Perfect first sentence, empty prediction for the second.
    let pred = vec![gold[0].clone(), UnifiedGraph::new("b", tokens(3))];
    let s = corpus_score(&pred, &gold, true).unwrap();
    assert_eq!(s.total.primary.matched, 3);
    assert_eq!(s.total.primary.predicted, 3);
    assert_eq!(s.total.primary.gold, 7);
    assert_eq!(s.total.primary.precision(), 1.0);
    assert_abs_diff_eq!(s.total.primary.recall(), 3.0 / 7.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.total.primary.f1(), 0.6, epsilon = 1e-12);
    // A missing prediction counts like an empty one.
    let s2 = corpus_score(&pred[..1], &gold, true).unwrap();
    assert_eq!(s2.total, s.total);
    // Order does not matter.
    let rev: Vec<_> = pred.iter().rev().cloned().collect();
    assert_eq!(corpus_score(&rev, &gold, true).unwrap().total, s.total);
    // Identical corpora score 1.
    assert_eq!(
        corpus_score(&gold, &gold, true).unwrap().total.average_f1(),
        1.0
    );
    // A prediction without gold is rejected.
    assert!(corpus_score(&[flat("z", &["A"])], &gold, true).is_err());
}

#[test]
fn report_contains_every_partition() {
    let gold = vec![flat("a", &["A", "P"])];
    let s = corpus_score(&gold, &gold, true).unwrap();
    let json = s.to_json(true);
    assert_eq!(json["total"]["primary"]["f1"], 1.0);
    assert_eq!(json["total"]["remote"]["f1"], 1.0);
    assert_eq!(json["per_sentence"][0]["id"], "a");
    let table = s.to_string();
    assert!(table.contains("primary") && table.contains("remote"));
}

const UD: &str = "\
1\tJohn\tJohn\tPROPN\t_\t_\t2\tnsubj\t_\t_
2\tsleeps\tsleep\tVERB\t_\t_\t0\troot\t_\t_
3\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_

1\tDogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_
2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_
3\tloudly\tloudly\tADV\t_\t_\t2\tadvmod\t_\t_

1\tRun\trun\tVERB\t_\t_\t0\troot\t_\t_
2\t!\t!\tPUNCT\t_\t_\t1\tpunct\t_\t_

";

fn hand(id: &str, words: &[&str], groups: &[&[usize]]) -> UnifiedGraph {
    let toks = words
        .iter()
        .enumerate()
        .map(|(i, w)| Token::new(i + 1, *w))
        .collect();
    let mut g = UnifiedGraph::new(id, toks);
    let scene = g.add_node(Node::nonterminal());
    g.add_edge(g.root(), scene, "H", false).unwrap();
    for group in groups {
        if group.len() == 1 {
            g.add_edge(scene, NodeId(group[0]), "A", false).unwrap();
        } else {
            let u = g.add_node(Node::nonterminal());
            g.add_edge(scene, u, "P", false).unwrap();
            for &t in group.iter() {
                g.add_edge(u, NodeId(t), "C", false).unwrap();
            }
        }
    }
    g
}

#[test]
fn overlap_between_converted_trees_and_hand_hierarchy() {
    let mut ud: Vec<UnifiedGraph> = read_conllu(UD)
        .unwrap()
        .iter()
        .map(|g| from_bilexical(g).unwrap())
        .collect();
    for (i, g) in ud.iter_mut().enumerate() {
        g.id = format!("s{}", i + 1);
    }
    let gold = vec![
        hand("s1", &["John", "sleeps", "."], &[&[1], &[2], &[3]]),
        hand("s2", &["Dogs", "bark", "loudly"], &[&[1], &[2, 3]]),
        hand("s3", &["Run", "!"], &[&[1], &[2]]),
    ];
    let s = scheme_overlap(&ud, &gold).unwrap();
    let c = s.total.primary;
    assert_eq!((c.matched, c.predicted, c.gold), (11, 19, 12));
    assert_abs_diff_eq!(c.precision(), 11.0 / 19.0, epsilon = 1e-12);
    assert_abs_diff_eq!(c.recall(), 11.0 / 12.0, epsilon = 1e-12);
    assert_eq!(s.total.remote.f1(), 1.0);

    let back = scheme_overlap(&gold, &ud).unwrap().total.primary;
    assert_eq!(back.precision(), c.recall());
    assert_eq!(back.recall(), c.precision());
}

#[test]
fn l1_examples() {
    let a = vec![UnifiedGraph::new(
        "a",
        vec![Token::new(1, "a"), Token::new(2, "b")],
    )];
    let b = vec![UnifiedGraph::new("b", vec![Token::new(1, "a")])];
    let c = vec![UnifiedGraph::new("c", vec![Token::new(1, "c")])];
    assert_eq!(l1_distance(&a, &a, false).unwrap(), 0.0);
    assert_abs_diff_eq!(l1_distance(&a, &b, false).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(l1_distance(&b, &c, false).unwrap(), 2.0, epsilon = 1e-12);
    let upper = vec![UnifiedGraph::new("u", vec![Token::new(1, "A")])];
    assert_abs_diff_eq!(
        l1_distance(&upper, &b, false).unwrap(),
        2.0,
        epsilon = 1e-12
    );
    assert_eq!(l1_distance(&upper, &b, true).unwrap(), 0.0);
    assert!(l1_distance(&[], &b, false).is_err());
    let d = word_distribution(&a, false);
    assert_eq!(d["a"], 0.5);
}

fn distribution() -> impl Strategy<Value = BTreeMap<String, f64>> {
    prop::collection::btree_map("[a-e]", 1u32..20, 1..5).prop_map(|m| {
        let total: u32 = m.values().sum();
        m.into_iter()
            .map(|(k, v)| (k, v as f64 / total as f64))
            .collect()
    })
}

proptest! {
    #[test]
    fn l1_is_a_bounded_metric(p in distribution(), q in distribution(), r in distribution()) {
        let pq = l1(&p, &q);
        prop_assert!((pq - l1(&q, &p)).abs() < 1e-12);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&pq));
        prop_assert!(pq <= l1(&p, &r) + l1(&r, &q) + 1e-12);
        prop_assert_eq!(l1(&p, &p), 0.0);
        let same = p.len() == q.len() && p.iter().zip(&q).all(|((a, x), (b, y))| a == b && (x - y).abs() < 1e-15);
        prop_assert_eq!(pq < 1e-12, same);
    }

    #[test]
    fn scores_agree_with_naive_matching(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_graph(&mut rng, GraphShape { max_tokens: 6, ..GraphShape::default() }, "x");
        let mut b = random_graph(&mut rng, GraphShape { max_tokens: 6, ..GraphShape::default() }, "x");
        if b.tokens().len() != a.tokens().len() {
            b = UnifiedGraph::new("x", a.tokens().to_vec());
        }
        for labeled in [true, false] {
            let s = score(&a, &b, labeled).unwrap();
            for (remote, c) in [(false, s.primary), (true, s.remote)] {
                prop_assert_eq!((c.matched, c.predicted, c.gold), naive_counts(&a, &b, labeled, remote));
            }
            let t = score(&b, &a, labeled).unwrap();
            prop_assert_eq!(s.primary.precision(), t.primary.recall());
            prop_assert_eq!(s.primary.f1(), t.primary.f1());
        }
    }
}
