//! Graph scoring and corpus statistics.
//!
//! An edge is scored as the triple (terminal yield of its child, label,
//! remote flag). Predicted and gold edges are matched as multisets,
//! separately for primary and remote edges. Unlabeled scoring drops the
//! label from the triple.
//!
//! A precision or recall whose denominator is zero is 0 and marks the
//! score as degenerate, unless both the prediction and the gold standard
//! are empty, in which case every measure is 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UnifiedGraph;

/// Matched, predicted and gold edge counts of one partition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    fn ratio(&self, denominator: usize) -> f64 {
        if self.predicted == 0 && self.gold == 0 {
            1.0
        } else if denominator == 0 {
            0.0
        } else {
            self.matched as f64 / denominator as f64
        }
    }

    pub fn precision(&self) -> f64 {
        self.ratio(self.predicted)
    }

    pub fn recall(&self) -> f64 {
        self.ratio(self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Exactly one of the two sides is empty.
    pub fn degenerate(&self) -> bool {
        (self.predicted == 0) != (self.gold == 0)
    }

    pub fn add(&mut self, other: &Counts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn report(&self) -> Prf {
        Prf {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
            matched: self.matched,
            predicted: self.predicted,
            gold: self.gold,
            degenerate: self.degenerate(),
        }
    }
}

/// Precision, recall and F1 with the counts behind them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub primary: Counts,
    pub remote: Counts,
}

impl Scores {
    /// Unweighted mean of primary and remote F1.
    pub fn average_f1(&self) -> f64 {
        (self.primary.f1() + self.remote.f1()) / 2.0
    }

    pub fn add(&mut self, other: &Scores) {
        self.primary.add(&other.primary);
        self.remote.add(&other.remote);
    }
}

type EdgeKey = (Vec<usize>, String);

fn edge_multisets(graph: &UnifiedGraph, labeled: bool) -> Result<[BTreeMap<EdgeKey, usize>; 2]> {
    let mut yields = HashMap::new();
    let mut out = [BTreeMap::new(), BTreeMap::new()];
    for e in graph.edges() {
        if let std::collections::hash_map::Entry::Vacant(slot) = yields.entry(e.child) {
            let y: BTreeSet<usize> = graph.terminal_yield(e.child)?;
            slot.insert(y.into_iter().collect::<Vec<_>>());
        }
        let label = if labeled {
            e.label.clone()
        } else {
            String::new()
        };
        *out[e.remote as usize]
            .entry((yields[&e.child].clone(), label))
            .or_insert(0) += 1;
    }
    Ok(out)
}

fn match_counts(pred: &BTreeMap<EdgeKey, usize>, gold: &BTreeMap<EdgeKey, usize>) -> Counts {
    Counts {
        matched: pred
            .iter()
            .map(|(k, &n)| n.min(gold.get(k).copied().unwrap_or(0)))
            .sum(),
        predicted: pred.values().sum(),
        gold: gold.values().sum(),
    }
}

fn same_tokens(a: &UnifiedGraph, b: &UnifiedGraph) -> bool {
    a.tokens().len() == b.tokens().len()
        && a.tokens()
            .iter()
            .zip(b.tokens())
            .all(|(x, y)| x.text == y.text)
}

/// Scores one predicted graph against its gold graph.
pub fn score(pred: &UnifiedGraph, gold: &UnifiedGraph, labeled: bool) -> Result<Scores> {
    if !same_tokens(pred, gold) {
        return Err(Error::TokenMismatch(gold.id.clone()));
    }
    let [pp, pr] = edge_multisets(pred, labeled)?;
    let [gp, gr] = edge_multisets(gold, labeled)?;
    Ok(Scores {
        primary: match_counts(&pp, &gp),
        remote: match_counts(&pr, &gr),
    })
}

/// Pooled scores of a corpus, with the per-sentence scores they sum.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusScores {
    pub labeled: bool,
    pub total: Scores,
    /// In gold order.
    pub sentences: Vec<(String, Scores)>,
}

/// Micro-averaged scores. Predictions are matched to gold graphs by id; a
/// gold graph without prediction counts as an empty prediction, and a
/// prediction whose id is not in the gold corpus is an error.
pub fn corpus_score(
    pred: &[UnifiedGraph],
    gold: &[UnifiedGraph],
    labeled: bool,
) -> Result<CorpusScores> {
    let by_id: HashMap<&str, &UnifiedGraph> = pred.iter().map(|g| (g.id.as_str(), g)).collect();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    if let Some(extra) = by_id.keys().find(|id| !gold_ids.contains(*id)) {
        return Err(Error::Config(format!(
            "prediction {:?} has no gold graph",
            extra
        )));
    }
    let mut total = Scores::default();
    let mut sentences = Vec::with_capacity(gold.len());
    for g in gold {
        let s = match by_id.get(g.id.as_str()) {
            Some(p) => score(p, g, labeled)?,
            None => {
                let empty = UnifiedGraph::new(g.id.clone(), g.tokens().to_vec());
                score(&empty, g, labeled)?
            }
        };
        total.add(&s);
        sentences.push((g.id.clone(), s));
    }
    Ok(CorpusScores {
        labeled,
        total,
        sentences,
    })
}

/// Unlabeled agreement between two annotations of the same sentences,
/// taking `x` as prediction and `y` as gold. Only sentences present in
/// both are compared.
pub fn scheme_overlap(x: &[UnifiedGraph], y: &[UnifiedGraph]) -> Result<CorpusScores> {
    let ids: BTreeSet<&str> = x.iter().map(|g| g.id.as_str()).collect();
    let y: Vec<UnifiedGraph> = y
        .iter()
        .filter(|g| ids.contains(g.id.as_str()))
        .cloned()
        .collect();
    if y.is_empty() {
        return Err(Error::Empty("shared sentences"));
    }
    let keep: BTreeSet<&str> = y.iter().map(|g| g.id.as_str()).collect();
    let x: Vec<UnifiedGraph> = x
        .iter()
        .filter(|g| keep.contains(g.id.as_str()))
        .cloned()
        .collect();
    corpus_score(&x, &y, false)
}

#[derive(Serialize)]
struct PartitionReport {
    primary: Prf,
    remote: Prf,
    average_f1: f64,
}

impl From<&Scores> for PartitionReport {
    fn from(s: &Scores) -> Self {
        PartitionReport {
            primary: s.primary.report(),
            remote: s.remote.report(),
            average_f1: s.average_f1(),
        }
    }
}

impl CorpusScores {
    /// Machine-readable report; per-sentence scores on request.
    pub fn to_json(&self, per_sentence: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "labeled": self.labeled,
            "sentences": self.sentences.len(),
            "total": PartitionReport::from(&self.total),
        });
        if per_sentence {
            v["per_sentence"] = self
                .sentences
                .iter()
                .map(|(id, s)| {
                    let mut r =
                        serde_json::to_value(PartitionReport::from(s)).expect("plain numbers");
                    r["id"] = id.clone().into();
                    r
                })
                .collect();
        }
        v
    }
}

impl fmt::Display for CorpusScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.labeled { "labeled" } else { "unlabeled" };
        writeln!(f, "{} scores over {} sentences", mode, self.sentences.len())?;
        writeln!(
            f,
            "{:<8} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8}",
            "edges", "precision", "recall", "F1", "matched", "pred", "gold"
        )?;
        for (name, c) in [
            ("primary", &self.total.primary),
            ("remote", &self.total.remote),
        ] {
            writeln!(
                f,
                "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8} {:>8} {:>8}{}",
                name,
                c.precision(),
                c.recall(),
                c.f1(),
                c.matched,
                c.predicted,
                c.gold,
                if c.degenerate() { "  (empty side)" } else { "" }
            )?;
        }
        write!(f, "average F1 {:.4}", self.total.average_f1())
    }
}

/// Relative frequency of each token text.
pub fn word_distribution<'a>(
    graphs: impl IntoIterator<Item = &'a UnifiedGraph>,
    lowercase: bool,
) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for g in graphs {
        for t in g.tokens() {
            let w = if lowercase {
                t.text.to_lowercase()
            } else {
                t.text.clone()
            };
            *counts.entry(w).or_insert(0.0) += 1.0;
            total += 1.0;
        }
    }
    for v in counts.values_mut() {
        *v /= total;
    }
    counts
}

/// Sum of absolute differences over the union of both supports.
pub fn l1(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let keys: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    keys.into_iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum()
}

/// L1 distance between the word distributions of two corpora.
pub fn l1_distance(a: &[UnifiedGraph], b: &[UnifiedGraph], lowercase: bool) -> Result<f64> {
    let p = word_distribution(a, lowercase);
    let q = word_distribution(b, lowercase);
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("corpus tokens"));
    }
    Ok(l1(&p, &q))
}
