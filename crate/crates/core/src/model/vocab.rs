use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Token, UnifiedGraph};
use crate::transition::TransitionKind;

/// Index of the missing-value entry in every vocabulary.
pub const NONE: usize = 0;
/// Index of the unknown-value entry.
pub const UNK: usize = 1;

/// A closed set of feature values with training counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocab {
    items: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items && self.counts == other.counts
    }
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            items: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
        };
        v.insert("<none>");
        v.insert("<unk>");
        v
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, item: &str) -> usize {
        let i = self.items.len();
        self.items.push(item.to_string());
        self.counts.push(0);
        self.index.insert(item.to_string(), i);
        i
    }

    /// Counts one occurrence, adding the value if new.
    pub fn observe(&mut self, item: &str) {
        let i = match self.index.get(item) {
            Some(&i) => i,
            None => self.insert(item),
        };
        self.counts[i] += 1;
    }

    /// Adds a value without counting it.
    pub fn add(&mut self, item: &str) {
        if !self.index.contains_key(item) {
            self.insert(item);
        }
    }

    pub fn lookup(&self, item: &str) -> usize {
        self.index.get(item).copied().unwrap_or(UNK)
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(index).copied().unwrap_or(0)
    }

    pub fn item(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.len() <= 2
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
    }
}

/// Vocabularies by table name: `word`, `pos`, `dep`, `ne`, `shape`,
/// `prefix`, `suffix`, `punct`, `action`, `node_label`, `category`, plus
/// `label.<task>` for each labeled task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub tables: BTreeMap<String, Vocab>,
}

pub const TOKEN_TABLES: [&str; 8] = [
    "word", "pos", "dep", "ne", "shape", "prefix", "suffix", "punct",
];

impl Vocabularies {
    pub fn new() -> Self {
        let mut v = Vocabularies::default();
        for t in TOKEN_TABLES
            .iter()
            .chain(&["action", "node_label", "category"])
        {
            v.tables.insert(t.to_string(), Vocab::new());
        }
        for kind in TransitionKind::ALL {
            v.table_mut("action").add(kind.name());
        }
        v
    }

    /// Counts token attributes, node labels and categories of a corpus.
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a UnifiedGraph>) -> Self {
        let mut v = Self::new();
        for g in graphs {
            v.observe_graph(g);
        }
        v
    }

    pub fn observe_graph(&mut self, graph: &UnifiedGraph) {
        for t in graph.tokens() {
            self.observe_token(t);
        }
        for (_, n) in graph.nodes() {
            if let Some(l) = &n.label {
                self.table_mut("node_label").observe(l);
            }
            if let Some(c) = &n.category {
                self.table_mut("category").observe(c);
            }
        }
    }

    pub fn observe_token(&mut self, t: &Token) {
        let mut see = |table: &str, value: &str| {
            if !value.is_empty() {
                self.table_mut(table).observe(value);
            }
        };
        see("word", &t.text);
        see("pos", &t.pos_tag);
        see("dep", &t.dep_rel);
        see("ne", &t.ne_type);
        see("shape", &t.shape);
        see("prefix", &t.prefix());
        see("suffix", &t.suffix());
        if t.is_punct {
            see("punct", &t.text);
        }
    }

    /// Registers a labeled task's edge labels.
    pub fn add_labels<'a>(&mut self, task: &str, labels: impl IntoIterator<Item = &'a str>) {
        let table = self.tables.entry(format!("label.{}", task)).or_default();
        for l in labels {
            table.add(l);
        }
    }

    /// Adds words that only have pre-trained vectors.
    pub fn add_words<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) {
        let table = self.table_mut("word");
        for w in words {
            table.add(w);
        }
    }

    pub fn table(&self, name: &str) -> Result<&Vocab> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Model(format!("no vocabulary {:?}", name)))
    }

    fn table_mut(&mut self, name: &str) -> &mut Vocab {
        self.tables.entry(name.to_string()).or_default()
    }

    pub fn reindex(&mut self) {
        for v in self.tables.values_mut() {
            v.reindex();
        }
    }
}

/// Pre-trained word vectors: one word and its floats per line, separated
/// by whitespace. A leading `count dim` header line is skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pretrained {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl Pretrained {
    /// Reads at most `limit` vectors (all if `None`).
    pub fn read(reader: impl BufRead, limit: Option<usize>) -> Result<Self> {
        let mut out = Pretrained::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            let vector = values
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if out.dim == 0 {
                out.dim = vector.len();
            } else if vector.len() != out.dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {} values, found {}", out.dim, vector.len()),
                });
            }
            out.vectors.entry(word.to_string()).or_insert(vector);
            if limit.is_some_and(|l| out.vectors.len() >= l) {
                break;
            }
        }
        Ok(out)
    }

    pub fn load(path: &std::path::Path, limit: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file), limit)
    }
}
