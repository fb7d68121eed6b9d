//! Conversion between the unified format and its sources: bilexical
//! dependency graphs (syntactic trees and semantic DAGs), anchored concept
//! graphs, and hierarchical graphs with linkage.

mod bilexical;
mod concept;
mod conllu;
mod sdp;
mod ucca;

pub use bilexical::{
    from_bilexical, to_bilexical, Arc, BilexicalGraph, BilexicalStyle, RawColumns, HEAD, ORPHAN,
    ROOT, TERMINAL, TOP,
};
pub use concept::{
    from_concept_graph, normalize_relation, AnchoredConceptGraph, Concept, Relation,
};
pub use conllu::{read_conllu, read_conllu_records, read_conllu_sentence, write_conllu};
pub use sdp::{read_sdp, read_sdp_records, write_sdp};
pub use ucca::{from_ucca, is_linkage, LINKAGE_LABELS};

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::UnifiedGraph;

/// Corpus formats the converters read or write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// Native JSON lines.
    Unified,
    Conllu,
    Sdp,
    /// Concept graphs in JSON lines.
    Amr,
    /// Hierarchical graphs in native JSON lines, possibly with linkage.
    Ucca,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unified" | "native" | "jsonl" => Ok(Format::Unified),
            "conllu" | "ud" => Ok(Format::Conllu),
            "sdp" | "dm" => Ok(Format::Sdp),
            "amr" | "concept" | "concept-json" => Ok(Format::Amr),
            "ucca" => Ok(Format::Ucca),
            _ => Err(Error::Config(format!("unknown format {:?}", s))),
        }
    }
}

impl Format {
    /// Guesses a format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "conllu" | "conll" => Some(Format::Conllu),
            "sdp" => Some(Format::Sdp),
            "jsonl" | "json" => Some(Format::Unified),
            _ => None,
        }
    }
}

/// Reads a corpus and converts every sentence to the unified format.
pub fn read_unified(format: Format, text: &str) -> Result<Vec<UnifiedGraph>> {
    match format {
        Format::Unified => UnifiedGraph::read_jsonl(text),
        Format::Conllu => read_conllu(text)?.iter().map(from_bilexical).collect(),
        Format::Sdp => read_sdp(text)?.iter().map(from_bilexical).collect(),
        Format::Amr => AnchoredConceptGraph::read_jsonl(text)?
            .iter()
            .map(from_concept_graph)
            .collect(),
        Format::Ucca => UnifiedGraph::read_jsonl(text)?
            .iter()
            .map(from_ucca)
            .collect(),
    }
}

/// Reads a corpus record by record; each sentence is converted on its own
/// and reported as a separate result.
pub fn read_unified_records(format: Format, text: &str) -> Vec<Result<UnifiedGraph>> {
    let by_line = |parse: &dyn Fn(&str) -> Result<UnifiedGraph>| -> Vec<Result<UnifiedGraph>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| parse(l).map_err(|e| e.at_line(i + 1)))
            .collect()
    };
    match format {
        Format::Unified => by_line(&UnifiedGraph::from_json_line),
        Format::Ucca => by_line(&|l| from_ucca(&UnifiedGraph::from_json_line(l)?)),
        Format::Amr => by_line(&|l| from_concept_graph(&AnchoredConceptGraph::from_json_line(l)?)),
        Format::Conllu => read_conllu_records(text)
            .into_iter()
            .map(|r| r.and_then(|g| from_bilexical(&g)))
            .collect(),
        Format::Sdp => read_sdp_records(text)
            .into_iter()
            .map(|r| r.and_then(|g| from_bilexical(&g)))
            .collect(),
    }
}

/// Writes unified graphs in a target format. Concept and hierarchical
/// formats are written as unified JSON lines.
pub fn write_unified(format: Format, graphs: &[UnifiedGraph]) -> Result<String> {
    match format {
        Format::Unified | Format::Amr | Format::Ucca => Ok(UnifiedGraph::write_jsonl(graphs)),
        Format::Conllu => {
            let trees = graphs
                .iter()
                .map(|g| to_bilexical(g, BilexicalStyle::Tree))
                .collect::<Result<Vec<_>>>()?;
            Ok(write_conllu(&trees))
        }
        Format::Sdp => {
            let dags = graphs
                .iter()
                .map(|g| to_bilexical(g, BilexicalStyle::Semantic))
                .collect::<Result<Vec<_>>>()?;
            Ok(write_sdp(&dags))
        }
    }
}
