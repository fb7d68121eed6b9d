//! CoNLL-U: ten tab-separated columns per word, sentences separated by
//! blank lines, `#` comments. Multi-word token ranges (`3-4`) and empty
//! nodes (`5.1`) are skipped.

use std::fmt::Write as _;

use super::bilexical::{Arc, BilexicalGraph, RawColumns};
use crate::error::{Error, Result};
use crate::graph::Token;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads every sentence in a CoNLL-U document. Line numbers in errors
/// count from 1 over the whole text.
pub fn read_conllu(text: &str) -> Result<Vec<BilexicalGraph>> {
    read_conllu_records(text).into_iter().collect()
}

/// Reads each sentence on its own, so that a malformed sentence does not
/// affect the others.
pub fn read_conllu_records(text: &str) -> Vec<Result<BilexicalGraph>> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                out.push(read_sentence(&block, out.len()));
                block.clear();
            }
        } else {
            block.push((i + 1, line));
        }
    }
    if !block.is_empty() {
        out.push(read_sentence(&block, out.len()));
    }
    out
}

/// Reads a single sentence block.
pub fn read_conllu_sentence(text: &str) -> Result<BilexicalGraph> {
    let block: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    read_sentence(&block, 0)
}

fn read_sentence(block: &[(usize, &str)], index: usize) -> Result<BilexicalGraph> {
    let mut id = None;
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut columns = Vec::new();
    let first_line = block.first().map_or(1, |(l, _)| *l);
    for &(line_no, line) in block {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("sent_id") {
                id = Some(value.trim_start_matches([' ', '=']).trim().to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(
                line_no,
                format!("expected 10 columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let position: usize = cols[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad word index {:?}", cols[0])))?;
        if position != tokens.len() + 1 {
            return Err(parse_err(
                line_no,
                format!("word index {} out of sequence", position),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad head {:?}", cols[6])))?;
        let mut token = Token::new(position, cols[1]);
        token.pos_tag = none_if_blank(cols[3]);
        token.dep_rel = none_if_blank(cols[7]);
        tokens.push(token);
        columns.push(RawColumns {
            lemma: none_if_blank(cols[2]),
            xpos: none_if_blank(cols[4]),
            feats: none_if_blank(cols[5]),
            deps: none_if_blank(cols[8]),
            misc: none_if_blank(cols[9]),
            frame: String::new(),
        });
        heads.push((line_no, head, cols[7].to_string()));
    }
    if tokens.is_empty() {
        return Err(parse_err(first_line, "sentence has no words"));
    }
    let n = tokens.len();
    let mut graph = BilexicalGraph::new(id.unwrap_or_else(|| format!("{}", index + 1)), tokens);
    graph.columns = columns;
    for (i, (line_no, head, label)) in heads.into_iter().enumerate() {
        if head > n {
            return Err(parse_err(
                line_no,
                format!("head {} beyond sentence length {}", head, n),
            ));
        }
        graph.arcs.push(Arc::new(head, i + 1, label));
    }
    Ok(graph)
}

fn none_if_blank(s: &str) -> String {
    if s == "_" {
        String::new()
    } else {
        s.to_string()
    }
}

fn or_blank(s: &str) -> &str {
    if s.is_empty() {
        "_"
    } else {
        s
    }
}

/// Writes sentences in CoNLL-U. Tokens without a head arc get head 0
/// with relation `_`; extra heads beyond the first are not representable
/// in the basic columns and are dropped.
pub fn write_conllu(graphs: &[BilexicalGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        let _ = writeln!(out, "# sent_id = {}", g.id);
        let _ = writeln!(
            out,
            "# text = {}",
            g.tokens
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        );
        for t in &g.tokens {
            let arc = g
                .arcs
                .iter()
                .filter(|a| a.dependent == t.position)
                .min_by_key(|a| a.head);
            let (head, rel) = arc.map_or((0, "_"), |a| (a.head, a.label.as_str()));
            let raw = g.raw(t.position);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.position,
                t.text,
                or_blank(&raw.lemma),
                or_blank(&t.pos_tag),
                or_blank(&raw.xpos),
                or_blank(&raw.feats),
                head,
                rel,
                or_blank(&raw.deps),
                or_blank(&raw.misc)
            );
        }
        out.push('\n');
    }
    out
}
