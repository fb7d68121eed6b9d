//! SDP 2015 tab format: `#SDP 2015` header, `#id` sentence lines, then
//! one line per token with ID, FORM, LEMMA, POS, TOP, PRED, FRAME and one
//! argument column per predicate, in token order.

use std::fmt::Write as _;

use super::bilexical::{Arc, BilexicalGraph, RawColumns};
use crate::error::{Error, Result};
use crate::graph::Token;

const FIXED: usize = 7;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_sdp(text: &str) -> Result<Vec<BilexicalGraph>> {
    read_sdp_records(text).into_iter().collect()
}

/// Reads each sentence on its own; a block of comments without tokens is
/// an error record.
pub fn read_sdp_records(text: &str) -> Vec<Result<BilexicalGraph>> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let flush = |block: &mut Vec<(usize, &str)>, out: &mut Vec<Result<BilexicalGraph>>| {
        if block.iter().any(|(_, l)| !l.starts_with('#')) {
            out.push(read_sentence(block, out.len()));
        } else if let Some((line, _)) = block.last() {
            if block.iter().any(|(_, l)| !l.starts_with("#SDP")) {
                out.push(Err(parse_err(*line, "sentence has no tokens")));
            }
        }
        block.clear();
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, &mut out);
        } else {
            block.push((i + 1, line));
        }
    }
    flush(&mut block, &mut out);
    out
}

fn read_sentence(block: &[(usize, &str)], index: usize) -> Result<BilexicalGraph> {
    let mut id = None;
    let mut rows = Vec::new();
    for &(line_no, line) in block {
        if line.starts_with("#SDP") {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            id = Some(rest.trim().to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < FIXED {
            return Err(parse_err(
                line_no,
                format!("expected at least {} columns", FIXED),
            ));
        }
        rows.push((line_no, cols));
    }
    let preds: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| c[5] == "+")
        .map(|(i, _)| i + 1)
        .collect();
    let mut tokens = Vec::new();
    let mut tops = std::collections::BTreeSet::new();
    let mut arcs = Vec::new();
    let mut columns = Vec::new();
    for (i, (line_no, cols)) in rows.iter().enumerate() {
        let position = i + 1;
        if cols[0].parse::<usize>().ok() != Some(position) {
            return Err(parse_err(
                *line_no,
                format!("token id {:?} out of sequence", cols[0]),
            ));
        }
        if cols.len() != FIXED + preds.len() {
            return Err(parse_err(
                *line_no,
                format!(
                    "expected {} columns, found {}",
                    FIXED + preds.len(),
                    cols.len()
                ),
            ));
        }
        let mut token = Token::new(position, cols[1]);
        if cols[3] != "_" {
            token.pos_tag = cols[3].to_string();
        }
        tokens.push(token);
        let blank = |s: &str| {
            if s == "_" {
                String::new()
            } else {
                s.to_string()
            }
        };
        columns.push(RawColumns {
            lemma: blank(cols[2]),
            frame: blank(cols[6]),
            ..RawColumns::default()
        });
        match cols[4] {
            "+" => {
                tops.insert(position);
            }
            "-" => {}
            other => return Err(parse_err(*line_no, format!("bad top flag {:?}", other))),
        }
        for (k, label) in cols[FIXED..].iter().enumerate() {
            if *label != "_" {
                arcs.push(Arc::new(preds[k], position, *label));
            }
        }
    }
    let mut g = BilexicalGraph::new(id.unwrap_or_else(|| format!("{}", index + 1)), tokens);
    g.arcs = arcs;
    g.tops = tops;
    g.columns = columns;
    Ok(g)
}

pub fn write_sdp(graphs: &[BilexicalGraph]) -> String {
    let mut out = String::from("#SDP 2015\n");
    for g in graphs {
        let _ = writeln!(out, "#{}", g.id);
        let mut preds: Vec<usize> = g.arcs.iter().map(|a| a.head).filter(|&h| h > 0).collect();
        preds.sort_unstable();
        preds.dedup();
        for t in &g.tokens {
            let p = t.position;
            let raw = g.raw(p);
            let blank = |s: &str| {
                if s.is_empty() {
                    "_".to_string()
                } else {
                    s.to_string()
                }
            };
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p,
                t.text,
                blank(&raw.lemma),
                if t.pos_tag.is_empty() {
                    "_"
                } else {
                    &t.pos_tag
                },
                if g.tops.contains(&p) { "+" } else { "-" },
                if preds.binary_search(&p).is_ok() {
                    "+"
                } else {
                    "-"
                },
                blank(&raw.frame),
            );
            for &h in &preds {
                let label = g
                    .arcs
                    .iter()
                    .find(|a| a.head == h && a.dependent == p)
                    .map_or("_", |a| a.label.as_str());
                let _ = write!(out, "\t{}", label);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
