use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use unidag::convert::{
    read_unified, read_unified_records, to_bilexical, write_conllu, write_sdp, BilexicalStyle,
    Format,
};
use unidag::eval::{corpus_score, l1_distance, scheme_overlap};
use unidag::graph::UnifiedGraph;
use unidag::model::Model;
use unidag::oracle::oracle_parse;
use unidag::training::{self, Parser, TrainConfig};
use unidag::transition::{ConstraintSet, TaskConfig};

use crate::{
    Cli, Command, ConvertArgs, EvaluateArgs, InputFormat, OracleArgs, OutputFormat, ParseArgs,
    StatsArgs, DATA, INTERNAL,
};

pub fn run(cli: &Cli) -> Result<u8> {
    let jobs = cli.jobs.unwrap_or(1);
    match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Train { config } => train(config, cli.seed, cli.jobs),
        Command::Parse(a) => parse(a, jobs),
        Command::Evaluate(a) => evaluate(a),
        Command::OracleCheck(a) => oracle_check(a, jobs),
        Command::Stats(a) => stats(a),
    }
}

/// Data problems exit with 2, anything else with 3.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<unidag::Error>() {
            return match err {
                unidag::Error::Model(_) | unidag::Error::NonFinite(_) => INTERNAL,
                _ => DATA,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return DATA;
        }
    }
    INTERNAL
}

fn format_of(f: InputFormat) -> Format {
    match f {
        InputFormat::Native => Format::Unified,
        InputFormat::Conllu => Format::Conllu,
        InputFormat::Sdp => Format::Sdp,
        InputFormat::ConceptJson => Format::Amr,
        InputFormat::Ucca => Format::Ucca,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_graphs(path: &Path, format: Option<InputFormat>) -> Result<Vec<UnifiedGraph>> {
    let format = format
        .map(format_of)
        .or_else(|| Format::from_path(path))
        .unwrap_or(Format::Unified);
    read_unified(format, &read_text(path)?).with_context(|| format!("reading {}", path.display()))
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        std::io::stdout().lock().write_all(text.as_bytes())?;
        Ok(())
    } else {
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn convert(a: &ConvertArgs) -> Result<u8> {
    let text = read_text(&a.input)?;
    let mut failures = 0;
    let mut graphs = Vec::new();
    for (i, record) in read_unified_records(format_of(a.from), &text)
        .into_iter()
        .enumerate()
    {
        match record {
            Ok(g) => graphs.push(g),
            Err(e) => {
                failures += 1;
                warn!("record {}: {}", i + 1, e);
            }
        }
    }
    let out = match a.to {
        OutputFormat::Native => UnifiedGraph::write_jsonl(&graphs),
        OutputFormat::Conllu | OutputFormat::Sdp => {
            let style = if a.to == OutputFormat::Conllu {
                BilexicalStyle::Tree
            } else {
                BilexicalStyle::Semantic
            };
            let mut converted = Vec::new();
            for g in &graphs {
                match to_bilexical(g, style) {
                    Ok(b) => converted.push(b),
                    Err(e) => {
                        failures += 1;
                        warn!("sentence {}: {}", g.id, e);
                    }
                }
            }
            match (a.to, converted.is_empty()) {
                (_, true) => String::new(),
                (OutputFormat::Conllu, _) => write_conllu(&converted),
                _ => write_sdp(&converted),
            }
        }
    };
    write_output(&a.out, &out)?;
    if failures > 0 {
        warn!("{} records failed", failures);
        if !a.lenient {
            return Ok(DATA);
        }
    }
    Ok(0)
}

fn train(config: &Path, seed: Option<u64>, jobs: Option<usize>) -> Result<u8> {
    let mut config = TrainConfig::load(config)
        .with_context(|| format!("reading training config {}", config.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(jobs) = jobs {
        config.jobs = jobs;
    }
    let outcome = training::run(&config)?;
    let score = outcome
        .best_epoch
        .checked_sub(1)
        .map_or(f64::NAN, |i| outcome.history[i].dev_average_f1);
    println!(
        "best epoch {} dev average F1 {:.4} checkpoint {}",
        outcome.best_epoch,
        score,
        config.checkpoint_dir.join("best.ckpt").display()
    );
    Ok(0)
}

fn parse(a: &ParseArgs, jobs: usize) -> Result<u8> {
    let model = Model::load_file(&a.model)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let task = a
        .task
        .clone()
        .unwrap_or_else(|| model.main_task().name.clone());
    let inputs = read_graphs(&a.input, a.format)?;
    let parser = Parser::new(&model, &task)?;
    let parsed = parser.parse_all(&inputs, jobs)?;
    let truncated = parsed.iter().filter(|p| p.truncated).count();
    if truncated > 0 {
        warn!("{} of {} parses were truncated", truncated, parsed.len());
    }
    let graphs: Vec<UnifiedGraph> = parsed.into_iter().map(|p| p.graph).collect();
    write_output(&a.out, &UnifiedGraph::write_jsonl(&graphs))?;
    info!("parsed {} sentences with task {}", graphs.len(), task);
    Ok(0)
}

fn evaluate(a: &EvaluateArgs) -> Result<u8> {
    let pred = read_graphs(&a.pred, a.format)?;
    let gold = read_graphs(&a.gold, a.format)?;
    let scores = corpus_score(&pred, &gold, !a.unlabeled)?;
    if a.json {
        println!("{}", scores.to_json(a.per_sentence));
    } else {
        println!("{}", scores);
    }
    Ok(0)
}

fn oracle_check(a: &OracleArgs, jobs: usize) -> Result<u8> {
    let gold = read_graphs(&a.input, a.format)?;
    let constraints = match &a.task {
        Some(path) => ConstraintSet::for_task(&TaskConfig::load(path)?)?,
        None => ConstraintSet::generic("oracle-check"),
    };
    let one = |g: &UnifiedGraph| match oracle_parse(g, &constraints) {
        Ok((_, graph)) => Some(graph),
        Err(e) => {
            warn!("{}: {}", g.id, e);
            None
        }
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let rebuilt: Vec<Option<UnifiedGraph>> = pool.install(|| gold.par_iter().map(one).collect());
    let failures = rebuilt.iter().filter(|r| r.is_none()).count();
    let rebuilt: Vec<UnifiedGraph> = rebuilt.into_iter().flatten().collect();
    let scores = corpus_score(&rebuilt, &gold, constraints.labeled)?;
    let t = &scores.total;
    if a.json {
        let mut v = scores.to_json(false);
        v["failures"] = failures.into();
        println!("{}", v);
    } else {
        println!(
            "{:.1}\nprimary F1 {:.1} remote F1 {:.1} over {} sentences, {} failures",
            100.0 * t.average_f1(),
            100.0 * t.primary.f1(),
            100.0 * t.remote.f1(),
            gold.len(),
            failures
        );
    }
    Ok(if failures > 0 { DATA } else { 0 })
}

fn stats(a: &StatsArgs) -> Result<u8> {
    let x = read_graphs(&a.a, a.format)?;
    let y = read_graphs(&a.b, a.format)?;
    if a.l1 {
        let d = l1_distance(&x, &y, a.lowercase)?;
        if a.json {
            println!("{}", serde_json::json!({ "l1": d }));
        } else {
            println!("{:.4}", d);
        }
    } else {
        let s = scheme_overlap(&x, &y)?;
        if a.json {
            println!("{}", s.to_json(false));
        } else {
            println!("{}", s);
        }
    }
    Ok(0)
}
