//! TREC run / qrels exchange formats plus a token sidecar file.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};

use super::{Document, RankedTopic};

pub const RUN_FILE: &str = "run.txt";
pub const QRELS_FILE: &str = "qrels.txt";
pub const TEXT_FILE: &str = "texts.tsv";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct RunEntry {
    doc_id: String,
    rank: i64,
    order: usize,
}

/// Reads a run (`topic Q0 docid rank score tag`) and qrels (`topic 0 docid rel`).
///
/// Topics are returned in order of first appearance in the run, documents
/// sorted by rank. Documents missing from the qrels are non-relevant.
pub fn load_run_and_qrels(run_path: &Path, qrels_path: &Path) -> Result<Vec<RankedTopic>> {
    let run_text = fs::read_to_string(run_path)?;
    let mut order: Vec<String> = Vec::new();
    let mut runs: HashMap<String, Vec<RunEntry>> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in run_text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(parse_err(
                run_path,
                lineno,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: i64 = cols[3]
            .parse()
            .map_err(|_| parse_err(run_path, lineno, format!("bad rank `{}`", cols[3])))?;
        cols[4]
            .parse::<f64>()
            .map_err(|_| parse_err(run_path, lineno, format!("bad score `{}`", cols[4])))?;
        let (topic, doc) = (cols[0].to_string(), cols[2].to_string());
        if !seen.insert((topic.clone(), doc.clone())) {
            return Err(Error::DuplicateDocument {
                topic_id: topic,
                doc_id: doc,
            });
        }
        let entries = runs.entry(topic.clone()).or_insert_with(|| {
            order.push(topic);
            Vec::new()
        });
        entries.push(RunEntry {
            doc_id: doc,
            rank,
            order: entries.len(),
        });
    }

    let qrels = parse_qrels(qrels_path)?;

    order
        .into_iter()
        .map(|topic_id| {
            let mut entries = runs.remove(&topic_id).expect("recorded topic");
            entries.sort_by_key(|e| (e.rank, e.order));
            let judged = qrels.get(&topic_id);
            let docs = entries
                .into_iter()
                .map(|e| {
                    let relevant = judged.is_some_and(|j| j.contains(&e.doc_id));
                    Document::new(e.doc_id, relevant)
                })
                .collect();
            let topic = RankedTopic::new(topic_id, docs)?;
            if topic.num_relevant() == 0 {
                warn!("topic `{}` has no relevant documents", topic.id());
            }
            Ok(topic)
        })
        .collect()
}

fn parse_qrels(path: &Path) -> Result<HashMap<String, HashSet<String>>> {
    let text = fs::read_to_string(path)?;
    let mut out: HashMap<String, HashSet<String>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let rel: i64 = cols[3]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad relevance `{}`", cols[3])))?;
        let set = out.entry(cols[0].to_string()).or_default();
        if rel > 0 {
            set.insert(cols[2].to_string());
        } else {
            set.remove(cols[2]);
        }
    }
    Ok(out)
}

/// Reads a `doc_id<TAB>tokens` sidecar.
pub fn load_texts(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, tokens) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected `doc_id<TAB>tokens`"))?;
        out.insert(id.to_string(), tokens.to_string());
    }
    Ok(out)
}

pub fn attach_texts(topics: &mut [RankedTopic], texts: &HashMap<String, String>) {
    for topic in topics {
        for doc in &mut topic.docs {
            if let Some(t) = texts.get(&doc.id) {
                doc.text = Some(t.clone());
            }
        }
    }
}

/// Loads `run.txt`, `qrels.txt` and, when present, `texts.tsv` from `dir`.
pub fn load_collection(dir: &Path) -> Result<Vec<RankedTopic>> {
    let mut topics = load_run_and_qrels(&dir.join(RUN_FILE), &dir.join(QRELS_FILE))?;
    let text_path = dir.join(TEXT_FILE);
    if text_path.exists() {
        attach_texts(&mut topics, &load_texts(&text_path)?);
    }
    Ok(topics)
}

pub fn write_run(topics: &[RankedTopic], path: &Path, tag: &str) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in topics {
        let n = t.len();
        for (i, d) in t.docs().iter().enumerate() {
            writeln!(w, "{} Q0 {} {} {} {}", t.id(), d.id, i + 1, n - i, tag)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_qrels(topics: &[RankedTopic], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in topics {
        for d in t.docs() {
            writeln!(w, "{} 0 {} {}", t.id(), d.id, d.relevant as u8)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_texts(topics: &[RankedTopic], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in topics {
        for d in t.docs() {
            if let Some(text) = &d.text {
                writeln!(w, "{}\t{}", d.id, text)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the three collection files into `dir`, returning their paths.
pub fn write_collection(topics: &[RankedTopic], dir: &Path, tag: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = vec![dir.join(RUN_FILE), dir.join(QRELS_FILE), dir.join(TEXT_FILE)];
    write_run(topics, &paths[0], tag)?;
    write_qrels(topics, &paths[1])?;
    write_texts(topics, &paths[2])?;
    Ok(paths)
}
