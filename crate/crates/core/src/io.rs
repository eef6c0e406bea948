//! Plain-text dataset directories.
//!
//! | file | content |
//! |------|---------|
//! | `edges.txt` | one `u v` pair per line, whitespace separated |
//! | `features.csv` | one row of `f` numbers per node, no header |
//! | `labels.txt` | one class index per line, `-1` for unlabeled |
//! | `masks_<k>.txt` | one of `t`, `v`, `s`, `u` per node for split `k` |
//!
//! Blank lines and lines starting with `#` are ignored in the text files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::graph::{Graph, Split, SplitRole};
use crate::tensor::Tensor2;
use crate::{Error, Result};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";

pub fn mask_file_name(k: usize) -> String {
    format!("masks_{k}.txt")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

/// Numbered non-comment lines.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    content_lines(path)?
        .into_iter()
        .map(|(no, line)| {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => Ok((u, v)),
                _ => Err(parse_err(path, no, format!("expected `u v`, found `{line}`"))),
            }
        })
        .collect()
}

pub fn read_features(path: &Path) -> Result<Tensor2> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let row = record
            .iter()
            .map(|field| field.parse::<f64>().map_err(|_| parse_err(path, i + 1, format!("bad number `{field}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(path, i + 1, format!("{} columns, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(Tensor2::zeros(0, 0));
    }
    Ok(Tensor2::from_rows(&rows))
}

pub fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    content_lines(path)?
        .into_iter()
        .map(|(no, line)| match line.parse::<i64>() {
            Ok(-1) => Ok(None),
            Ok(l) if l >= 0 => Ok(Some(l as usize)),
            _ => Err(parse_err(path, no, format!("bad label `{line}`"))),
        })
        .collect()
}

pub fn read_mask(path: &Path) -> Result<Split> {
    let roles = content_lines(path)?
        .into_iter()
        .map(|(no, line)| match line.as_str() {
            "t" => Ok(SplitRole::Train),
            "v" => Ok(SplitRole::Val),
            "s" => Ok(SplitRole::Test),
            "u" => Ok(SplitRole::Unused),
            other => Err(parse_err(path, no, format!("bad mask entry `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Split::from_roles(&roles))
}

/// `masks_<k>.txt` files in `dir`, ordered by `k`.
pub fn mask_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(k) = name.strip_prefix("masks_").and_then(|r| r.strip_suffix(".txt")).and_then(|k| k.parse().ok()) {
            found.push((k, path));
        }
    }
    found.sort();
    Ok(found)
}

/// A dataset directory: the graph (without a split) and every split found.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub splits: Vec<Split>,
    /// Self-loops removed while building the graph.
    pub self_loops_stripped: usize,
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let labels = read_labels(&dir.join(LABELS_FILE))?;
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let edges = read_edges(&dir.join(EDGES_FILE))?;
    let n = labels.len();
    let (graph, self_loops_stripped) = Graph::build(&edges, features, labels, Split::empty(n))?;
    let splits = mask_files(dir)?
        .into_iter()
        .map(|(_, path)| {
            let split = read_mask(&path)?;
            graph.with_split(split.clone())?;
            Ok(split)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { graph, splits, self_loops_stripped })
}

/// Writes `graph` and one mask file per entry of `splits`. Output depends
/// only on the inputs, so rewriting the same data is byte-identical.
pub fn write_dataset(dir: &Path, graph: &Graph, splits: &[Split]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    };
    let edges: String = graph.edges().iter().map(|(u, v)| format!("{u} {v}\n")).collect();
    write(EDGES_FILE, edges)?;

    let path = dir.join(FEATURES_FILE);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(|e| io_err(&path, e))?;
    let x = graph.features();
    for r in 0..x.rows() {
        w.write_record(x.row(r).iter().map(|v| v.to_string())).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let labels: String = graph
        .labels()
        .iter()
        .map(|l| match l {
            Some(c) => format!("{c}\n"),
            None => "-1\n".to_string(),
        })
        .collect();
    write(LABELS_FILE, labels)?;

    for (k, split) in splits.iter().enumerate() {
        let text: String = (0..split.len())
            .map(|i| match split.role(i) {
                SplitRole::Train => "t\n",
                SplitRole::Val => "v\n",
                SplitRole::Test => "s\n",
                SplitRole::Unused => "u\n",
            })
            .collect();
        write(&mask_file_name(k), text)?;
    }
    Ok(())
}
