//! Plain-text graph and label formats.
//!
//! Edge lists start with a header line `n <count>` followed by one `u v`
//! pair per line (0-based vertex ids, `u < v`). Label files are CSV with a
//! `vertex,label` header and 1-based labels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// A parsed edge list before validation into an [`AdjacencyMatrix`].
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

pub fn write_edge_list(a: &AdjacencyMatrix) -> String {
    let mut s = format!("n {}\n", a.n());
    for (u, v) in a.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

/// Parses edge-list text. Blank lines and lines starting with `#` are
/// skipped. `path` is only used in error messages.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<EdgeList> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut n = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if n.is_none() {
            match fields.as_slice() {
                ["n", count] => {
                    n =
                        Some(count.parse::<usize>().map_err(|e| {
                            err(line_no, format!("bad vertex count '{count}': {e}"))
                        })?);
                    continue;
                }
                _ => return Err(err(line_no, "expected header 'n <count>'".into())),
            }
        }
        let count = n.expect("header parsed");
        let [u, v] = fields.as_slice() else {
            return Err(err(line_no, format!("expected 'u v', got '{line}'")));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| err(line_no, format!("bad vertex id '{s}': {e}")))
        };
        let (u, v) = (parse(u)?, parse(v)?);
        if u >= count || v >= count {
            return Err(err(line_no, format!("vertex id out of range 0..{count}")));
        }
        if u == v {
            return Err(err(line_no, format!("self-loop at vertex {u}")));
        }
        edges.push((u.min(v), u.max(v)));
    }
    let n = n.ok_or_else(|| err(0, "missing header 'n <count>'".into()))?;
    Ok(EdgeList { n, edges })
}

pub fn read_edge_list(path: &Path) -> Result<EdgeList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// `vertex,label` CSV with 1-based labels.
pub fn write_labels(labels: &[usize]) -> String {
    let mut s = String::from("vertex,label\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", l + 1);
    }
    s
}

/// Reads one or more label columns from a CSV whose first column is the
/// vertex id. Returns the column names and, per column, 0-based labels
/// indexed by vertex. Label values may be arbitrary strings; they are
/// mapped to integers in order of first appearance.
pub fn parse_label_columns(text: &str, path: &Path) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty label file".into()))?;
    let names: Vec<String> = header
        .split(',')
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(err(
            1,
            "label file needs a vertex column and at least one label column".into(),
        ));
    }
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() + 1 {
            return Err(err(idx + 1, format!("expected {} fields", names.len() + 1)));
        }
        let v = fields[0]
            .parse::<usize>()
            .map_err(|e| err(idx + 1, format!("bad vertex id '{}': {e}", fields[0])))?;
        rows.push((v, fields[1..].iter().map(|s| s.to_string()).collect()));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(err(
            0,
            "vertex ids must be exactly 0..n-1, each once".into(),
        ));
    }
    let columns = (0..names.len())
        .map(|c| {
            let mut map = std::collections::HashMap::new();
            rows.iter()
                .map(|r| {
                    let next = map.len();
                    *map.entry(r.1[c].clone()).or_insert(next)
                })
                .collect()
        })
        .collect();
    Ok((names, columns))
}

pub fn read_label_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_label_columns(&text, path)
}

/// Matrix as CSV, one row per line, 17 significant digits, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
