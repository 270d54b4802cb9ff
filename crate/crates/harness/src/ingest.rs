//! Loading user-supplied graphs and their truth labelings.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use sms_core::graph::AdjacencyMatrix;
use sms_core::io::{read_edge_list, read_label_columns, write_edge_list};

use crate::error::{HarnessError, Result};
use crate::output::write_outputs;

#[derive(Debug, Clone)]
pub struct IngestedGraph {
    pub adjacency: AdjacencyMatrix,
    /// Named labelings (0-based) of the retained vertices.
    pub truths: Vec<(String, Vec<usize>)>,
    /// Original id of each retained vertex, indexed by new id.
    pub original_ids: Vec<usize>,
    pub duplicate_edges: usize,
    /// Component count of the graph as read.
    pub components: usize,
}

impl IngestedGraph {
    /// `old,new` table of retained vertex ids.
    pub fn remap_csv(&self) -> String {
        let mut s = String::from("old,new\n");
        for (new, old) in self.original_ids.iter().enumerate() {
            let _ = writeln!(s, "{old},{new}");
        }
        s
    }

    /// `vertex,<name>...` table with 1-based labels.
    pub fn labels_csv(&self) -> Option<String> {
        if self.truths.is_empty() {
            return None;
        }
        let mut s = String::from("vertex");
        for (name, _) in &self.truths {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for v in 0..self.adjacency.n() {
            s.push_str(&v.to_string());
            for (_, labels) in &self.truths {
                let _ = write!(s, ",{}", labels[v] + 1);
            }
            s.push('\n');
        }
        Some(s)
    }
}

/// Reads an edge list and optional label CSV. Duplicate edges are dropped
/// with a warning. With `largest_component` only the largest connected
/// component is kept and vertices are renumbered; otherwise a disconnected
/// graph only triggers a warning.
pub fn ingest(
    edges: &Path,
    labels: Option<&Path>,
    largest_component: bool,
) -> Result<IngestedGraph> {
    let list = read_edge_list(edges)?;
    let (full, duplicate_edges) = AdjacencyMatrix::from_edges(list.n, list.edges)?;
    if duplicate_edges > 0 {
        warn!(
            "{}: dropped {duplicate_edges} duplicate edge(s)",
            edges.display()
        );
    }
    let truths_full = match labels {
        None => Vec::new(),
        Some(path) => {
            let (names, columns) = read_label_columns(path)?;
            if columns.first().is_some_and(|c| c.len() != full.n()) {
                return Err(HarnessError::config(format!(
                    "{}: {} labelled vertices but the graph has {}",
                    path.display(),
                    columns[0].len(),
                    full.n()
                )));
            }
            names.into_iter().zip(columns).collect()
        }
    };
    let comps = full.connected_components();
    let components = comps.len();
    let (adjacency, original_ids) = if largest_component && components > 1 {
        let keep = comps.into_iter().next().expect("at least one component");
        (full.induced(&keep), keep)
    } else {
        if components > 1 {
            warn!(
                "{}: graph has {components} connected components; consider --largest-component",
                edges.display()
            );
        }
        let n = full.n();
        (full, (0..n).collect())
    };
    let truths = truths_full
        .into_iter()
        .map(|(name, labels)| (name, original_ids.iter().map(|&v| labels[v]).collect()))
        .collect();
    Ok(IngestedGraph {
        adjacency,
        truths,
        original_ids,
        duplicate_edges,
        components,
    })
}

/// Writes `graph.txt`, `remap.csv` and, when present, `labels.csv`.
pub fn write_ingested(dir: &Path, g: &IngestedGraph) -> Result<()> {
    let mut files = vec![
        ("graph.txt".to_string(), write_edge_list(&g.adjacency)),
        ("remap.csv".to_string(), g.remap_csv()),
    ];
    if let Some(l) = g.labels_csv() {
        files.push(("labels.csv".to_string(), l));
    }
    write_outputs(dir, &files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn two_components_keep_the_larger() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "g.txt", "n 6\n0 4\n4 5\n1 2\n");
        let l = write(
            dir.path(),
            "l.csv",
            "vertex,side\n0,a\n1,b\n2,b\n3,c\n4,a\n5,a\n",
        );
        let g = ingest(&e, Some(&l), true).unwrap();
        assert_eq!(g.components, 3);
        assert_eq!(g.original_ids, vec![0, 4, 5]);
        assert_eq!(g.adjacency.n(), 3);
        assert_eq!(g.adjacency.num_edges(), 2);
        assert!(g.adjacency.has_edge(0, 1) && g.adjacency.has_edge(1, 2));
        assert_eq!(g.truths[0].1, vec![0, 0, 0]);
        assert_eq!(g.remap_csv(), "old,new\n0,0\n4,1\n5,2\n");

        let whole = ingest(&e, Some(&l), false).unwrap();
        assert_eq!(whole.adjacency.n(), 6);
    }

    #[test]
    fn duplicates_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "g.txt", "n 3\n0 1\n1 0\n1 2\n0 1\n");
        let g = ingest(&e, None, false).unwrap();
        assert_eq!(g.duplicate_edges, 2);
        assert_eq!(g.adjacency.num_edges(), 2);
    }

    #[test]
    fn label_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "g.txt", "n 3\n0 1\n");
        let l = write(dir.path(), "l.csv", "vertex,x\n0,a\n1,b\n");
        assert!(ingest(&e, Some(&l), false).is_err());
    }
}
