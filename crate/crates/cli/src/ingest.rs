//! Edge-list ingestion.
//!
//! Fields are separated by whitespace or commas and `#` starts a comment.
//! Node labels are opaque strings. The node order is the manifest order
//! followed by labels in order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ment_core::model::{AdjacencyMatrix, SnapshotSeries};

use crate::config::InputFormat;
use crate::{CliError, Result};

/// What ingestion saw, including the label→index map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub horizon: usize,
    pub edges: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    /// Label of node i.
    pub node_ids: Vec<String>,
}

#[derive(Default)]
struct Labels {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Labels {
    fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        self.ids.push(label.to_string());
        self.index.insert(label.to_string(), self.ids.len() - 1);
        self.ids.len() - 1
    }
}

fn fields(line: &str) -> Vec<&str> {
    let line = line.split('#').next().unwrap_or("");
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|f| !f.is_empty())
        .collect()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn bad_line(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{}:{line}: {msg}", path.display()))
}

pub fn read_node_manifest(path: &Path) -> Result<Vec<String>> {
    let mut seen = HashMap::new();
    let mut ids = Vec::new();
    for (no, line) in read(path)?.lines().enumerate() {
        let f = fields(line);
        match f.as_slice() {
            [] => continue,
            [label] => {
                if let Some(first) = seen.insert(label.to_string(), no + 1) {
                    return Err(bad_line(
                        path,
                        no + 1,
                        format!("node `{label}` already listed on line {first}"),
                    ));
                }
                ids.push(label.to_string());
            }
            _ => return Err(bad_line(path, no + 1, "expected one node label per line")),
        }
    }
    Ok(ids)
}

/// Raw edge records: (0-based time, u, v).
fn edge_triples(
    path: &Path,
    horizon: Option<usize>,
    labels: &mut Labels,
) -> Result<(usize, Vec<(usize, usize, usize)>)> {
    let mut edges = Vec::new();
    let mut max_t = 0;
    for (no, line) in read(path)?.lines().enumerate() {
        let f = fields(line);
        if f.is_empty() {
            continue;
        }
        let [t, u, v] = f.as_slice() else {
            return Err(bad_line(path, no + 1, "expected `t u v`"));
        };
        let t: usize = t.parse().map_err(|_| {
            bad_line(
                path,
                no + 1,
                format!("time `{t}` is not a positive integer"),
            )
        })?;
        if t == 0 || horizon.is_some_and(|h| t > h) {
            let range = horizon.map_or("1..".to_string(), |h| format!("1..={h}"));
            return Err(bad_line(
                path,
                no + 1,
                format!("time {t} is outside {range}"),
            ));
        }
        max_t = max_t.max(t);
        edges.push((t - 1, labels.intern(u), labels.intern(v)));
    }
    let horizon = match horizon {
        Some(h) => h,
        None if max_t > 0 => max_t,
        None => {
            return Err(CliError::Invalid(format!(
                "{} has no edges; pass --horizon to set the number of snapshots",
                path.display()
            )))
        }
    };
    Ok((horizon, edges))
}

fn snapshot_files(dir: &Path, skip: Option<&Path>) -> Result<Vec<PathBuf>> {
    let skip = skip.and_then(|p| fs::canonicalize(p).ok());
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_none_or(|n| n.starts_with('.'));
        if !path.is_file() || hidden {
            continue;
        }
        if skip.is_some() && fs::canonicalize(&path).ok() == skip {
            continue;
        }
        files.push(path);
    }
    files.sort();
    Ok(files)
}

fn per_snapshot(
    dir: &Path,
    horizon: Option<usize>,
    manifest: Option<&Path>,
    labels: &mut Labels,
) -> Result<(usize, Vec<(usize, usize, usize)>)> {
    let files = snapshot_files(dir, manifest)?;
    if files.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} holds no snapshot files",
            dir.display()
        )));
    }
    if let Some(h) = horizon.filter(|&h| h != files.len()) {
        return Err(CliError::Invalid(format!(
            "--horizon {h} but {} holds {} snapshot files",
            dir.display(),
            files.len()
        )));
    }
    let mut edges = Vec::new();
    for (t, path) in files.iter().enumerate() {
        for (no, line) in read(path)?.lines().enumerate() {
            match fields(line).as_slice() {
                [] => {}
                [u, v] => edges.push((t, labels.intern(u), labels.intern(v))),
                _ => return Err(bad_line(path, no + 1, "expected `u v`")),
            }
        }
    }
    Ok((files.len(), edges))
}

/// Reads an edge-triple file or a directory of per-snapshot edge lists.
///
/// Self-loops are dropped and duplicate edges (in either orientation) are
/// merged; both are counted in the report.
pub fn ingest_snapshots(
    path: &Path,
    format: InputFormat,
    manifest: Option<&Path>,
    horizon: Option<usize>,
) -> Result<(SnapshotSeries, IngestReport)> {
    let mut labels = Labels::default();
    if let Some(m) = manifest {
        for id in read_node_manifest(m)? {
            labels.intern(&id);
        }
    }
    let (horizon, raw) = match format {
        InputFormat::EdgeTriples => edge_triples(path, horizon, &mut labels)?,
        InputFormat::PerSnapshot => per_snapshot(path, horizon, manifest, &mut labels)?,
    };
    let n = labels.ids.len();
    if n == 0 {
        return Err(CliError::Invalid(format!(
            "{} names no nodes; pass --nodes to list them",
            path.display()
        )));
    }
    let mut snapshots = vec![AdjacencyMatrix::empty(n); horizon];
    let (mut self_loops, mut duplicates, mut edges) = (0, 0, 0);
    for (t, u, v) in raw {
        if u == v {
            self_loops += 1;
        } else if snapshots[t].insert(u, v)? {
            edges += 1;
        } else {
            duplicates += 1;
        }
    }
    if self_loops > 0 {
        log::warn!("{}: dropped {self_loops} self-loop(s)", path.display());
    }
    if duplicates > 0 {
        log::info!("{}: merged {duplicates} duplicate edge(s)", path.display());
    }
    let series = SnapshotSeries::new(snapshots, labels.ids.clone())?;
    Ok((
        series,
        IngestReport {
            horizon,
            edges,
            self_loops,
            duplicates,
            node_ids: labels.ids,
        },
    ))
}

/// `t u v` lines with 1-based t, each undirected edge once.
pub fn edge_triples_text(series: &SnapshotSeries) -> String {
    let ids = series.node_ids();
    let mut out = String::new();
    for (t, a) in series.snapshots().iter().enumerate() {
        for (i, j) in a.edges() {
            out.push_str(&format!("{} {} {}\n", t + 1, ids[i], ids[j]));
        }
    }
    out
}

pub fn node_manifest_text(series: &SnapshotSeries) -> String {
    series
        .node_ids()
        .iter()
        .map(|id| format!("{id}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_split_on_space_comma_and_comments() {
        assert_eq!(fields("1, a\tb # note"), vec!["1", "a", "b"]);
        assert!(fields("# only a comment").is_empty());
    }

    #[test]
    fn labels_keep_first_appearance_order() {
        let mut l = Labels::default();
        assert_eq!(l.intern("x"), 0);
        assert_eq!(l.intern("y"), 1);
        assert_eq!(l.intern("x"), 0);
        assert_eq!(l.ids, vec!["x", "y"]);
    }
}
