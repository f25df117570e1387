//! Edge-list text format.
//!
//! ```text
//! <n> <m>
//! <u> <v>      (m lines, 0-indexed, u != v, each unordered pair once)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::Graph;
use crate::error::{Error, Result};

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Parses edge-list text; `origin` is only used in error messages.
pub fn parse_edge_list(text: &str, origin: &Path) -> Result<Graph> {
    let fail = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines.next().ok_or_else(|| fail(1, "missing header".into()))?;
    let (n, m) = parse_pair(header).ok_or_else(|| {
        fail(header_line, format!("expected \"<n> <m>\" header, found {header:?}"))
    })?;

    let mut edges: Vec<(usize, usize, usize)> = Vec::with_capacity(m);
    for (line, content) in lines {
        let (u, v) = parse_pair(content)
            .ok_or_else(|| fail(line, format!("expected \"<u> <v>\", found {content:?}")))?;
        if u >= n || v >= n {
            return Err(fail(line, format!("endpoint out of range 0..{n} in ({u}, {v})")));
        }
        if u == v {
            return Err(fail(line, format!("self-loop at node {u}")));
        }
        edges.push((u.min(v), u.max(v), line));
    }
    if edges.len() != m {
        return Err(fail(
            header_line,
            format!("header declares {m} edges but {} were listed", edges.len()),
        ));
    }
    edges.sort_unstable();
    for w in edges.windows(2) {
        if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
            let line = w[0].2.max(w[1].2);
            return Err(fail(line, format!("duplicate edge ({}, {})", w[1].0, w[1].1)));
        }
    }
    Ok(Graph::from_canonical(
        n,
        edges.into_iter().map(|(u, v, _)| (u, v)).collect(),
    ))
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let mut it = s.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b))
}

pub fn to_edge_list_string(g: &Graph) -> String {
    let mut out = String::with_capacity(8 * (g.edge_count() + 1));
    let _ = writeln!(out, "{} {}", g.n(), g.edge_count());
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn save_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_edge_list_string(g)).map_err(|e| Error::io(path, e))
}

/// Loads every regular file in `dir` (sorted by file name) as an edge list.
/// Files ending in `.json` or `.csv` are skipped so manifests can live alongside.
pub fn load_graph_dir(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Graph)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            !matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("json") | Some("csv")
            )
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| load_edge_list(&p).map(|g| (p, g)))
        .collect()
}
