use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{GfpError, Result};

use super::Network;

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    })
}

fn two_fields<'a>(path: &Path, line: usize, body: &'a str, what: &str) -> Result<(&'a str, &'a str)> {
    let mut it = body.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(GfpError::Parse { path: path.to_path_buf(), line, msg: format!("expected `{what}`, found `{body}`") }),
    }
}

fn parse_u64(path: &Path, line: usize, field: &str, what: &str) -> Result<u64> {
    field.parse().map_err(|_| GfpError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("{what} `{field}` is not a non-negative integer"),
    })
}

/// Reads an undirected edge list (`u v` per line) and a quality file
/// (`node quality` per line). Node ids are relabelled densely in increasing
/// order of the original id; nodes with a quality but no edges are kept as
/// isolated nodes.
pub fn load_graph(edge_path: &Path, quality_path: &Path) -> Result<Network> {
    let edge_text = fs::read_to_string(edge_path)?;
    let quality_text = fs::read_to_string(quality_path)?;

    let mut qualities: BTreeMap<u64, (u32, usize)> = BTreeMap::new();
    for (line, body) in data_lines(&quality_text) {
        let (id, q) = two_fields(quality_path, line, body, "node quality")?;
        let id = parse_u64(quality_path, line, id, "node id")?;
        let q = parse_u64(quality_path, line, q, "quality")?;
        let q = u32::try_from(q).map_err(|_| GfpError::Parse {
            path: quality_path.to_path_buf(),
            line,
            msg: format!("quality {q} is out of range"),
        })?;
        match qualities.entry(id) {
            Entry::Vacant(e) => {
                e.insert((q, line));
            }
            Entry::Occupied(e) => {
                return Err(GfpError::Parse {
                    path: quality_path.to_path_buf(),
                    line,
                    msg: format!("node {id} already has a quality (line {})", e.get().1),
                })
            }
        }
    }

    let mut raw_edges: Vec<(u64, u64)> = Vec::new();
    let mut first_seen: HashMap<(u64, u64), usize> = HashMap::new();
    for (line, body) in data_lines(&edge_text) {
        let (u, v) = two_fields(edge_path, line, body, "u v")?;
        let u = parse_u64(edge_path, line, u, "node id")?;
        let v = parse_u64(edge_path, line, v, "node id")?;
        let parse_err = |msg: String| GfpError::Parse { path: edge_path.to_path_buf(), line, msg };
        if u == v {
            return Err(parse_err(format!("self-loop on node {u}")));
        }
        if let Some(prev) = first_seen.insert((u.min(v), u.max(v)), line) {
            return Err(parse_err(format!("duplicate edge {u}-{v} (first on line {prev})")));
        }
        for node in [u, v] {
            if !qualities.contains_key(&node) {
                return Err(GfpError::MissingQuality { node });
            }
        }
        raw_edges.push((u, v));
    }

    let labels: Vec<u64> = qualities.keys().copied().collect();
    if labels.len() > u32::MAX as usize {
        return Err(GfpError::Usage("graph has too many nodes".into()));
    }
    let dense: HashMap<u64, u32> = labels.iter().enumerate().map(|(i, &l)| (l, i as u32)).collect();
    let quality_vec: Vec<u32> = qualities.values().map(|&(q, _)| q).collect();
    let mut adjacency = vec![Vec::new(); labels.len()];
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (u, v) in raw_edges {
        let (a, b) = (dense[&u], dense[&v]);
        adjacency[a as usize].push(b);
        adjacency[b as usize].push(a);
        edges.push((a, b));
    }
    Ok(Network::from_parts(adjacency, quality_vec, edges, labels))
}
