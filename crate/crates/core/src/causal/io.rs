//! Text graph files.
//!
//! ```text
//! cgad-graph 1
//! # free-form header comments
//! nodes 2
//! node<TAB>a
//! node<TAB>b
//! edges 1
//! edge<TAB>a<TAB>b<TAB>1.2500000000000000e-1
//! ```
//!
//! An edge line lists `source`, `target`, `weight`; the weight is stored in
//! adjacency entry `[target][source]`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::CausalGraph;
use crate::error::{CgadError, Result};

const MAGIC: &str = "cgad-graph";
const VERSION: u32 = 1;

pub fn save_graph(graph: &CausalGraph, path: &Path) -> Result<()> {
    save_graph_with_header(graph, path, &[])
}

/// Writes the graph, adding each `header` line as a `#` comment.
pub fn save_graph_with_header(graph: &CausalGraph, path: &Path, header: &[String]) -> Result<()> {
    std::fs::write(path, render(graph, header)).map_err(|e| CgadError::io(path, e))
}

fn render(graph: &CausalGraph, header: &[String]) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    for line in header {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&format!("nodes {}\n", graph.n_nodes()));
    for name in &graph.node_names {
        out.push_str(&format!("node\t{name}\n"));
    }
    out.push_str(&format!("edges {}\n", graph.edge_count()));
    for (j, source) in graph.node_names.iter().enumerate() {
        for (i, target) in graph.node_names.iter().enumerate() {
            let w = graph.adjacency[i][j];
            if w != 0.0 {
                out.push_str(&format!("edge\t{source}\t{target}\t{w:.16e}\n"));
            }
        }
    }
    out
}

pub fn load_graph(path: &Path) -> Result<CausalGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| CgadError::io(path, e))?;
    parse(&text, &path.display().to_string())
}

fn parse(text: &str, file: &str) -> Result<CausalGraph> {
    let err = |row: usize, col: usize, msg: String| CgadError::parse(file, row, col, msg);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l))
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());

    let (row, first) = lines.next().ok_or_else(|| err(1, 1, "empty graph file".into()))?;
    match first.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(err(row, 12, format!("unsupported graph version {v}"))),
        _ => return Err(err(row, 1, "missing cgad-graph version tag".into())),
    }

    let count = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<(usize, usize)> {
        let (row, line) = lines
            .next()
            .ok_or_else(|| err(0, 1, format!("missing '{key}' line")))?;
        let value = line
            .strip_prefix(key)
            .and_then(|rest| rest.trim().parse::<usize>().ok())
            .ok_or_else(|| err(row, 1, format!("expected '{key} <count>'")))?;
        Ok((row, value))
    };

    let (_, n) = count(&mut lines, "nodes")?;
    let mut names = Vec::with_capacity(n);
    let mut index = HashMap::new();
    for _ in 0..n {
        let (row, line) = lines.next().ok_or_else(|| err(0, 1, "truncated node list".into()))?;
        let name = line
            .strip_prefix("node\t")
            .ok_or_else(|| err(row, 1, "expected node line".into()))?;
        if index.insert(name.to_string(), names.len()).is_some() {
            return Err(err(row, 6, format!("duplicate node name {name:?}")));
        }
        names.push(name.to_string());
    }

    let (_, m) = count(&mut lines, "edges")?;
    let mut adjacency = vec![vec![0.0; n]; n];
    let mut seen = HashSet::new();
    for _ in 0..m {
        let (row, line) = lines.next().ok_or_else(|| err(0, 1, "truncated edge list".into()))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 || fields[0] != "edge" {
            return Err(err(row, 1, "expected edge<TAB>source<TAB>target<TAB>weight".into()));
        }
        let lookup = |name: &str, col: usize| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| err(row, col, format!("edge references unknown node {name:?}")))
        };
        let j = lookup(fields[1], 2)?;
        let i = lookup(fields[2], 3)?;
        let w: f64 = fields[3]
            .parse()
            .map_err(|_| err(row, 4, format!("invalid weight {:?}", fields[3])))?;
        if !seen.insert((i, j)) {
            return Err(err(row, 1, format!("duplicate edge {} -> {}", fields[1], fields[2])));
        }
        adjacency[i][j] = w;
    }
    if let Some((row, _)) = lines.next() {
        return Err(err(row, 1, "unexpected content after edge list".into()));
    }
    CausalGraph::new(adjacency, names).map_err(|e| err(0, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> CausalGraph {
        CausalGraph::new(
            vec![vec![0.0, 0.0], vec![1.0 / 3.0, 0.0]],
            vec!["x0".into(), "x1".into()],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let g = example();
        save_graph_with_header(&g, &path, &["config-hash abc".into()]).unwrap();
        let back = load_graph(&path).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.adjacency[1][0].to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn duplicate_edge_rejected() {
        let text = "cgad-graph 1\nnodes 2\nnode\ta\nnode\tb\nedges 2\nedge\ta\tb\t0.5\nedge\ta\tb\t0.25\n";
        let e = parse(text, "t").unwrap_err();
        assert!(matches!(e, CgadError::Parse { row: 7, .. }), "{e}");
    }

    #[test]
    fn unknown_node_rejected() {
        let text = "cgad-graph 1\nnodes 2\nnode\ta\nnode\tb\nedges 1\nedge\ta\tz\t0.5\n";
        let e = parse(text, "t").unwrap_err();
        assert!(e.to_string().contains("unknown node"), "{e}");
    }

    #[test]
    fn version_and_truncation_checked() {
        assert!(parse("cgad-graph 9\nnodes 0\nedges 0\n", "t").is_err());
        assert!(parse("cgad-graph 1\nnodes 2\nnode\ta\n", "t").is_err());
        assert!(parse("", "t").is_err());
    }
}
