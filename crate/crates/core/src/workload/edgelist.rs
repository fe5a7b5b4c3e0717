//! Plain-text edge lists: one `src dst weight` line per edge.

use std::io::{self, BufRead, Write};

use super::Edge;

#[derive(Debug, thiserror::Error)]
pub enum EdgeListError {
    #[error("line {line}: expected `src dst weight`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_edges(mut out: impl Write, edges: &[Edge]) -> io::Result<()> {
    for e in edges {
        writeln!(out, "{} {} {}", e.src, e.dst, e.weight)?;
    }
    out.flush()
}

/// Blank lines are skipped.
pub fn read_edges(input: impl BufRead) -> Result<Vec<Edge>, EdgeListError> {
    let mut edges = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || EdgeListError::Malformed {
            line: i + 1,
            text: line.clone(),
        };
        let fields: Vec<u32> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match fields[..] {
            [src, dst, weight] => edges.push(Edge { src, dst, weight }),
            _ => return Err(bad()),
        }
    }
    Ok(edges)
}
