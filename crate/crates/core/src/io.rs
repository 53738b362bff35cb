//! Plain-text graph and labeling formats.
//!
//! Edge list: a `n=<N>` header line, then one `i j` pair per line, 1-indexed
//! with `i < j`. Labeling: one 1-based label per line. Lines starting with
//! `#` are comments in both formats and are skipped on read.

use std::io::{BufRead, Write};

use crate::error::{Result, SbmError};
use crate::graph::{Graph, Labeling};

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(idx, line)| match line {
            Err(e) => Some(Err(SbmError::Io(e))),
            Ok(l) => {
                let t = l.trim();
                if t.is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((idx + 1, t.to_string())))
                }
            }
        })
}

fn parse_err(line: usize, message: impl Into<String>) -> SbmError {
    SbmError::Parse {
        line,
        message: message.into(),
    }
}

pub fn write_edge_list<W: Write>(mut w: W, g: &Graph) -> Result<()> {
    writeln!(w, "n={}", g.n())?;
    for (i, j) in g.edges() {
        writeln!(w, "{} {}", i + 1, j + 1)?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
    let mut lines = data_lines(reader);
    let (line, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(1, "missing `n=<N>` header"))?;
    let n: usize = header
        .strip_prefix("n=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| parse_err(line, format!("expected `n=<N>`, found `{header}`")))?;
    let mut edges = Vec::new();
    for item in lines {
        let (line, text) = item?;
        let mut parts = text.split_whitespace();
        let mut next = || -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.parse::<usize>().ok())
                .ok_or_else(|| parse_err(line, format!("expected two node ids, found `{text}`")))
        };
        let (i, j) = (next()?, next()?);
        if i == 0 || j == 0 || i > n || j > n {
            return Err(parse_err(line, format!("node id out of range 1..={n}")));
        }
        if i == j {
            return Err(parse_err(line, "self-loop"));
        }
        edges.push((i - 1, j - 1));
    }
    Graph::from_edges(n, edges)
}

pub fn write_labels<W: Write>(mut w: W, z: &Labeling) -> Result<()> {
    for &l in z.labels() {
        writeln!(w, "{}", l + 1)?;
    }
    Ok(())
}

/// Reads 1-based labels. The block count is `k` when given, otherwise the
/// largest label seen.
pub fn read_labels<R: BufRead>(reader: R, k: Option<usize>) -> Result<Labeling> {
    let mut labels = Vec::new();
    for item in data_lines(reader) {
        let (line, text) = item?;
        let l: usize = text
            .parse()
            .map_err(|_| parse_err(line, format!("expected a positive label, found `{text}`")))?;
        if l == 0 {
            return Err(parse_err(line, "labels are 1-based"));
        }
        labels.push(l - 1);
    }
    let k = k.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    Labeling::new(labels, k)
}
