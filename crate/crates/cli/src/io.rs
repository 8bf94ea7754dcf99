//! Text formats for point sets and weight systems.
//!
//! Point sets: a header line `N d`, then `N` lines of `d` whitespace-separated
//! coordinates in `[0,1]`.
//!
//! Weights: a header line `product` followed by `j gamma_j` lines (indices
//! `1..=L` in any order, each exactly once) and at most one tail line
//! `tail c_over_sqrt_log c=<v>` or `tail geometric ratio=<v>`; or a header
//! line `explicit` followed by `i1,i2,...,ik gamma` lines. Blank lines and
//! text after `#` are ignored everywhere.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use stardisc_core::weights::ExplicitWeights;
use stardisc_core::{PointSet, ProductWeights, SubsetMask, Tail, WeightSystem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

/// Non-empty lines with comments stripped, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(line: usize, s: &str) -> Result<f64, FormatError> {
    s.parse::<f64>().map_err(|_| err(line, format!("not a number: {s:?}")))
}

pub fn parse_points(text: &str) -> Result<PointSet, FormatError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header `N d`"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [n, d] = fields[..] else {
        return Err(err(hl, "header must be `N d`"));
    };
    let n: usize = n.parse().map_err(|_| err(hl, format!("bad N: {n:?}")))?;
    let d: usize = d.parse().map_err(|_| err(hl, format!("bad d: {d:?}")))?;
    if n == 0 || d == 0 {
        return Err(err(hl, "N and d must be at least 1"));
    }
    let mut coords = Vec::with_capacity(n * d);
    let mut last = hl;
    for k in 0..n {
        let (ln, row) = lines.next().ok_or_else(|| err(last + 1, format!("expected {n} points, found {k}")))?;
        last = ln;
        let vals: Vec<&str> = row.split_whitespace().collect();
        if vals.len() != d {
            return Err(err(ln, format!("expected {d} coordinates, found {}", vals.len())));
        }
        for v in vals {
            let x = parse_f64(ln, v)?;
            if !(0.0..=1.0).contains(&x) {
                return Err(err(ln, format!("coordinate {x} outside [0,1]")));
            }
            coords.push(x);
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, format!("more than {n} points")));
    }
    PointSet::from_flat(d, coords).map_err(|e| err(hl, e.to_string()))
}

/// Coordinates are written in shortest round-trip form.
pub fn write_points(ps: &PointSet) -> String {
    let mut out = format!("{} {}\n", ps.len(), ps.dim());
    for p in ps.points() {
        let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn parse_tail(line: usize, rest: &[&str]) -> Result<Tail, FormatError> {
    let value = |key: &str| -> Result<f64, FormatError> {
        let [kv] = rest[1..] else {
            return Err(err(line, format!("expected `{key}=<value>`")));
        };
        let v = kv.strip_prefix(key).and_then(|s| s.strip_prefix('=')).ok_or_else(|| err(line, format!("expected `{key}=<value>`")))?;
        parse_f64(line, v)
    };
    match rest.first().copied() {
        Some("c_over_sqrt_log") => Ok(Tail::InverseSqrtLog { c: value("c")? }),
        Some("geometric") => Ok(Tail::Geometric { ratio: value("ratio")? }),
        other => Err(err(line, format!("unknown tail family {other:?}"))),
    }
}

pub fn parse_weights(text: &str) -> Result<WeightSystem, FormatError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header `product` or `explicit`"))?;
    match header {
        "product" => {
            let mut prefix: Vec<Option<f64>> = Vec::new();
            let mut tail = None;
            for (ln, row) in lines {
                let fields: Vec<&str> = row.split_whitespace().collect();
                if fields.first() == Some(&"tail") {
                    if tail.is_some() {
                        return Err(err(ln, "more than one tail line"));
                    }
                    tail = Some(parse_tail(ln, &fields[1..])?);
                    continue;
                }
                let [j, g] = fields[..] else {
                    return Err(err(ln, "expected `j gamma_j`"));
                };
                let j: usize = j.parse().map_err(|_| err(ln, format!("bad index {j:?}")))?;
                if j == 0 {
                    return Err(err(ln, "indices are 1-based"));
                }
                let g = parse_f64(ln, g)?;
                if prefix.len() < j {
                    prefix.resize(j, None);
                }
                if prefix[j - 1].replace(g).is_some() {
                    return Err(err(ln, format!("index {j} given twice")));
                }
            }
            let prefix = prefix
                .into_iter()
                .enumerate()
                .map(|(k, g)| g.ok_or_else(|| err(hl, format!("missing weight for index {}", k + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            let p = ProductWeights::new(prefix, tail).map_err(|e| err(hl, e.to_string()))?;
            Ok(p.into())
        }
        "explicit" => {
            let mut entries = Vec::new();
            for (ln, row) in lines {
                let fields: Vec<&str> = row.split_whitespace().collect();
                let [ix, g] = fields[..] else {
                    return Err(err(ln, "expected `i1,i2,... gamma`"));
                };
                let ix = ix
                    .split(',')
                    .map(|s| s.parse::<usize>().map_err(|_| err(ln, format!("bad index {s:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let mask = SubsetMask::from_indices(ix).map_err(|e| err(ln, e.to_string()))?;
                entries.push((mask, parse_f64(ln, g)?));
            }
            let e = ExplicitWeights::new(entries).map_err(|e| err(hl, e.to_string()))?;
            Ok(e.into())
        }
        other => Err(err(hl, format!("unknown weight header {other:?}"))),
    }
}

pub fn write_weights(ws: &WeightSystem) -> String {
    let mut out = String::new();
    match ws {
        WeightSystem::Product(p) => {
            out.push_str("product\n");
            for (k, g) in p.prefix().iter().enumerate() {
                let _ = writeln!(out, "{} {g:?}", k + 1);
            }
            match p.tail() {
                Some(Tail::InverseSqrtLog { c }) => {
                    let _ = writeln!(out, "tail c_over_sqrt_log c={c:?}");
                }
                Some(Tail::Geometric { ratio }) => {
                    let _ = writeln!(out, "tail geometric ratio={ratio:?}");
                }
                None => {}
            }
        }
        WeightSystem::Explicit(e) => {
            out.push_str("explicit\n");
            for (m, w) in e.entries() {
                let ix: Vec<String> = m.indices().map(|j| j.to_string()).collect();
                let _ = writeln!(out, "{} {w:?}", ix.join(","));
            }
        }
    }
    out
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

pub fn read_points(path: &Path) -> Result<PointSet, FormatError> {
    parse_points(&read(path)?)
}

pub fn read_weights(path: &Path) -> Result<WeightSystem, FormatError> {
    parse_weights(&read(path)?)
}

pub fn write_file(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}
