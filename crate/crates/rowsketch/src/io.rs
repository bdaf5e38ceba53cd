//! Stream file formats.
//!
//! Tagged stream: UTF-8 CSV, one item per line, `tag,v1,...,vd`.
//! Turnstile stream: UTF-8 CSV, one update per line, `+|-,v1,...,vd`.
//! Lines starting with '#' (after optional whitespace) and blank lines are
//! skipped in both formats.

use crate::error::{Error, Result};
use crate::stream::{TaggedRow, TurnstileUpdate};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn content_lines(reader: impl Read) -> impl Iterator<Item = std::io::Result<(usize, String)>> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|s| (i + 1, s)))
        .filter(|r| match r {
            Ok((_, s)) => {
                let t = s.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

fn parse_floats(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("bad number {f:?}: {e}")))
        })
        .collect()
}

/// Reads a tagged stream from CSV lines `tag,v1,...,vd`.
pub fn read_tagged(reader: impl Read) -> Result<Vec<TaggedRow>> {
    let mut out = Vec::new();
    for item in content_lines(reader) {
        let (line, s) = item?;
        let fields: Vec<&str> = s.trim().split(',').collect();
        if fields.len() < 2 {
            return Err(parse_err(line, "expected tag,v1,...,vd"));
        }
        let tag = fields[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("bad tag {:?}: {e}", fields[0])))?;
        let row = parse_floats(line, &fields[1..])?;
        out.push(TaggedRow::new(tag, row));
    }
    check_consistent_dims(&out.iter().map(|t| t.row.len()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Reads a turnstile stream from CSV lines `+|-,v1,...,vd`.
pub fn read_turnstile(reader: impl Read) -> Result<Vec<TurnstileUpdate>> {
    let mut out = Vec::new();
    for item in content_lines(reader) {
        let (line, s) = item?;
        let fields: Vec<&str> = s.trim().split(',').collect();
        if fields.len() < 2 {
            return Err(parse_err(line, "expected +|-,v1,...,vd"));
        }
        let delta = match fields[0].trim() {
            "+" => 1,
            "-" => -1,
            other => return Err(parse_err(line, format!("bad sign {other:?}, expected + or -"))),
        };
        let row = parse_floats(line, &fields[1..])?;
        out.push(TurnstileUpdate::new(row, delta));
    }
    check_consistent_dims(&out.iter().map(|t| t.row.len()).collect::<Vec<_>>())?;
    Ok(out)
}

fn check_consistent_dims(dims: &[usize]) -> Result<()> {
    if let Some(&first) = dims.first() {
        for (i, &d) in dims.iter().enumerate() {
            if d != first {
                return Err(parse_err(0, format!("row {i} has {d} entries, expected {first}")));
            }
        }
    }
    Ok(())
}

/// Writes a tagged stream in the CSV format accepted by [`read_tagged`].
pub fn write_tagged(mut writer: impl Write, items: &[TaggedRow]) -> Result<()> {
    for t in items {
        write!(writer, "{}", t.tag)?;
        for v in &t.row {
            write!(writer, ",{v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Writes a turnstile stream in the CSV format accepted by [`read_turnstile`].
/// Updates with |delta| > 1 are emitted as repeated unit updates.
pub fn write_turnstile(mut writer: impl Write, updates: &[TurnstileUpdate]) -> Result<()> {
    for u in updates {
        let sign = if u.delta >= 0 { '+' } else { '-' };
        for _ in 0..u.delta.unsigned_abs() {
            write!(writer, "{sign}")?;
            for v in &u.row {
                write!(writer, ",{v}")?;
            }
            writeln!(writer)?;
        }
    }
    Ok(())
}

pub fn read_tagged_path(path: impl AsRef<Path>) -> Result<Vec<TaggedRow>> {
    read_tagged(std::fs::File::open(path)?)
}

pub fn read_turnstile_path(path: impl AsRef<Path>) -> Result<Vec<TurnstileUpdate>> {
    read_turnstile(std::fs::File::open(path)?)
}
