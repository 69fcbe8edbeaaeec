//! Plain-text chain files.
//!
//! A chain file is a header of `key value` lines followed by the stored
//! matrices, one row per line, row-major:
//!
//! ```text
//! n 2
//! t0 0
//! count 2
//! extension repeat
//! 0.5 0.5
//! 0.5 0.5
//! 1 0
//! 0.5 0.5
//! ```
//!
//! The `generator` extension carries three more header lines (`family`,
//! `params`, `seed`) so a seeded family survives the round trip. Numbers
//! are written in shortest form that parses back to the identical f64,
//! so write-then-read is lossless. Full-line comments start with `#`.

use crate::chain_core::{ChainWindow, Extension, Matrix};
use crate::error::{Error, Result};
use crate::random_chains::{parse_family, GeneratorSpec};

/// Formats an f64 so that parsing the text recovers the exact value.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Serializes a chain window to the chain file format.
pub fn write_chain_spec(chain: &ChainWindow) -> String {
    let mut out = String::new();
    out.push_str(&format!("n {}\n", chain.n()));
    out.push_str(&format!("t0 {}\n", chain.t0()));
    out.push_str(&format!("count {}\n", chain.len()));
    out.push_str(&format!("extension {}\n", chain.extension().keyword()));
    if let Extension::Generator(spec) = chain.extension() {
        out.push_str(&format!("family {}\n", spec.family().name()));
        out.push_str(&format!("params {}\n", spec.family().params_string()));
        out.push_str(&format!("seed {}\n", spec.seed()));
    }
    for m in chain.matrices() {
        for i in 0..m.n() {
            let row: Vec<String> = m.row(i).iter().map(|&v| format_f64(v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Parses the chain file format.
pub fn parse_chain_spec(text: &str) -> Result<ChainWindow> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let mut n: Option<usize> = None;
    let mut t0: Option<usize> = None;
    let mut count: Option<usize> = None;
    let mut extension: Option<String> = None;
    let mut family: Option<String> = None;
    let mut params: Option<String> = None;
    let mut seed: Option<u64> = None;

    // Header lines until the first matrix row.
    let mut pending: Option<&str> = None;
    for line in lines.by_ref() {
        let Some((key, value)) = line.split_once(char::is_whitespace) else {
            return Err(Error::Parse(format!("malformed line `{line}`")));
        };
        let value = value.trim();
        match key {
            "n" => n = Some(parse_usize("n", value)?),
            "t0" => t0 = Some(parse_usize("t0", value)?),
            "count" => count = Some(parse_usize("count", value)?),
            "extension" => extension = Some(value.to_string()),
            "family" => family = Some(value.to_string()),
            "params" => params = Some(value.to_string()),
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|_| {
                    Error::Parse(format!("seed `{value}` is not a 64-bit unsigned integer"))
                })?)
            }
            _ => {
                // Not a header key: this line starts the matrix data.
                pending = Some(line);
                break;
            }
        }
    }

    let n = n.ok_or_else(|| Error::Parse("missing header field n".into()))?;
    let t0 = t0.ok_or_else(|| Error::Parse("missing header field t0".into()))?;
    let count = count.ok_or_else(|| Error::Parse("missing header field count".into()))?;
    let ext_word = extension.ok_or_else(|| Error::Parse("missing header field extension".into()))?;
    if count == 0 {
        return Err(Error::Parse("count must be at least 1".into()));
    }

    let extension = match ext_word.as_str() {
        "identity" => Extension::Identity,
        "repeat" => Extension::RepeatLast,
        "cycle" => Extension::Cycle,
        "generator" => {
            let family_name =
                family.ok_or_else(|| Error::Parse("generator extension needs family".into()))?;
            let params = params.unwrap_or_default();
            let seed =
                seed.ok_or_else(|| Error::Parse("generator extension needs seed".into()))?;
            let fam = parse_family(&family_name, &params)?;
            Extension::Generator(GeneratorSpec::new(fam, n, seed)?)
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown extension `{other}` (expected identity, repeat, cycle, generator)"
            )))
        }
    };

    // Matrix rows: count blocks of n lines of n numbers.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count * n);
    let mut feed = |line: &str| -> Result<()> {
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != n {
            return Err(Error::Parse(format!(
                "matrix row has {} entries, expected {n}",
                row.len()
            )));
        }
        rows.push(row);
        Ok(())
    };
    if let Some(line) = pending {
        feed(line)?;
    }
    for line in lines {
        feed(line)?;
    }
    if rows.len() != count * n {
        return Err(Error::Parse(format!(
            "expected {} matrix rows ({count} blocks of {n}), found {}",
            count * n,
            rows.len()
        )));
    }

    let matrices = rows
        .chunks(n)
        .map(Matrix::from_rows)
        .collect::<Result<Vec<_>>>()?;
    ChainWindow::new(t0, matrices, extension)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("{key} `{value}` is not a nonnegative integer")))
}

/// Reads a chain file from disk.
pub fn load_chain(path: &std::path::Path) -> Result<ChainWindow> {
    parse_chain_spec(&std::fs::read_to_string(path)?)
}

/// Writes a chain file to disk.
pub fn save_chain(path: &std::path::Path, chain: &ChainWindow) -> Result<()> {
    std::fs::write(path, write_chain_spec(chain))?;
    Ok(())
}
