//! Plain-text multi-label format used by the extreme classification benchmarks.
//!
//! ```text
//! <n> <d> <L>
//! <l1>,<l2>,... <f1>:<v1> <f2>:<v2> ...
//! ```
//!
//! Ids are 0-based. An example without labels starts directly with its
//! feature list.

use std::io::{BufRead, Write};

use crate::data::{SparseDataset, SparseVector};
use crate::error::{Result, SllError};

fn parse_err(line: usize, message: impl Into<String>) -> SllError {
    SllError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(parse_err(
            1,
            format!("expected `<n> <d> <L>`, found {} tokens", tokens.len()),
        ));
    }
    let mut nums = [0usize; 3];
    for (slot, tok) in nums.iter_mut().zip(&tokens) {
        *slot = tok
            .parse()
            .map_err(|_| parse_err(1, format!("bad header count `{}`", tok)))?;
    }
    Ok((nums[0], nums[1], nums[2]))
}

fn parse_example(
    line: &str,
    lineno: usize,
    n_features: usize,
    n_labels: usize,
) -> Result<(SparseVector, Vec<usize>)> {
    let mut tokens = line.split_whitespace().peekable();
    let mut labels = Vec::new();
    if let Some(first) = tokens.peek() {
        if !first.contains(':') {
            for tok in first.split(',').filter(|s| !s.is_empty()) {
                let id: usize = tok
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad label id `{}`", tok)))?;
                if id >= n_labels {
                    return Err(parse_err(
                        lineno,
                        format!("label id {} >= L = {}", id, n_labels),
                    ));
                }
                labels.push(id);
            }
            tokens.next();
        }
    }
    let mut pairs = Vec::new();
    for tok in tokens {
        let (f, v) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(lineno, format!("expected `id:value`, got `{}`", tok)))?;
        let id: usize = f
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad feature id `{}`", f)))?;
        if id >= n_features {
            return Err(parse_err(
                lineno,
                format!("feature id {} >= d = {}", id, n_features),
            ));
        }
        let value: f64 = v
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad feature value `{}`", v)))?;
        if !value.is_finite() {
            return Err(parse_err(lineno, format!("non-finite value `{}`", v)));
        }
        pairs.push((id, value));
    }
    pairs.sort_by_key(|p| p.0);
    if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(lineno, format!("duplicate feature id {}", w[0].0)));
    }
    let (indices, values) = pairs.into_iter().unzip();
    let features = SparseVector::new(indices, values, n_features)
        .map_err(|e| parse_err(lineno, e.to_string()))?;
    Ok((features, labels))
}

/// Reads a dataset. Example order is preserved.
pub fn parse_xmlc<R: BufRead>(reader: R) -> Result<SparseDataset> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty input"))??;
    let (n, d, l) = parse_header(&header)?;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if features.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(lineno, format!("more than the declared {} examples", n)));
        }
        let (f, y) = parse_example(&line, lineno, d, l)?;
        features.push(f);
        labels.push(y);
    }
    if features.len() != n {
        return Err(parse_err(
            features.len() + 2,
            format!("expected {} examples, found {}", n, features.len()),
        ));
    }
    SparseDataset::new(d, l, features, labels).map_err(|e| parse_err(1, e.to_string()))
}

pub fn parse_xmlc_str(text: &str) -> Result<SparseDataset> {
    parse_xmlc(text.as_bytes())
}

/// Writes a dataset. Values use Rust's shortest round-trip float formatting.
pub fn write_xmlc<W: Write>(data: &SparseDataset, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{} {} {}",
        data.n_examples(),
        data.n_features(),
        data.n_labels()
    )?;
    let mut line = String::new();
    for (i, row) in data.features().rows().iter().enumerate() {
        line.clear();
        let labels = data.positive_labels(i);
        for (j, id) in labels.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&id.to_string());
        }
        for (f, v) in row.iter() {
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&format!("{}:{}", f, v));
        }
        writeln!(out, "{}", line)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_xmlc_string(data: &SparseDataset) -> String {
    let mut buf = Vec::new();
    write_xmlc(data, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("output is ASCII")
}
