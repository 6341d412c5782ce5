//! Plain-text network checkpoints.
//!
//! ```text
//! esgrl-ckpt v1
//! sizes 22 64 64 2
//! w0 <fan_in·fan_out floats, row-major>
//! b0 <fan_out floats>
//! ...one w/b pair per layer...
//! log_std <act_dim floats>      (policy heads only)
//! ```
//!
//! Floats are written with `Display`, whose shortest-round-trip output
//! parses back to the identical bits, so save → load is exact.

use std::io::Write;

use crate::scalar::Scalar;

use super::{Layer, Mlp, NnError};

const VERSION_LINE: &str = "esgrl-ckpt v1";

pub fn write_checkpoint<F: Scalar, W: Write>(
    out: &mut W,
    mlp: &Mlp<F>,
    log_std: Option<&[F]>,
) -> std::io::Result<()> {
    writeln!(out, "{VERSION_LINE}")?;
    write!(out, "sizes")?;
    for s in mlp.sizes() {
        write!(out, " {s}")?;
    }
    writeln!(out)?;
    for (li, layer) in mlp.layers().iter().enumerate() {
        write_row(out, &format!("w{li}"), &layer.w)?;
        write_row(out, &format!("b{li}"), &layer.b)?;
    }
    if let Some(ls) = log_std {
        write_row(out, "log_std", ls)?;
    }
    Ok(())
}

fn write_row<F: Scalar, W: Write>(out: &mut W, tag: &str, values: &[F]) -> std::io::Result<()> {
    write!(out, "{tag}")?;
    for v in values {
        write!(out, " {v}")?;
    }
    writeln!(out)
}

/// Parses a checkpoint back into a net and, if present, its log-std vector.
/// Layout is validated strictly; any missing, extra, or misshapen line is
/// an error with its line number.
pub fn read_checkpoint<F: Scalar>(text: &str) -> Result<(Mlp<F>, Option<Vec<F>>), NnError> {
    let mut lines = text.lines().enumerate();
    let (n, first) = next_line(&mut lines)?;
    if first != VERSION_LINE {
        return Err(err(n, format!("expected `{VERSION_LINE}`, got `{first}`")));
    }

    let (n, sizes_line) = next_line(&mut lines)?;
    let mut tokens = sizes_line.split_ascii_whitespace();
    if tokens.next() != Some("sizes") {
        return Err(err(n, "expected `sizes ...`".into()));
    }
    let sizes = tokens
        .map(|t| t.parse::<usize>().map_err(|e| err(n, format!("bad size `{t}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.len() < 2 {
        return Err(err(n, format!("need at least 2 sizes, got {}", sizes.len())));
    }

    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (li, pair) in sizes.windows(2).enumerate() {
        let w = read_row(&mut lines, &format!("w{li}"), pair[0] * pair[1])?;
        let b = read_row(&mut lines, &format!("b{li}"), pair[1])?;
        layers.push(Layer { w, b });
    }
    let out_dim = *sizes.last().expect("checked length");
    let mlp = Mlp::from_parts(sizes, layers)?;

    let log_std = match lines.next() {
        None => None,
        Some((i, line)) => {
            let values = parse_row(i, line, "log_std", out_dim)?;
            if let Some((i, extra)) = lines.next() {
                return Err(err(i, format!("unexpected trailing line `{extra}`")));
            }
            Some(values)
        }
    };
    Ok((mlp, log_std))
}

fn next_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(usize, &'a str), NnError> {
    lines
        .next()
        .map(|(i, l)| (i, l.trim_end_matches('\r')))
        .ok_or_else(|| err(usize::MAX, "unexpected end of checkpoint".into()))
}

fn read_row<'a, F: Scalar>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    tag: &str,
    expected: usize,
) -> Result<Vec<F>, NnError> {
    let (i, line) = next_line(lines)?;
    parse_row(i, line, tag, expected)
}

fn parse_row<F: Scalar>(i: usize, line: &str, tag: &str, expected: usize) -> Result<Vec<F>, NnError> {
    let line = line.trim_end_matches('\r');
    let mut tokens = line.split_ascii_whitespace();
    match tokens.next() {
        Some(t) if t == tag => {}
        other => return Err(err(i, format!("expected `{tag}` row, got `{}`", other.unwrap_or("")))),
    }
    let values = tokens
        .map(|t| t.parse::<F>().map_err(|e| err(i, format!("bad float `{t}`: {e}"))))
        .collect::<Result<Vec<F>, _>>()?;
    if values.len() != expected {
        return Err(err(i, format!("`{tag}` has {} values, expected {expected}", values.len())));
    }
    Ok(values)
}

fn err(line_index: usize, message: String) -> NnError {
    // Stored 1-based; usize::MAX marks EOF.
    let line = if line_index == usize::MAX { 0 } else { line_index + 1 };
    NnError::Checkpoint { line, message }
}
