//! CSV trace persistence.
//!
//! A trace file starts with `#`-prefixed metadata lines (scenario name,
//! seeds, and the seeded measurement matrices so randomized setups are
//! reproducible), followed by the mandatory header
//! `k,agent,dim,x_lo,x_hi,x_true,d_lo,d_hi,d_true` and one row per
//! round, agent, and state coordinate. Input columns are empty for
//! coordinates beyond the input dimension.

use std::io::{BufRead, Write};

use dsiso_core::observer::TraceRecord;
use dsiso_core::{Error, Result};

use crate::scenario::{Scenario, TruthTrace};

pub const TRACE_HEADER: &str = "k,agent,dim,x_lo,x_hi,x_true,d_lo,d_hi,d_true";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub agent: usize,
    pub dim: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_true: f64,
    pub d_lo: Option<f64>,
    pub d_hi: Option<f64>,
    pub d_true: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Writes metadata, the header, and all rows derived from the observer
/// records and the ground truth.
pub fn write_trace<W: Write>(
    out: &mut W,
    scenario: &Scenario,
    run_seed: u64,
    records: &[TraceRecord],
    truth: &TruthTrace,
) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(format!("trace write: {e}"));
    writeln!(out, "# scenario: {}", scenario.name).map_err(io)?;
    writeln!(out, "# scenario_seed: {}", scenario.seed).map_err(io)?;
    writeln!(out, "# run_seed: {run_seed}").map_err(io)?;
    for (i, s) in scenario.sensing.iter().enumerate() {
        let entries: Vec<String> = s.c.row_iter().flat_map(|r| {
            r.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>()
        }).collect();
        writeln!(
            out,
            "# C[{i}] ({}x{}): {}",
            s.c.nrows(),
            s.c.ncols(),
            entries.join(" ")
        )
        .map_err(io)?;
    }
    writeln!(out, "{TRACE_HEADER}").map_err(io)?;
    let p = scenario.input_dim();
    for rec in records {
        let k = rec.round;
        let x_true = &truth.xs[k];
        let d_true = truth.ds.get(k);
        let b = &rec.belief;
        for dim in 0..scenario.state_dim() {
            let (d_lo, d_hi, d_tr) = if dim < p && d_true.is_some() {
                (
                    Some(b.input_box.lower()[dim]),
                    Some(b.input_box.upper()[dim]),
                    Some(d_true.unwrap()[dim]),
                )
            } else {
                (None, None, None)
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                k,
                rec.agent,
                dim,
                fmt_opt(Some(b.state_box.lower()[dim])),
                fmt_opt(Some(b.state_box.upper()[dim])),
                fmt_opt(Some(x_true[dim])),
                fmt_opt(d_lo),
                fmt_opt(d_hi),
                fmt_opt(d_tr),
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

/// Reads a trace back; metadata lines are returned verbatim.
pub fn read_trace<R: BufRead>(input: R) -> Result<(Vec<String>, Vec<TraceRow>)> {
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidInput(format!("trace read: {e}")))?;
        if line.starts_with('#') {
            meta.push(line);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected trace header `{TRACE_HEADER}`",
                    lineno + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::InvalidInput(format!(
                "line {}: expected 9 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))
        };
        rows.push(TraceRow {
            k: idx(fields[0])?,
            agent: idx(fields[1])?,
            dim: idx(fields[2])?,
            x_lo: num(fields[3])?,
            x_hi: num(fields[4])?,
            x_true: num(fields[5])?,
            d_lo: opt(fields[6])?,
            d_hi: opt(fields[7])?,
            d_true: opt(fields[8])?,
        });
    }
    if !saw_header {
        return Err(Error::InvalidInput("trace has no header line".into()));
    }
    Ok((meta, rows))
}
