//! Reader/writer for a documented subset of the LP text file format.
//!
//! Supported sections: `Minimize`/`Maximize` with a single objective row,
//! `Subject To`, `Bounds`, `Binaries` (alias `Binary`), `End`. Each
//! constraint sits on one line: `name: terms (<=|=|>=) rhs`. Bounds lines
//! accept `l <= x <= u`, one-sided forms, `x = v`, and `x free`. This is
//! enough to round-trip every problem the synthesis layer produces and to
//! hand problems to external solvers for cross-checking.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use nalgebra::ComplexField;

use super::problem::{Cmp, LinearProgram, Sense};
use crate::{Error, Result};

/// Serializes a problem to LP format text.
pub fn write_lp(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    if lp.objective.is_empty() {
        out.push_str(" 0 ");
        out.push_str(lp.names.first().map(|s| s.as_str()).unwrap_or("x0"));
    } else {
        let mut sorted = lp.objective.clone();
        sorted.sort_by_key(|&(v, _)| v);
        for (v, c) in sorted {
            push_term(&mut out, c, &lp.names[v]);
        }
    }
    out.push_str("\nSubject To\n");
    for row in &lp.constraints {
        out.push(' ');
        out.push_str(&row.name);
        out.push(':');
        if row.coeffs.is_empty() {
            out.push_str(" 0 ");
            out.push_str(lp.names.first().map(|s| s.as_str()).unwrap_or("x0"));
        }
        let mut sorted = row.coeffs.clone();
        sorted.sort_by_key(|&(v, _)| v);
        for (v, c) in sorted {
            push_term(&mut out, c, &lp.names[v]);
        }
        out.push_str(match row.cmp {
            Cmp::Le => " <= ",
            Cmp::Eq => " = ",
            Cmp::Ge => " >= ",
        });
        out.push_str(&fmt_num(row.rhs));
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if lp.binary[j] && l == 0.0 && u == 1.0 {
            continue; // implied by Binaries section
        }
        let name = &lp.names[j];
        if l.is_infinite() && u.is_infinite() {
            out.push_str(&alloc::format!(" {name} free\n"));
        } else if l == u {
            out.push_str(&alloc::format!(" {name} = {}\n", fmt_num(l)));
        } else if l.is_infinite() {
            out.push_str(&alloc::format!(" {name} <= {}\n", fmt_num(u)));
            out.push_str(&alloc::format!(" {name} >= -inf\n"));
        } else if u.is_infinite() {
            out.push_str(&alloc::format!(" {name} >= {}\n", fmt_num(l)));
        } else {
            out.push_str(&alloc::format!(
                " {} <= {name} <= {}\n",
                fmt_num(l),
                fmt_num(u)
            ));
        }
    }
    if lp.has_binaries() {
        out.push_str("Binaries\n");
        for j in 0..lp.num_vars() {
            if lp.binary[j] {
                out.push_str(&alloc::format!(" {}\n", lp.names[j]));
            }
        }
    }
    out.push_str("End\n");
    out
}

fn push_term(out: &mut String, c: f64, name: &str) {
    if c >= 0.0 {
        out.push_str(" + ");
    } else {
        out.push_str(" - ");
    }
    out.push_str(&fmt_num(c.abs()));
    out.push(' ');
    out.push_str(name);
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        alloc::format!("{}", x as i64)
    } else {
        alloc::format!("{x:.12}")
    }
}

/// Parses LP format text (the documented subset written by [`write_lp`]).
pub fn read_lp(text: &str) -> Result<LinearProgram> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        Preamble,
        Objective,
        Rows,
        Bounds,
        Binaries,
        Done,
    }
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut section = Section::Preamble;
    let mut var_ids: alloc::collections::BTreeMap<String, usize> = Default::default();
    let mut intern = |lp: &mut LinearProgram,
                      ids: &mut alloc::collections::BTreeMap<String, usize>,
                      name: &str| {
        *ids.entry(name.to_string())
            .or_insert_with(|| lp.add_var(name, f64::NEG_INFINITY, f64::INFINITY))
    };
    // Default LP-format bounds are [0, inf); we intern with free bounds and
    // fix up any variable never mentioned in Bounds at the end.
    let mut bounded: alloc::collections::BTreeSet<usize> = Default::default();

    let mut pending_obj = String::new();
    for raw in text.lines() {
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_lowercase();
        let new_section = match lower.as_str() {
            "minimize" | "min" => Some((Section::Objective, Sense::Minimize)),
            "maximize" | "max" => Some((Section::Objective, Sense::Maximize)),
            "subject to" | "st" | "s.t." | "such that" => Some((Section::Rows, lp.sense)),
            "bounds" => Some((Section::Bounds, lp.sense)),
            "binaries" | "binary" | "bin" => Some((Section::Binaries, lp.sense)),
            "end" => Some((Section::Done, lp.sense)),
            "general" | "generals" => {
                return Err(Error::InvalidInput(
                    "general integers are not supported".to_string(),
                ))
            }
            _ => None,
        };
        if let Some((s, sense)) = new_section {
            if section == Section::Objective && !pending_obj.is_empty() {
                parse_objective(&mut lp, &mut var_ids, &mut intern, &pending_obj)?;
                pending_obj.clear();
            }
            section = s;
            lp.sense = sense;
            continue;
        }
        match section {
            Section::Preamble => {
                return Err(Error::InvalidInput(alloc::format!(
                    "unexpected text before objective: {line}"
                )))
            }
            Section::Objective => {
                pending_obj.push(' ');
                pending_obj.push_str(line);
            }
            Section::Rows => {
                let (name, body) = split_label(line);
                let (coeffs, cmp, rhs) = parse_row(&mut lp, &mut var_ids, &mut intern, body)?;
                lp.add_constraint(name.unwrap_or_else(|| alloc::format!("c{}", lp.constraints.len())), coeffs, cmp, rhs);
            }
            Section::Bounds => {
                parse_bound(&mut lp, &mut var_ids, &mut intern, &mut bounded, line)?;
            }
            Section::Binaries => {
                for tok in line.split_whitespace() {
                    let v = intern(&mut lp, &mut var_ids, tok);
                    lp.binary[v] = true;
                    lp.lower[v] = 0.0;
                    lp.upper[v] = 1.0;
                    bounded.insert(v);
                }
            }
            Section::Done => {}
        }
    }
    if !pending_obj.is_empty() {
        parse_objective(&mut lp, &mut var_ids, &mut intern, &pending_obj)?;
    }
    // LP-format default bound for unmentioned variables.
    for v in 0..lp.num_vars() {
        if !bounded.contains(&v) && lp.lower[v].is_infinite() && lp.upper[v].is_infinite() {
            lp.lower[v] = 0.0;
        }
    }
    lp.validate()?;
    Ok(lp)
}

fn split_label(line: &str) -> (Option<String>, &str) {
    if let Some(pos) = line.find(':') {
        // Avoid treating "<=" in weird names; plain heuristic is fine for
        // our writer's output and common hand-written files.
        let (label, rest) = line.split_at(pos);
        (Some(label.trim().to_string()), &rest[1..])
    } else {
        (None, line)
    }
}

type Intern<'a> = dyn FnMut(
        &mut LinearProgram,
        &mut alloc::collections::BTreeMap<String, usize>,
        &str,
    ) -> usize
    + 'a;

fn parse_objective(
    lp: &mut LinearProgram,
    ids: &mut alloc::collections::BTreeMap<String, usize>,
    intern: &mut Intern<'_>,
    text: &str,
) -> Result<()> {
    let (_, body) = split_label(text.trim());
    let terms = parse_terms(lp, ids, intern, body)?;
    for (v, c) in terms {
        let existing = lp.objective.iter_mut().find(|(ev, _)| *ev == v);
        match existing {
            Some(entry) => entry.1 += c,
            None => lp.objective.push((v, c)),
        }
    }
    Ok(())
}

fn parse_row(
    lp: &mut LinearProgram,
    ids: &mut alloc::collections::BTreeMap<String, usize>,
    intern: &mut Intern<'_>,
    body: &str,
) -> Result<(Vec<(usize, f64)>, Cmp, f64)> {
    let (lhs, cmp, rhs_text) = if let Some(p) = body.find("<=") {
        (&body[..p], Cmp::Le, &body[p + 2..])
    } else if let Some(p) = body.find(">=") {
        (&body[..p], Cmp::Ge, &body[p + 2..])
    } else if let Some(p) = body.find('=') {
        (&body[..p], Cmp::Eq, &body[p + 1..])
    } else {
        return Err(Error::InvalidInput(alloc::format!(
            "constraint without comparator: {body}"
        )));
    };
    let rhs: f64 = rhs_text
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(alloc::format!("bad rhs: {rhs_text}")))?;
    let coeffs = parse_terms(lp, ids, intern, lhs)?;
    Ok((coeffs, cmp, rhs))
}

/// Parses `+ 3 x - y + 2.5 z` style linear expressions.
fn parse_terms(
    lp: &mut LinearProgram,
    ids: &mut alloc::collections::BTreeMap<String, usize>,
    intern: &mut Intern<'_>,
    text: &str,
) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut sign = 1.0;
    let mut coeff: Option<f64> = None;
    for tok in tokenize_terms(text) {
        match tok.as_str() {
            "+" => {}
            "-" => sign = -sign,
            t => {
                if let Ok(num) = t.parse::<f64>() {
                    coeff = Some(coeff.unwrap_or(1.0) * num);
                } else {
                    let v = intern(lp, ids, t);
                    let c = sign * coeff.take().unwrap_or(1.0);
                    if let Some(entry) = out.iter_mut().find(|(ev, _)| *ev == v) {
                        entry.1 += c;
                    } else {
                        out.push((v, c));
                    }
                    sign = 1.0;
                }
            }
        }
    }
    if coeff.is_some() {
        return Err(Error::InvalidInput(alloc::format!(
            "dangling coefficient in expression: {text}"
        )));
    }
    Ok(out)
}

fn tokenize_terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '+' | '-' => {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_bound(
    lp: &mut LinearProgram,
    ids: &mut alloc::collections::BTreeMap<String, usize>,
    intern: &mut Intern<'_>,
    bounded: &mut alloc::collections::BTreeSet<usize>,
    line: &str,
) -> Result<()> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let parse_num = |s: &str| -> Result<f64> {
        match s.to_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            _ => s
                .parse()
                .map_err(|_| Error::InvalidInput(alloc::format!("bad bound value: {s}"))),
        }
    };
    match toks.as_slice() {
        [name, kw] if kw.eq_ignore_ascii_case("free") => {
            let v = intern(lp, ids, name);
            lp.lower[v] = f64::NEG_INFINITY;
            lp.upper[v] = f64::INFINITY;
            bounded.insert(v);
        }
        [lo, le1, name, le2, hi] if *le1 == "<=" && *le2 == "<=" => {
            let v = intern(lp, ids, name);
            lp.lower[v] = parse_num(lo)?;
            lp.upper[v] = parse_num(hi)?;
            bounded.insert(v);
        }
        [name, op, val] => {
            let v = intern(lp, ids, name);
            match *op {
                "<=" => {
                    lp.upper[v] = parse_num(val)?;
                    if !bounded.contains(&v) {
                        lp.lower[v] = if lp.lower[v].is_infinite() { 0.0 } else { lp.lower[v] };
                    }
                }
                ">=" => lp.lower[v] = parse_num(val)?,
                "=" => {
                    let x = parse_num(val)?;
                    lp.lower[v] = x;
                    lp.upper[v] = x;
                }
                _ => {
                    return Err(Error::InvalidInput(alloc::format!(
                        "unrecognized bound line: {line}"
                    )))
                }
            }
            bounded.insert(v);
        }
        _ => {
            return Err(Error::InvalidInput(alloc::format!(
                "unrecognized bound line: {line}"
            )))
        }
    }
    Ok(())
}
