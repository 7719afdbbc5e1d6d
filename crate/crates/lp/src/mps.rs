//! MPS text interchange.
//!
//! The writer emits fixed-column MPS with rows named `R<i>` and columns
//! `X<j>`; numbers use the shortest representation that round-trips, so
//! they may run past the classic field widths. The reader splits on
//! whitespace and accepts `N`, `L`, `G` and `E` rows plus the `LO`, `UP`,
//! `FX`, `FR`, `MI` and `PL` bound types. `G` rows are negated and `E` rows
//! become a pair of `<=` rows.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{LpError, LpProblem};

fn field(out: &mut String, a: &str, b: &str, c: &str, d: &str) {
    let _ = writeln!(out, " {a:<2} {b:<8}  {c:<8}  {d}");
}

/// Renders `problem` as fixed-column MPS.
pub fn write_mps(problem: &LpProblem, name: &str) -> String {
    let n = problem.num_vars();
    let m = problem.num_rows();
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n");
    out.push_str(" N  OBJ\n");
    for i in 0..m {
        let _ = writeln!(out, " L  R{i}");
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..m {
        let (cols, vals) = problem.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            by_col[j].push((i, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, entries) in by_col.iter().enumerate() {
        let col = format!("X{j}");
        let c = problem.objective()[j];
        if c != 0.0 || entries.is_empty() {
            field(&mut out, "", &col, "OBJ", &c.to_string());
        }
        for &(i, a) in entries {
            field(&mut out, "", &col, &format!("R{i}"), &a.to_string());
        }
    }

    out.push_str("RHS\n");
    for (i, &b) in problem.rhs().iter().enumerate() {
        if b != 0.0 {
            field(&mut out, "", "RHS", &format!("R{i}"), &b.to_string());
        }
    }

    out.push_str("BOUNDS\n");
    for j in 0..n {
        let col = format!("X{j}");
        let (lo, hi) = (problem.lower()[j], problem.upper()[j]);
        if lo == hi {
            field(&mut out, "FX", "BND", &col, &lo.to_string());
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            field(&mut out, "FR", "BND", &col, "");
            continue;
        }
        if lo == f64::NEG_INFINITY {
            field(&mut out, "MI", "BND", &col, "");
        } else if lo != 0.0 {
            field(&mut out, "LO", "BND", &col, &lo.to_string());
        }
        if hi != f64::INFINITY {
            field(&mut out, "UP", "BND", &col, &hi.to_string());
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    L,
    G,
    E,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

/// Parses MPS text into a validated problem.
pub fn read_mps(text: &str) -> Result<LpProblem, LpError> {
    let mut section = Section::None;
    let mut objective_name: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut row_kinds: Vec<RowKind> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut obj: Vec<f64> = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut bounds: Vec<(f64, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let err = |message: String| LpError::Mps { line, message };
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match tokens[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                other => return Err(err(format!("unsupported section {other}"))),
            };
            continue;
        }
        let number = |s: &str| -> Result<f64, LpError> {
            let v: f64 = s
                .parse()
                .map_err(|_| err(format!("invalid number {s:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("non-finite number {s:?}")))
            }
        };
        match section {
            Section::Rows => {
                let [kind, name] = tokens[..] else {
                    return Err(err("ROWS entry needs a type and a name".into()));
                };
                let kind = match kind {
                    "N" => {
                        if objective_name.is_none() {
                            objective_name = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => RowKind::L,
                    "G" => RowKind::G,
                    "E" => RowKind::E,
                    other => return Err(err(format!("unknown row type {other}"))),
                };
                if row_index.insert(name.to_string(), row_kinds.len()).is_some() {
                    return Err(err(format!("duplicate row {name}")));
                }
                row_kinds.push(kind);
                rhs.push(0.0);
            }
            Section::Columns => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("COLUMNS entry needs 3 or 5 fields".into()));
                }
                let next = col_index.len();
                let j = *col_index.entry(tokens[0].to_string()).or_insert(next);
                if j == obj.len() {
                    obj.push(0.0);
                    entries.push(Vec::new());
                    bounds.push((0.0, f64::INFINITY));
                }
                for pair in tokens[1..].chunks(2) {
                    let v = number(pair[1])?;
                    if Some(pair[0]) == objective_name.as_deref() {
                        obj[j] += v;
                    } else if let Some(&i) = row_index.get(pair[0]) {
                        entries[j].push((i, v));
                    } else {
                        return Err(err(format!("unknown row {}", pair[0])));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("RHS entry needs 3 or 5 fields".into()));
                }
                for pair in tokens[1..].chunks(2) {
                    let v = number(pair[1])?;
                    match row_index.get(pair[0]) {
                        Some(&i) => rhs[i] = v,
                        None if Some(pair[0]) == objective_name.as_deref() => {
                            return Err(err("objective constants are not supported".into()))
                        }
                        None => return Err(err(format!("unknown row {}", pair[0]))),
                    }
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err("BOUNDS entry needs at least 3 fields".into()));
                }
                let Some(&j) = col_index.get(tokens[2]) else {
                    return Err(err(format!("unknown column {}", tokens[2])));
                };
                let value = || -> Result<f64, LpError> {
                    match tokens.get(3) {
                        Some(s) => number(s),
                        None => Err(err(format!("bound {} needs a value", tokens[0]))),
                    }
                };
                let b = &mut bounds[j];
                match tokens[0] {
                    "LO" => b.0 = value()?,
                    "UP" => b.1 = value()?,
                    "FX" => {
                        let v = value()?;
                        *b = (v, v);
                    }
                    "FR" => *b = (f64::NEG_INFINITY, f64::INFINITY),
                    "MI" => b.0 = f64::NEG_INFINITY,
                    "PL" => b.1 = f64::INFINITY,
                    other => return Err(err(format!("unsupported bound type {other}"))),
                }
            }
            Section::None => {}
            Section::End => return Err(err("data after ENDATA".into())),
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); row_kinds.len()];
    for (j, col) in entries.iter().enumerate() {
        for &(i, a) in col {
            rows[i].push((j, a));
        }
    }
    let mut problem = LpProblem::new(obj.len());
    for (j, &c) in obj.iter().enumerate() {
        problem.set_objective(j, c);
        problem.set_bounds(j, bounds[j].0, bounds[j].1);
    }
    for (i, row) in rows.iter().enumerate() {
        let negated: Vec<(usize, f64)> = row.iter().map(|&(j, a)| (j, -a)).collect();
        match row_kinds[i] {
            RowKind::L => {
                problem.add_row(row, rhs[i]);
            }
            RowKind::G => {
                problem.add_row(&negated, -rhs[i]);
            }
            RowKind::E => {
                problem.add_row(row, rhs[i]);
                problem.add_row(&negated, -rhs[i]);
            }
        }
    }
    problem.validate()?;
    Ok(problem)
}
