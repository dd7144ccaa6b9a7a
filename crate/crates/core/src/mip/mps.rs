//! MPS writer and reader.
//!
//! Binary columns come first, wrapped in a single INTORG/INTEND marker pair.
//! The objective constant is written as the negated right-hand side of the
//! objective row.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::{MipModel, Sense, VarKind};
use crate::error::{Error, Result};

const OBJ_ROW: &str = "OBJ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MpsFormat {
    Fixed,
    Free,
}

#[derive(Clone, Debug)]
pub struct MpsOutput {
    pub text: String,
    pub format: MpsFormat,
    /// Column names as written, in model variable order.
    pub column_names: Vec<String>,
    /// Why the requested format was changed, if it was.
    pub note: Option<String>,
}

/// Fixed-format MPS, switching to free format when 8-character names would
/// collide.
pub fn export_mps(model: &MipModel) -> MpsOutput {
    export_mps_with(model, MpsFormat::Fixed)
}

fn truncated(names: impl Iterator<Item = String>) -> Option<Vec<String>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for name in names {
        let short: String = name.chars().take(8).collect();
        if short.contains(char::is_whitespace) || short.is_empty() || !seen.insert(short.clone()) {
            return None;
        }
        out.push(short);
    }
    Some(out)
}

pub fn export_mps_with(model: &MipModel, format: MpsFormat) -> MpsOutput {
    let full_cols: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let full_rows: Vec<String> = model.constraints.iter().map(|c| c.name.clone()).collect();
    let (format, cols, rows, note) = match format {
        MpsFormat::Free => (MpsFormat::Free, full_cols, full_rows, None),
        MpsFormat::Fixed => {
            let cols = truncated(full_cols.iter().cloned());
            let rows = truncated(std::iter::once(OBJ_ROW.to_string()).chain(full_rows.iter().cloned()));
            match (cols, rows) {
                (Some(c), Some(mut r)) => {
                    r.remove(0);
                    (MpsFormat::Fixed, c, r, None)
                }
                _ => (
                    MpsFormat::Free,
                    full_cols,
                    full_rows,
                    Some("names collide after truncation to 8 characters; wrote free MPS".to_string()),
                ),
            }
        }
    };
    if let Some(n) = &note {
        log::info!("{n}");
    }

    let line = |out: &mut String, fields: &[&str]| {
        match format {
            MpsFormat::Free => {
                out.push(' ');
                out.push_str(&fields.join(" "));
            }
            MpsFormat::Fixed => {
                // Columns 5, 15, 25, 40 and 50, with wider numbers overflowing.
                out.push_str("    ");
                for (k, f) in fields.iter().enumerate() {
                    out.push_str(f);
                    if k + 1 < fields.len() {
                        let width = if k % 2 == 0 { 10 } else { 15 };
                        for _ in f.len()..width {
                            out.push(' ');
                        }
                        if f.len() >= width {
                            out.push(' ');
                        }
                    }
                }
            }
        }
        out.push('\n');
    };
    let num = |x: f64| format!("{x:?}");

    let mut out = String::new();
    writeln!(out, "NAME          SFMCVRP").unwrap();
    out.push_str("ROWS\n");
    writeln!(out, " N  {OBJ_ROW}").unwrap();
    for (c, name) in model.constraints.iter().zip(&rows) {
        let tag = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        writeln!(out, " {tag}  {name}").unwrap();
    }

    let mut column_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.n_vars()];
    for (r, c) in model.constraints.iter().enumerate() {
        for &(v, a) in &c.terms {
            column_terms[v].push((r, a));
        }
    }
    let binaries: Vec<usize> = (0..model.n_vars())
        .filter(|&v| model.variables[v].kind == VarKind::Binary)
        .collect();
    let continuous: Vec<usize> = (0..model.n_vars())
        .filter(|&v| model.variables[v].kind == VarKind::Continuous)
        .collect();

    out.push_str("COLUMNS\n");
    let write_column = |out: &mut String, v: usize| {
        let var = &model.variables[v];
        let mut entries: Vec<(String, f64)> = Vec::new();
        if var.obj != 0.0 {
            entries.push((OBJ_ROW.to_string(), var.obj));
        }
        entries.extend(column_terms[v].iter().map(|&(r, a)| (rows[r].clone(), a)));
        if entries.is_empty() {
            // Keeps the column declared.
            entries.push((OBJ_ROW.to_string(), 0.0));
        }
        for chunk in entries.chunks(2) {
            let mut fields: Vec<String> = vec![cols[v].clone()];
            for (row, a) in chunk {
                fields.push(row.clone());
                fields.push(num(*a));
            }
            let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
            line(out, &refs);
        }
    };
    if !binaries.is_empty() {
        line(&mut out, &["MARKER", "'MARKER'", "'INTORG'"]);
        for &v in &binaries {
            write_column(&mut out, v);
        }
        line(&mut out, &["MARKER", "'MARKER'", "'INTEND'"]);
    }
    for &v in &continuous {
        write_column(&mut out, v);
    }

    out.push_str("RHS\n");
    if model.objective_constant != 0.0 {
        line(&mut out, &["RHS", OBJ_ROW, &num(-model.objective_constant)]);
    }
    for (c, name) in model.constraints.iter().zip(&rows) {
        if c.rhs != 0.0 {
            line(&mut out, &["RHS", name, &num(c.rhs)]);
        }
    }

    out.push_str("BOUNDS\n");
    let bound = |out: &mut String, tag: &str, col: &str, val: Option<f64>| {
        let prefix = format!(" {tag} BND");
        match format {
            MpsFormat::Free => match val {
                Some(x) => writeln!(out, "{prefix} {col} {}", num(x)).unwrap(),
                None => writeln!(out, "{prefix} {col}").unwrap(),
            },
            MpsFormat::Fixed => match val {
                Some(x) => writeln!(out, "{prefix:<14}{col:<10}{}", num(x)).unwrap(),
                None => writeln!(out, "{prefix:<14}{col}").unwrap(),
            },
        }
    };
    for (v, var) in model.variables.iter().enumerate() {
        let col = &cols[v];
        match var.kind {
            VarKind::Binary if var.lower == 0.0 && var.upper == 1.0 => bound(&mut out, "BV", col, None),
            _ if var.lower == var.upper => bound(&mut out, "FX", col, Some(var.lower)),
            _ => {
                match (var.lower, var.upper) {
                    (l, u) if l == f64::NEG_INFINITY && u == f64::INFINITY => bound(&mut out, "FR", col, None),
                    (l, u) => {
                        if l == f64::NEG_INFINITY {
                            bound(&mut out, "MI", col, None);
                        } else if l != 0.0 {
                            bound(&mut out, "LO", col, Some(l));
                        }
                        if u != f64::INFINITY {
                            bound(&mut out, "UP", col, Some(u));
                        }
                    }
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    MpsOutput {
        text: out,
        format,
        column_names: cols,
        note,
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: "<mps>".into(),
        line,
        message: message.into(),
    }
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad number `{tok}`")))
}

/// Parses fixed or free MPS (whitespace-separated fields, names without
/// spaces). Integer columns with bounds inside [0, 1] become binaries.
pub fn parse_mps(text: &str) -> Result<MipModel> {
    #[derive(PartialEq)]
    enum Section {
        Head,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Ranges,
        Done,
    }
    let mut section = Section::Head;
    let mut obj_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut row_terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut obj_constant = 0.0;
    struct Col {
        name: String,
        integer: bool,
        obj: f64,
        lower: f64,
        upper: Option<f64>,
    }
    let mut cols: Vec<Col> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut in_int = false;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match tokens[0] {
                "NAME" => Section::Head,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "RANGES" => Section::Ranges,
                "ENDATA" => Section::Done,
                "OBJSENSE" => {
                    if tokens.get(1).map_or(false, |t| *t != "MIN" && *t != "MINIMIZE") {
                        return Err(parse_err(lineno, "only minimization is supported"));
                    }
                    Section::Head
                }
                other => return Err(parse_err(lineno, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::Head | Section::Done => {
                if tokens[0] == "MIN" || tokens[0] == "MINIMIZE" {
                    continue;
                }
                return Err(parse_err(lineno, "unexpected data line"));
            }
            Section::Ranges => return Err(parse_err(lineno, "RANGES are not supported")),
            Section::Rows => {
                let [tag, name] = tokens[..] else {
                    return Err(parse_err(lineno, "row line needs a type and a name"));
                };
                let sense = match tag {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(parse_err(lineno, format!("unknown row type {t}"))),
                };
                if row_index.insert(name.to_string(), rows.len()).is_some() {
                    return Err(parse_err(lineno, format!("duplicate row {name}")));
                }
                rows.push((name.to_string(), sense));
                row_terms.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if tokens.len() >= 3 && tokens[1] == "'MARKER'" {
                    match tokens[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        t => return Err(parse_err(lineno, format!("unknown marker {t}"))),
                    }
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(parse_err(lineno, "column line needs 3 or 5 fields"));
                }
                let name = tokens[0];
                let c = match col_index.get(name) {
                    Some(&c) => c,
                    None => {
                        col_index.insert(name.to_string(), cols.len());
                        cols.push(Col {
                            name: name.to_string(),
                            integer: in_int,
                            obj: 0.0,
                            lower: 0.0,
                            upper: None,
                        });
                        cols.len() - 1
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let val = parse_num(pair[1], lineno)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        cols[c].obj += val;
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| parse_err(lineno, format!("unknown row {}", pair[0])))?;
                        row_terms[r].push((c, val));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(parse_err(lineno, "RHS line needs 3 or 5 fields"));
                }
                for pair in tokens[1..].chunks(2) {
                    let val = parse_num(pair[1], lineno)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        obj_constant = -val;
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| parse_err(lineno, format!("unknown row {}", pair[0])))?;
                        rhs[r] = val;
                    }
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(parse_err(lineno, "bound line too short"));
                }
                let c = *col_index
                    .get(tokens[2])
                    .ok_or_else(|| parse_err(lineno, format!("unknown column {}", tokens[2])))?;
                let val = tokens.get(3).map(|t| parse_num(t, lineno)).transpose()?;
                let need = |v: Option<f64>| v.ok_or_else(|| parse_err(lineno, "bound value missing"));
                let col = &mut cols[c];
                match tokens[0] {
                    "UP" => col.upper = Some(need(val)?),
                    "LO" => col.lower = need(val)?,
                    "FX" => {
                        let x = need(val)?;
                        col.lower = x;
                        col.upper = Some(x);
                    }
                    "FR" => {
                        col.lower = f64::NEG_INFINITY;
                        col.upper = Some(f64::INFINITY);
                    }
                    "MI" => col.lower = f64::NEG_INFINITY,
                    "PL" => col.upper = Some(f64::INFINITY),
                    "BV" => {
                        col.integer = true;
                        col.lower = 0.0;
                        col.upper = Some(1.0);
                    }
                    t => return Err(parse_err(lineno, format!("unsupported bound type {t}"))),
                }
            }
        }
    }
    if section != Section::Done {
        return Err(parse_err(text.lines().count(), "missing ENDATA"));
    }

    let mut model = MipModel::new();
    model.objective_constant = obj_constant;
    for col in &cols {
        let upper = col.upper.unwrap_or(f64::INFINITY);
        let kind = if col.integer && col.lower >= 0.0 && upper <= 1.0 {
            VarKind::Binary
        } else if col.integer {
            return Err(Error::Model(format!("general integer column {} is not supported", col.name)));
        } else {
            VarKind::Continuous
        };
        model.add_var(col.name.clone(), kind, col.lower, upper, col.obj)?;
    }
    for (r, (name, sense)) in rows.into_iter().enumerate() {
        model.add_constraint(name, std::mem::take(&mut row_terms[r]), sense, rhs[r])?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_has_objective_row_only() {
        let out = export_mps(&MipModel::new());
        assert_eq!(out.format, MpsFormat::Fixed);
        assert!(out.text.contains(" N  OBJ"));
        assert!(!out.text.contains("MARKER"));
        let back = parse_mps(&out.text).unwrap();
        assert_eq!(back.n_vars(), 0);
        assert_eq!(back.n_constraints(), 0);
    }

    #[test]
    fn markers_once_and_round_trip() {
        let mut m = MipModel::new();
        let x = m.continuous("x", 1.5).unwrap();
        let b = m.binary("b", -2.0).unwrap();
        let c = m.binary("c", 0.0).unwrap();
        m.objective_constant = 4.25;
        m.add_constraint("r1", vec![(x, 1.0), (b, 3.0)], Sense::Le, 7.0).unwrap();
        m.add_constraint("r2", vec![(b, 1.0), (c, 1.0)], Sense::Eq, 1.0).unwrap();
        m.set_bounds(x, 0.5, 9.0).unwrap();
        let out = export_mps(&m);
        assert_eq!(out.text.matches("'INTORG'").count(), 1);
        assert_eq!(out.text.matches("'INTEND'").count(), 1);
        let back = parse_mps(&out.text).unwrap();
        assert_eq!(back.objective_constant, 4.25);
        for v in &m.variables {
            let w = &back.variables[back.var_id(&v.name).unwrap()];
            assert_eq!((v.kind, v.lower, v.upper, v.obj), (w.kind, w.lower, w.upper, w.obj));
        }
        assert_eq!(back.constraints[0].rhs, 7.0);
        assert_eq!(back.constraints[1].sense, Sense::Eq);
    }

    #[test]
    fn collisions_switch_to_free() {
        let mut m = MipModel::new();
        m.continuous("long_name_a", 1.0).unwrap();
        m.continuous("long_name_b", 1.0).unwrap();
        let out = export_mps(&m);
        assert_eq!(out.format, MpsFormat::Free);
        assert!(out.note.is_some());
        let back = parse_mps(&out.text).unwrap();
        assert!(back.var_id("long_name_b").is_some());
    }
}
