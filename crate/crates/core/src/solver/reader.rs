//! Debug readers for the MPS and LP text this crate writes. They cover the
//! subset of each format that the writers emit, not the full grammars.

use std::collections::HashMap;

use super::mps::OBJ_ROW;
use crate::model::{Constraint, Indicator, ModelIr, Sense, VarKind};
use crate::{Error, Result};

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| perr(line, format!("bad number `{tok}`"))),
    }
}

#[derive(Default)]
struct Builder {
    ir: ModelIr,
    vars: HashMap<String, usize>,
    int: Vec<bool>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let v = self.ir.add_var(name.to_string(), 0.0, f64::INFINITY, VarKind::Continuous);
        self.vars.insert(name.to_string(), v);
        self.int.push(false);
        v
    }

    fn finish(mut self) -> Result<ModelIr> {
        for (v, &int) in self.int.iter().enumerate() {
            if int {
                let var = &mut self.ir.variables[v];
                if var.lb != 0.0 || var.ub != 1.0 {
                    return Err(Error::Unsupported(format!("integer variable {} is not binary", var.name)));
                }
                var.kind = VarKind::Binary;
            }
        }
        Ok(self.ir)
    }
}

/// Parses MPS text (free layout, no RANGES) into a model with an empty catalog.
pub fn read_mps(text: &str) -> Result<ModelIr> {
    let mut b = Builder::default();
    let mut section = "";
    let mut rows: HashMap<String, usize> = HashMap::new();
    let mut in_int = false;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = toks[0];
            if section == "NAME" {
                b.ir.name = toks.get(1).copied().unwrap_or_default().to_string();
            }
            if !["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"].contains(&section) {
                return Err(perr(line, format!("unsupported section {section}")));
            }
            continue;
        }
        match section {
            "ROWS" => {
                let [t, name] = toks[..] else {
                    return Err(perr(line, "expected `type name`"));
                };
                let sense = match t {
                    "N" => continue,
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    _ => return Err(perr(line, format!("bad row type {t}"))),
                };
                rows.insert(name.to_string(), b.ir.constraints.len());
                b.ir.add_row(name.to_string(), Vec::new(), sense, 0.0);
            }
            "COLUMNS" => {
                if toks.len() == 3 && toks[1] == "'MARKER'" {
                    in_int = toks[2] == "'INTORG'";
                    continue;
                }
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(perr(line, "expected `column row value [row value]`"));
                }
                let v = b.var(toks[0]);
                b.int[v] |= in_int;
                for pair in toks[1..].chunks(2) {
                    let a = number(pair[1], line)?;
                    if pair[0] == OBJ_ROW {
                        if a != 0.0 {
                            b.ir.objective.push((v, a));
                        }
                    } else {
                        let r = *rows.get(pair[0]).ok_or_else(|| perr(line, format!("unknown row {}", pair[0])))?;
                        b.ir.constraints[r].coeffs.push((v, a));
                    }
                }
            }
            "RHS" => {
                for pair in toks[1..].chunks(2) {
                    let r = *rows.get(pair[0]).ok_or_else(|| perr(line, format!("unknown row {}", pair[0])))?;
                    b.ir.constraints[r].rhs = number(pair.get(1).ok_or_else(|| perr(line, "missing value"))?, line)?;
                }
            }
            "BOUNDS" => {
                let v = *b
                    .vars
                    .get(*toks.get(2).ok_or_else(|| perr(line, "missing column"))?)
                    .ok_or_else(|| perr(line, format!("unknown column {}", toks[2])))?;
                let val = toks.get(3).map(|t| number(t, line)).transpose()?;
                let need = || val.ok_or_else(|| perr(line, "missing bound value"));
                let var = &mut b.ir.variables[v];
                match toks[0] {
                    "LO" => var.lb = need()?,
                    "UP" => var.ub = need()?,
                    "FX" => {
                        var.lb = need()?;
                        var.ub = var.lb;
                    }
                    "FR" => {
                        var.lb = f64::NEG_INFINITY;
                        var.ub = f64::INFINITY;
                    }
                    "MI" => var.lb = f64::NEG_INFINITY,
                    "PL" => var.ub = f64::INFINITY,
                    "BV" => {
                        var.lb = 0.0;
                        var.ub = 1.0;
                        b.int[v] = true;
                    }
                    t => return Err(perr(line, format!("unsupported bound type {t}"))),
                }
            }
            _ => return Err(perr(line, format!("unexpected data in section {section}"))),
        }
    }
    b.finish()
}

fn parse_terms(b: &mut Builder, toks: &[&str], line: usize) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        if toks[i] == "+" || toks[i] == "-" {
            if toks[i] == "-" {
                sign = -1.0;
            }
            i += 1;
        }
        let tok = toks.get(i).ok_or_else(|| perr(line, "dangling sign"))?;
        let (coef, name) = match tok.parse::<f64>() {
            Ok(c) => {
                i += 1;
                (c, *toks.get(i).ok_or_else(|| perr(line, "coefficient without variable"))?)
            }
            Err(_) => (1.0, *tok),
        };
        out.push((b.var(name), sign * coef));
        i += 1;
    }
    Ok(out)
}

fn parse_row(b: &mut Builder, name: &str, toks: &[&str], line: usize) -> Result<Constraint> {
    let at = toks
        .iter()
        .position(|t| ["<=", ">=", "=", "<", ">", "=<", "=>"].contains(t))
        .ok_or_else(|| perr(line, format!("row {name} has no sense")))?;
    let sense = match toks[at] {
        "<=" | "<" | "=<" => Sense::Le,
        ">=" | ">" | "=>" => Sense::Ge,
        _ => Sense::Eq,
    };
    let rhs = number(toks.get(at + 1).ok_or_else(|| perr(line, "missing right-hand side"))?, line)?;
    Ok(Constraint {
        name: name.to_string(),
        coeffs: parse_terms(b, &toks[..at], line)?,
        sense,
        rhs,
    })
}

/// Parses CPLEX-LP text as written by [`super::write_lp`].
pub fn read_lp(text: &str) -> Result<ModelIr> {
    let mut b = Builder::default();
    // (first line, tokens) per statement
    let mut section = String::new();
    let mut stmts: Vec<(String, usize, Vec<&str>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        if let Some(name) = raw.strip_prefix("\\ ") {
            if b.ir.name.is_empty() {
                b.ir.name = name.trim().to_string();
            }
            continue;
        }
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('\\') {
            continue;
        }
        if !raw.starts_with(' ') {
            section = trimmed.to_ascii_lowercase();
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let starts_row = toks[0].ends_with(':');
        match stmts.last_mut() {
            Some(last) if !starts_row && last.0 == section && section != "bounds" && !section.starts_with("bin") && !section.starts_with("gen") => {
                last.2.extend(toks)
            }
            _ => stmts.push((section.clone(), line, toks)),
        }
    }
    let mut ints = Vec::new();
    for (section, line, toks) in stmts {
        match section.as_str() {
            "minimize" | "minimise" | "min" => {
                let body = if toks[0].ends_with(':') { &toks[1..] } else { &toks[..] };
                let terms = parse_terms(&mut b, body, line)?;
                b.ir.objective = terms.into_iter().filter(|t| t.1 != 0.0).collect();
            }
            "subject to" | "such that" | "st" | "s.t." => {
                let name = toks[0]
                    .strip_suffix(':')
                    .ok_or_else(|| perr(line, "constraints must be named"))?;
                if toks.len() > 4 && toks[2] == "=" && toks[4] == "->" {
                    let binary = b.var(toks[1]);
                    let active = match toks[3] {
                        "1" => true,
                        "0" => false,
                        t => return Err(perr(line, format!("bad indicator value {t}"))),
                    };
                    let row = parse_row(&mut b, name, &toks[5..], line)?;
                    b.ir.indicators.push(Indicator {
                        binary,
                        active_value: active,
                        row,
                    });
                } else {
                    let row = parse_row(&mut b, name, &toks[1..], line)?;
                    b.ir.constraints.push(row);
                }
            }
            "bounds" => {
                let set = |b: &mut Builder, name: &str, lb: Option<f64>, ub: Option<f64>| {
                    let v = b.var(name);
                    if let Some(lb) = lb {
                        b.ir.variables[v].lb = lb;
                    }
                    if let Some(ub) = ub {
                        b.ir.variables[v].ub = ub;
                    }
                };
                match toks[..] {
                    [n, "free"] => set(&mut b, n, Some(f64::NEG_INFINITY), Some(f64::INFINITY)),
                    [lo, "<=", n, "<=", hi] => set(&mut b, n, Some(number(lo, line)?), Some(number(hi, line)?)),
                    [n, ">=", lo] => set(&mut b, n, Some(number(lo, line)?), None),
                    [n, "<=", hi] => set(&mut b, n, None, Some(number(hi, line)?)),
                    [n, "=", v] => {
                        let v = number(v, line)?;
                        set(&mut b, n, Some(v), Some(v))
                    }
                    _ => return Err(perr(line, "unsupported bound line")),
                }
            }
            s if s.starts_with("bin") => {
                for n in toks {
                    let v = b.var(n);
                    b.ir.variables[v].lb = 0.0;
                    b.ir.variables[v].ub = 1.0;
                    b.int[v] = true;
                }
            }
            s if s.starts_with("gen") => ints.extend(toks.into_iter().map(|n| (n, line))),
            "end" => {}
            s => return Err(perr(line, format!("unsupported section {s}"))),
        }
    }
    for (n, _) in ints {
        let v = b.var(n);
        b.int[v] = true;
    }
    b.finish()
}

type RowView = (Sense, u64, Vec<(String, u64)>);

fn row_view(ir: &ModelIr, c: &Constraint) -> RowView {
    let mut t: Vec<(String, u64)> = c
        .coeffs
        .iter()
        .filter(|t| t.1 != 0.0)
        .map(|&(v, a)| (ir.variables[v].name.clone(), a.to_bits()))
        .collect();
    t.sort();
    (c.sense, c.rhs.to_bits(), t)
}

/// First difference between two models compared by names, with exact
/// equality of every number; `None` when they agree. Variable order and
/// coefficient order within rows are ignored.
pub fn first_difference(a: &ModelIr, b: &ModelIr) -> Option<String> {
    type View = (
        HashMap<String, (u64, u64, VarKind)>,
        HashMap<String, RowView>,
        HashMap<String, (String, bool, RowView)>,
        Vec<(String, u64)>,
    );
    let view = |ir: &ModelIr| -> View {
        let vars = ir
            .variables
            .iter()
            .map(|v| (v.name.clone(), (v.lb.to_bits(), v.ub.to_bits(), v.kind)))
            .collect();
        let rows = ir.constraints.iter().map(|c| (c.name.clone(), row_view(ir, c))).collect();
        let inds = ir
            .indicators
            .iter()
            .map(|i| {
                let bin = ir.variables[i.binary].name.clone();
                (i.row.name.clone(), (bin, i.active_value, row_view(ir, &i.row)))
            })
            .collect();
        let mut obj: Vec<(String, u64)> = ir
            .objective
            .iter()
            .filter(|t| t.1 != 0.0)
            .map(|&(v, c)| (ir.variables[v].name.clone(), c.to_bits()))
            .collect();
        obj.sort();
        (vars, rows, inds, obj)
    };
    let (va, ra, ia, oa) = view(a);
    let (vb, rb, ib, ob) = view(b);
    if va.len() != vb.len() || ra.len() != rb.len() || ia.len() != ib.len() {
        return Some(format!(
            "sizes differ: {}/{}/{} vs {}/{}/{}",
            va.len(),
            ra.len(),
            ia.len(),
            vb.len(),
            rb.len(),
            ib.len()
        ));
    }
    if let Some((n, _)) = va.iter().find(|(n, v)| vb.get(*n) != Some(v)) {
        return Some(format!("variable {n}"));
    }
    if let Some((n, _)) = ra.iter().find(|(n, r)| rb.get(*n) != Some(r)) {
        return Some(format!("row {n}"));
    }
    if let Some((n, _)) = ia.iter().find(|(n, r)| ib.get(*n) != Some(r)) {
        return Some(format!("indicator {n}"));
    }
    if oa != ob {
        return Some("objective".into());
    }
    None
}
