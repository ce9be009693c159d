use std::fmt::Write;

use super::num;
use crate::model::{ModelIr, Sense, VarKind};
use crate::{Error, Result};

pub(crate) const OBJ_ROW: &str = "OBJ";

/// Left-justified to the classic 8-character field so readers that sniff
/// fixed versus free layout agree with us on short names.
fn field(name: &str) -> String {
    format!("{name:<8}")
}

/// MPS text for `ir`. Fails on indicator constraints, which MPS cannot carry.
pub fn write_mps(ir: &ModelIr) -> Result<String> {
    if !ir.indicators.is_empty() {
        return Err(Error::Unsupported(format!(
            "MPS cannot express the {} indicator constraints of this model; use the LP format with a backend that supports them",
            ir.indicators.len()
        )));
    }
    let names_ok = |s: &str| !s.is_empty() && !s.chars().any(char::is_whitespace) && !s.starts_with('$');
    if let Some(v) = ir.variables.iter().find(|v| !names_ok(&v.name)) {
        return Err(Error::Unsupported(format!("variable name `{}` is not valid in MPS", v.name)));
    }

    // column-major view of the rows
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ir.variables.len()];
    for (r, c) in ir.constraints.iter().enumerate() {
        for &(v, a) in &c.coeffs {
            cols[v].push((r, a));
        }
    }
    let mut obj = vec![None; ir.variables.len()];
    for &(v, a) in &ir.objective {
        obj[v] = Some(a);
    }

    let mut s = String::new();
    let _ = writeln!(s, "NAME          {}", ir.name);
    s.push_str("ROWS\n");
    let _ = writeln!(s, " N  {OBJ_ROW}");
    for c in &ir.constraints {
        let t = match c.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        let _ = writeln!(s, " {t}  {}", c.name);
    }
    s.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (v, var) in ir.variables.iter().enumerate() {
        let int = var.kind == VarKind::Binary;
        if int != in_int {
            let tag = if int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(s, "    MARKER{marker:<4}          'MARKER'                 {tag}");
            marker += 1;
            in_int = int;
        }
        let name = field(&var.name);
        let mut wrote = false;
        if let Some(a) = obj[v] {
            let _ = writeln!(s, "    {name}  {}  {}", field(OBJ_ROW), num(a));
            wrote = true;
        }
        for &(r, a) in &cols[v] {
            let _ = writeln!(s, "    {name}  {}  {}", field(&ir.constraints[r].name), num(a));
            wrote = true;
        }
        if !wrote {
            // keeps the column declared
            let _ = writeln!(s, "    {name}  {}  0", field(OBJ_ROW));
        }
    }
    if in_int {
        let _ = writeln!(s, "    MARKER{marker:<4}          'MARKER'                 'INTEND'");
    }
    s.push_str("RHS\n");
    for c in &ir.constraints {
        if c.rhs != 0.0 {
            let _ = writeln!(s, "    RHS       {}  {}", field(&c.name), num(c.rhs));
        }
    }
    s.push_str("BOUNDS\n");
    for var in &ir.variables {
        let name = field(&var.name);
        let (lb, ub) = (var.lb, var.ub);
        if lb == ub {
            let _ = writeln!(s, " FX BND       {name}  {}", num(lb));
            continue;
        }
        match (lb.is_finite(), ub.is_finite()) {
            (false, false) => {
                let _ = writeln!(s, " FR BND       {name}");
            }
            (false, true) => {
                let _ = writeln!(s, " MI BND       {name}");
                let _ = writeln!(s, " UP BND       {name}  {}", num(ub));
            }
            (true, false) => {
                let _ = writeln!(s, " LO BND       {name}  {}", num(lb));
                let _ = writeln!(s, " PL BND       {name}");
            }
            (true, true) => {
                let _ = writeln!(s, " LO BND       {name}  {}", num(lb));
                let _ = writeln!(s, " UP BND       {name}  {}", num(ub));
            }
        }
    }
    s.push_str("ENDATA\n");
    Ok(s)
}
