use std::fmt::Write;

use super::num;
use crate::model::{Constraint, ModelIr, Sense, VarKind};
use crate::{Error, Result};

const TERMS_PER_LINE: usize = 6;

fn sense(s: Sense) -> &'static str {
    match s {
        Sense::Le => "<=",
        Sense::Ge => ">=",
        Sense::Eq => "=",
    }
}

fn terms(ir: &ModelIr, coeffs: &[(usize, f64)], out: &mut String) {
    if coeffs.is_empty() {
        // an empty left-hand side is not valid LP; 0 times any column is
        let _ = write!(out, " + 0 {}", ir.variables[0].name);
        return;
    }
    for (t, &(v, a)) in coeffs.iter().enumerate() {
        if t > 0 && t % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let (sign, mag) = if a.is_sign_negative() { ('-', -a) } else { ('+', a) };
        let _ = write!(out, " {sign} {} {}", num(mag), ir.variables[v].name);
    }
}

fn row(ir: &ModelIr, c: &Constraint, out: &mut String) {
    terms(ir, &c.coeffs, out);
    let _ = writeln!(out, " {} {}", sense(c.sense), num(c.rhs));
}

/// CPLEX-LP text for `ir`, with indicator constraints in `b = 1 -> row` form.
pub fn write_lp(ir: &ModelIr) -> Result<String> {
    if ir.variables.is_empty() {
        return Err(Error::Unsupported("LP output needs at least one variable".into()));
    }
    let bad = |s: &str| {
        s.is_empty()
            || s.chars().any(|c| c.is_whitespace() || ":+-*/^<>=[]".contains(c))
            || s.starts_with(|c: char| c.is_ascii_digit() || c == '.')
    };
    if let Some(v) = ir.variables.iter().find(|v| bad(&v.name)) {
        return Err(Error::Unsupported(format!("variable name `{}` is not valid in LP", v.name)));
    }
    let mut s = String::new();
    let _ = writeln!(s, "\\ {}", ir.name);
    s.push_str("Minimize\n obj:");
    terms(ir, &ir.objective, &mut s);
    s.push_str("\nSubject To\n");
    for c in &ir.constraints {
        let _ = write!(s, " {}:", c.name);
        row(ir, c, &mut s);
    }
    for ind in &ir.indicators {
        let _ = write!(
            s,
            " {}: {} = {} ->",
            ind.row.name,
            ir.variables[ind.binary].name,
            u8::from(ind.active_value)
        );
        row(ir, &ind.row, &mut s);
    }
    s.push_str("Bounds\n");
    let mut binaries = Vec::new();
    let mut generals = Vec::new();
    for var in &ir.variables {
        if var.kind == VarKind::Binary {
            if var.lb == 0.0 && var.ub == 1.0 {
                binaries.push(var.name.as_str());
                continue;
            }
            generals.push(var.name.as_str());
        }
        let n = &var.name;
        match (var.lb.is_finite(), var.ub.is_finite()) {
            _ if var.lb == var.ub => {
                let _ = writeln!(s, " {n} = {}", num(var.lb));
            }
            (false, false) => {
                let _ = writeln!(s, " {n} free");
            }
            (false, true) => {
                let _ = writeln!(s, " -inf <= {n} <= {}", num(var.ub));
            }
            (true, false) => {
                let _ = writeln!(s, " {n} >= {}", num(var.lb));
            }
            (true, true) => {
                let _ = writeln!(s, " {} <= {n} <= {}", num(var.lb), num(var.ub));
            }
        }
    }
    if !binaries.is_empty() {
        s.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(s, " {b}");
        }
    }
    if !generals.is_empty() {
        s.push_str("Generals\n");
        for g in generals {
            let _ = writeln!(s, " {g}");
        }
    }
    s.push_str("End\n");
    Ok(s)
}
