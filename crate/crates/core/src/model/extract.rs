use std::collections::HashMap;

use log::warn;
use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::ir::{ModelIr, Sense, VarKind};
use super::presets::{ErrorMeasure, Objective, PieceCount};
use crate::cpwl::{AffinePiece, DcFunction};
use crate::dataset::DataSet;
use crate::{Error, Result};

/// Tolerance for the solution consistency check, relative to `max(1, |value|)`.
pub const CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub function: DcFunction,
    /// Rounded `del_p[i][j]`.
    pub delta_plus: Vec<Vec<bool>>,
    pub delta_minus: Vec<Vec<bool>>,
    pub objective: f64,
    /// Largest mismatch between the recorded and recomputed values of `f^+`, `f^-`, `f`.
    pub consistency: f64,
}

/// Dense value vector from a name map. Missing variables are set to 0 and
/// listed in the second component.
pub fn values_by_index(ir: &ModelIr, values: &HashMap<String, f64>) -> (Vec<f64>, Vec<String>) {
    let mut missing = Vec::new();
    let x = ir
        .variables
        .iter()
        .map(|v| match values.get(&v.name) {
            Some(&val) => val,
            None => {
                missing.push(v.name.clone());
                0.0
            }
        })
        .collect();
    if !missing.is_empty() {
        warn!("{} variables missing from the solution, set to 0 (first: {})", missing.len(), missing[0]);
    }
    (x, missing)
}

fn pieces(a: &[Vec<usize>], b: &[usize], x: &[f64]) -> Vec<AffinePiece> {
    a.iter()
        .zip(b)
        .map(|(ar, &bv)| AffinePiece::new(ar.iter().map(|&v| x[v]).collect(), x[bv]))
        .collect()
}

/// Reads `f^+`, `f^-` and the domain indicators from a solution and checks
/// that the recorded function values agree with the pieces.
pub fn extract_solution(ir: &ModelIr, ds: &DataSet, x: &[f64]) -> Result<Extracted> {
    let cat = &ir.catalog;
    if x.len() != ir.variables.len() {
        return Err(Error::DimensionMismatch {
            expected: ir.variables.len(),
            got: x.len(),
        });
    }
    if cat.n != ds.len() || cat.d != ds.dim() {
        return Err(Error::Validation("model and dataset sizes differ".into()));
    }
    let function = DcFunction::new(pieces(&cat.ap, &cat.bp, x), pieces(&cat.am, &cat.bm, x))?;
    let round = |del: &[Vec<usize>]| -> Vec<Vec<bool>> {
        del.iter().map(|row| row.iter().map(|&v| x[v] > 0.5).collect()).collect()
    };
    let mut worst = (0.0f64, String::new());
    let mut see = |got: f64, want: f64, what: String| {
        let v = (got - want).abs() / want.abs().max(1.0);
        if v > worst.0 {
            worst = (v, what);
        }
    };
    for i in 0..ds.len() {
        let xi = ds.x(i);
        let (p, m) = (function.plus.eval(xi), function.minus.eval(xi));
        see(x[cat.fp[i]], p, format!("fp_{}", i + 1));
        see(x[cat.fm[i]], m, format!("fm_{}", i + 1));
        see(x[cat.f[i]], p - m, format!("f_{}", i + 1));
    }
    if worst.0 > CONSISTENCY_TOL {
        return Err(Error::Inconsistent {
            message: format!("solution value {} disagrees with its pieces", worst.1),
            violation: worst.0,
        });
    }
    Ok(Extracted {
        function,
        delta_plus: round(&cat.del_p),
        delta_minus: round(&cat.del_m),
        objective: ir.objective_value(x),
        consistency: worst.0,
    })
}

/// Sorts the pieces of each part by their first slope and subtracts the
/// first piece of `f^-` from every piece, so that the first piece of `f^-`
/// is zero and all `f^-` slopes in the first coordinate are nonnegative.
pub fn normalize(f: &DcFunction) -> DcFunction {
    let sorted = |ps: &[AffinePiece]| {
        let mut v = ps.to_vec();
        v.sort_by(|p, q| p.a[0].total_cmp(&q.a[0]));
        v
    };
    let plus = sorted(f.plus.pieces());
    let minus = sorted(f.minus.pieces());
    let base = minus[0].clone();
    let shift = |ps: Vec<AffinePiece>| -> Vec<AffinePiece> { ps.iter().map(|p| p.sub(&base)).collect() };
    DcFunction::new(shift(plus), shift(minus)).expect("same shape")
}

/// Value vector for `f` that sets every indicator from the pieces active
/// (within `tol`) at each point. `f` must have exactly the model's piece counts.
pub fn natural_assignment(ir: &ModelIr, ds: &DataSet, f: &DcFunction, obj: Objective, tol: f64) -> Result<Vec<f64>> {
    let cat = &ir.catalog;
    if f.plus.len() != cat.pp || f.minus.len() != cat.pm || f.dim() != cat.d || ds.len() != cat.n {
        return Err(Error::Validation("function shape does not match the model".into()));
    }
    let mut x = vec![0.0; ir.variables.len()];
    for (j, p) in f.plus.pieces().iter().enumerate() {
        for r in 0..cat.d {
            x[cat.ap[j][r]] = p.a[r];
        }
        x[cat.bp[j]] = p.b;
    }
    for (k, p) in f.minus.pieces().iter().enumerate() {
        for r in 0..cat.d {
            x[cat.am[k][r]] = p.a[r];
        }
        x[cat.bm[k]] = p.b;
    }
    let mut err = Vec::with_capacity(cat.n);
    let mut both = vec![vec![false; cat.pm]; cat.pp];
    for i in 0..cat.n {
        let xi = ds.x(i);
        let (vp, ap) = f.plus.argmax(xi, tol);
        let (vm, am) = f.minus.argmax(xi, tol);
        x[cat.fp[i]] = vp;
        x[cat.fm[i]] = vm;
        x[cat.f[i]] = vp - vm;
        let e = (vp - vm - ds.z(i)).abs();
        x[cat.e[i]] = e;
        err.push(e);
        for &j in &ap {
            x[cat.del_p[i][j]] = 1.0;
        }
        for &k in &am {
            x[cat.del_m[i][k]] = 1.0;
        }
        for &j in &ap {
            for &k in &am {
                both[j][k] = true;
                if !cat.beta.is_empty() {
                    x[cat.beta[i][j][k]] = 1.0;
                }
            }
        }
    }
    if !cat.gamma.is_empty() {
        for j in 0..cat.pp {
            for k in 0..cat.pm {
                x[cat.gamma[j][k]] = if both[j][k] { 1.0 } else { 0.0 };
            }
        }
    }
    for (j, &v) in cat.alpha_p.iter().enumerate() {
        x[v] = if both[j].iter().any(|&b| b) { 1.0 } else { 0.0 };
    }
    for (k, &v) in cat.alpha_m.iter().enumerate() {
        x[v] = if both.iter().any(|row| row[k]) { 1.0 } else { 0.0 };
    }
    let error = match obj.error_measure() {
        Some(ErrorMeasure::Max) => err.iter().fold(0.0f64, |a, e| a.max(*e)),
        Some(ErrorMeasure::Mean) => err.iter().sum::<f64>() / cat.n as f64,
        None => 0.0,
    };
    let count = match obj.piece_count() {
        Some(PieceCount::F) => both.iter().flatten().filter(|&&b| b).count() as f64,
        Some(PieceCount::FPlus) => cat.alpha_p.iter().map(|&v| x[v]).sum(),
        Some(PieceCount::FMinus) => cat.alpha_m.iter().map(|&v| x[v]).sum(),
        None => 0.0,
    };
    match cat.q2 {
        Some(q2) => {
            x[q2] = error;
            let eps = ir.variables[cat.e[0]].ub;
            x[cat.q] = count + error / (2.0 * eps);
        }
        None => x[cat.q] = if obj.piece_count().is_some() { count } else { error },
    }
    Ok(x)
}

/// Whether adding one affine function to every piece, and to `f^+`, `f^-`,
/// maps feasible points to feasible points with the same objective.
fn has_free_shift(ir: &ModelIr) -> bool {
    let cat = &ir.catalog;
    let free = |v: &usize| {
        let var = &ir.variables[*v];
        var.lb == f64::NEG_INFINITY && var.ub == f64::INFINITY
    };
    cat.pm > 0
        && cat.fp.iter().chain(&cat.fm).all(free)
        && cat.ap.iter().flatten().chain(&cat.bp).all(free)
        && cat.am.iter().flatten().chain(&cat.bm).all(free)
}

/// Re-solves the continuous part of the model with every binary fixed at its
/// rounded value in `x`. When the decomposition has a free affine shift, the
/// first piece of `f^-` is pinned to zero, which keeps the values small enough
/// to survive a solver's limited output precision.
pub fn polish(ir: &ModelIr, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != ir.variables.len() {
        return Err(Error::DimensionMismatch {
            expected: ir.variables.len(),
            got: x.len(),
        });
    }
    let cat = &ir.catalog;
    let mut pinned: Vec<Option<f64>> = ir
        .variables
        .iter()
        .zip(x)
        .map(|(v, &val)| (v.kind == VarKind::Binary).then(|| val.round().clamp(0.0, 1.0)))
        .collect();
    if has_free_shift(ir) {
        for &v in cat.am[0].iter().chain([&cat.bm[0]]) {
            pinned[v] = Some(0.0);
        }
    }
    let mut cost = vec![0.0; x.len()];
    for &(v, c) in &ir.objective {
        cost[v] += c;
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<microlp::Variable> = ir
        .variables
        .iter()
        .enumerate()
        .map(|(v, var)| match pinned[v] {
            Some(val) => lp.add_var(cost[v], (val, val)),
            None => lp.add_var(cost[v], (var.lb, var.ub)),
        })
        .collect();
    let active = ir
        .indicators
        .iter()
        .filter(|ind| (pinned[ind.binary] == Some(1.0)) == ind.active_value)
        .map(|ind| &ind.row);
    for row in ir.constraints.iter().chain(active) {
        let mut rhs = row.rhs;
        let mut terms = Vec::with_capacity(row.coeffs.len());
        for &(v, c) in &row.coeffs {
            match pinned[v] {
                Some(val) => rhs -= c * val,
                None => terms.push((vars[v], c)),
            }
        }
        if terms.is_empty() {
            continue;
        }
        let op = match row.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        lp.add_constraint(&terms, op, rhs);
    }
    match lp.solve() {
        Ok(microlp::SolveOutcome::Solution(sol)) => Ok(vars.iter().map(|&v| sol[v]).collect()),
        Ok(microlp::SolveOutcome::Interrupted(_)) => Err(Error::Build("polishing LP was interrupted".into())),
        Err(e) => Err(Error::Build(format!("polishing LP failed: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::BigMMode;
    use crate::model::{build, BuildOptions, FitParams, TighteningConfig};

    fn round8(v: f64) -> f64 {
        format!("{v:.7e}").parse().unwrap()
    }

    #[test]
    fn polish_recovers_a_drifted_decomposition() {
        let rows: Vec<(Vec<f64>, f64)> = [0.0, 0.2, 0.45, 0.7, 1.0]
            .iter()
            .map(|&t| (vec![t], (t - 0.5f64).abs()))
            .collect();
        let ds = DataSet::from_rows(1, &rows, "v").unwrap();
        let params = FitParams::new(0.1, 2, 1).unwrap();
        let opts = BuildOptions {
            default_big_m: Some(10.0),
            ..BuildOptions::default()
        };
        let ir = build(&ds, &params, Objective::MaxError, &TighteningConfig::plain(BigMMode::Default), None, &opts)
            .unwrap()
            .ir;
        let f = DcFunction::new(
            vec![AffinePiece::new(vec![-1.0], 0.5), AffinePiece::new(vec![1.0], -0.5)],
            vec![AffinePiece::constant(1, 0.0)],
        )
        .unwrap();
        let good = natural_assignment(&ir, &ds, &f, Objective::MaxError, 1e-9).unwrap();
        let cat = &ir.catalog;
        // add g(x) = 3e11 x + 1e11 everywhere, then truncate like a solver log
        let mut x = good.clone();
        for i in 0..5 {
            let g = 3e11 * ds.x(i)[0] + 1e11;
            x[cat.fp[i]] += g;
            x[cat.fm[i]] += g;
        }
        let slopes = cat.ap.iter().chain(&cat.am).map(|a| a[0]);
        for (a, &b) in slopes.zip(cat.bp.iter().chain(&cat.bm)) {
            x[a] += 3e11;
            x[b] += 1e11;
        }
        let x: Vec<f64> = x.into_iter().map(round8).collect();
        assert!(extract_solution(&ir, &ds, &x).is_err());
        let p = polish(&ir, &x).unwrap();
        let ex = extract_solution(&ir, &ds, &p).unwrap();
        assert!(ex.objective <= 1e-9);
        assert!(ir.max_violation(&p).0 < 1e-9);
        assert!(p[cat.bm[0]] == 0.0 && p[cat.am[0][0]] == 0.0);
    }
}
