//! Interior test for the domain of a pair `(j, k)` inside the convex hull of the data.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::DcFunction;
use crate::dataset::DataSet;

/// Depth at or below which a pair domain counts as having empty interior.
pub const DEPTH_TOL: f64 = 1e-7;

/// Largest `s <= 1` such that some point of the hull has `f^+_j` above every
/// other piece of `f^+` by `s` and `f^-_k` above every other piece of `f^-` by `s`.
/// Pieces within `same_tol` of the pair's own piece (coefficient-wise) count as
/// the same piece and are skipped.
pub fn pair_depth(f: &DcFunction, ds: &DataSet, j: usize, k: usize, same_tol: f64) -> f64 {
    let n = ds.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (pieces, own) in [(f.plus.pieces(), j), (f.minus.pieces(), k)] {
        let me = &pieces[own];
        for (o, other) in pieces.iter().enumerate() {
            if o == own || me.max_abs_diff(other) <= same_tol {
                continue;
            }
            rows.push(ds.points().iter().map(|p| me.eval(&p.x) - other.eval(&p.x)).collect());
        }
    }
    if rows.is_empty() {
        return 1.0;
    }
    // hull points are convex combinations; both sides are affine in them
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let lam: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let s = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    lp.add_constraint(lam.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for r in &rows {
        let mut terms: Vec<_> = lam.iter().zip(r).map(|(&v, &c)| (v, c)).collect();
        terms.push((s, -1.0));
        lp.add_constraint(terms, ComparisonOp::Ge, 0.0);
    }
    match lp.solve() {
        Ok(microlp::SolveOutcome::Solution(sol)) => sol.objective(),
        Ok(microlp::SolveOutcome::Interrupted(_)) => 1.0,
        // only reachable through numerical trouble; treat as full-dimensional
        Err(e) => {
            log::warn!("domain depth LP failed for pair ({j}, {k}): {e}");
            1.0
        }
    }
}
