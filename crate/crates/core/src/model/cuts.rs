//! Optional valid cuts: gradient monotonicity between point pairs and the
//! convex-domain cuts built from simplices of data points.

use serde::{Deserialize, Serialize};

use super::ir::{ModelIr, Sense};
use crate::combin::{binomial, Combinations};
use crate::cpwl::geometry::{barycentric, segment_crosses_facet};
use crate::dataset::DataSet;
use crate::Result;

/// Barycentric margin for strict interiority in cut generation.
pub const INTERIOR_TOL: f64 = 1e-9;
pub const DEFAULT_CUT_BUDGET: usize = 50_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutReport {
    pub monotonicity_rows: usize,
    pub point_in_simplex_rows: usize,
    pub segment_facet_rows: usize,
    /// Point/simplex configurations found before the budget stopped generation.
    pub point_in_simplex_configs: usize,
    pub segment_facet_configs: usize,
    pub truncated: bool,
}

/// Upper bound on point-in-simplex rows: `C(N, d+2) (d+2) (P+ + P-)`.
pub fn point_in_simplex_row_bound(n: usize, d: usize, pp: usize, pm: usize) -> u128 {
    binomial(n, d + 2) * (d as u128 + 2) * (pp + pm) as u128
}

/// Upper bound on segment/facet rows: `C(N, d) C(N-d, 2) (P+(P+-1) + P-(P--1))`.
pub fn segment_facet_row_bound(n: usize, d: usize, pp: usize, pm: usize) -> u128 {
    binomial(n, d) * binomial(n.saturating_sub(d), 2) * (pp * (pp - 1) + pm * (pm - 1)) as u128
}

/// Monotonicity rows: `N (N-1) sum_c P^c (P^c - 1) / 2`.
pub fn monotonicity_row_count(n: usize, pp: usize, pm: usize) -> usize {
    n * (n - 1) * (pp * (pp - 1) + pm * (pm - 1)) / 2
}

pub(super) struct Parts<'a> {
    pub ds: &'a DataSet,
    /// `(plus?, a[j][r], del[i][j])` per sign.
    pub signs: [(bool, &'a [Vec<usize>], &'a [Vec<usize>]); 2],
}

fn tag(plus: bool) -> char {
    if plus {
        'p'
    } else {
        'm'
    }
}

/// `(a_j - a_k)^T (x_p - x_q) >= -M_pq (2 - del_pj - del_qk)` for `p != q`, `j < k`.
pub(super) fn add_monotonicity(ir: &mut ModelIr, parts: &Parts<'_>, big_m: [&[f64]; 2]) -> usize {
    let ds = parts.ds;
    let n = ds.len();
    let mut rows = 0;
    for (s, &(plus, a, del)) in parts.signs.iter().enumerate() {
        let m = big_m[s];
        let pc = a.len();
        for j in 0..pc {
            for k in j + 1..pc {
                for p in 0..n {
                    for q in 0..n {
                        if p == q {
                            continue;
                        }
                        let mpq = m[p] + m[q];
                        let mut coeffs = Vec::with_capacity(2 * ds.dim() + 2);
                        for r in 0..ds.dim() {
                            let dx = ds.x(p)[r] - ds.x(q)[r];
                            coeffs.push((a[j][r], dx));
                            coeffs.push((a[k][r], -dx));
                        }
                        coeffs.push((del[p][j], -mpq));
                        coeffs.push((del[q][k], -mpq));
                        let name = format!("mono_{}_{}_{}_{}_{}", tag(plus), p + 1, q + 1, j + 1, k + 1);
                        ir.add_row(name, coeffs, Sense::Ge, -2.0 * mpq);
                        rows += 1;
                    }
                }
            }
        }
    }
    rows
}

/// Point-in-simplex rows, then (if `segments`) segment/facet rows, in
/// lexicographic order of the generating configuration, stopping at `budget`.
pub(super) fn add_simplex_cuts(
    ir: &mut ModelIr,
    parts: &Parts<'_>,
    segments: bool,
    budget: usize,
    report: &mut CutReport,
) -> Result<()> {
    let ds = parts.ds;
    let n = ds.len();
    let d = ds.dim();
    let per_config_13: usize = parts.signs.iter().map(|s| s.1.len()).sum();
    let mut used = 0usize;

    'outer13: for simplex in Combinations::new(n, d + 1) {
        let verts: Vec<&[f64]> = simplex.iter().map(|&i| ds.x(i)).collect();
        for q in 0..n {
            if simplex.contains(&q) {
                continue;
            }
            let inside = barycentric(ds.x(q), &verts)?.iter().all(|&l| l > INTERIOR_TOL);
            if !inside {
                continue;
            }
            if used + per_config_13 > budget {
                report.truncated = true;
                break 'outer13;
            }
            report.point_in_simplex_configs += 1;
            for &(plus, _, del) in &parts.signs {
                for j in 0..del[0].len() {
                    let mut coeffs: Vec<(usize, f64)> = simplex.iter().map(|&p| (del[p][j], 1.0)).collect();
                    coeffs.push((del[q][j], -1.0));
                    let ids: Vec<String> = simplex.iter().map(|p| (p + 1).to_string()).collect();
                    let name = format!("sxp_{}_{}_{}_{}", tag(plus), ids.join("_"), q + 1, j + 1);
                    ir.add_row(name, coeffs, Sense::Le, d as f64);
                }
            }
            used += per_config_13;
            report.point_in_simplex_rows += per_config_13;
        }
    }

    if !segments || report.truncated {
        return Ok(());
    }
    let per_config_14: usize = parts
        .signs
        .iter()
        .map(|s| s.1.len() * (s.1.len() - 1))
        .sum();
    if per_config_14 == 0 {
        return Ok(());
    }
    'outer14: for facet in Combinations::new(n, d) {
        let verts: Vec<&[f64]> = facet.iter().map(|&i| ds.x(i)).collect();
        for q1 in 0..n {
            if facet.contains(&q1) {
                continue;
            }
            for q2 in q1 + 1..n {
                if facet.contains(&q2) {
                    continue;
                }
                if !segment_crosses_facet(ds.x(q1), ds.x(q2), &verts, INTERIOR_TOL)? {
                    continue;
                }
                if used + per_config_14 > budget {
                    report.truncated = true;
                    break 'outer14;
                }
                report.segment_facet_configs += 1;
                let ids: Vec<String> = facet.iter().map(|p| (p + 1).to_string()).collect();
                for &(plus, _, del) in &parts.signs {
                    let pc = del[0].len();
                    for j in 0..pc {
                        for k in 0..pc {
                            if j == k {
                                continue;
                            }
                            let mut coeffs: Vec<(usize, f64)> = facet.iter().map(|&p| (del[p][j], 1.0)).collect();
                            coeffs.push((del[q1][k], 1.0));
                            coeffs.push((del[q2][k], 1.0));
                            let name = format!(
                                "sxs_{}_{}_{}_{}_{}_{}",
                                tag(plus),
                                ids.join("_"),
                                q1 + 1,
                                q2 + 1,
                                j + 1,
                                k + 1
                            );
                            ir.add_row(name, coeffs, Sense::Le, d as f64 + 1.0);
                        }
                    }
                }
                used += per_config_14;
                report.segment_facet_rows += per_config_14;
            }
        }
    }
    Ok(())
}
