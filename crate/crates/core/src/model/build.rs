use serde::{Deserialize, Serialize};

use super::cuts::{self, CutReport, Parts, DEFAULT_CUT_BUDGET};
use super::ir::{Catalog, Constraint, Indicator, ModelIr, Sense, VarKind};
use super::presets::{BigMMode, ErrorMeasure, FitParams, Objective, PieceCount, PointsPerPiece, SimplexCuts, TighteningConfig};
use crate::dataset::DataSet;
use crate::preprocess::BoundsBundle;
use crate::{Error, Result};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub name: String,
    /// Whether the target backend accepts indicator constraints.
    pub indicator_support: bool,
    /// Largest `N P+ P-` accepted with the per-piece-of-`f` constraints.
    pub perf_max_vars: usize,
    /// Row budget for the simplex cuts.
    pub cut_budget: usize,
    /// Replaces the rounded maximum of the tight values in `Default` mode.
    pub default_big_m: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            name: "dcfit".into(),
            indicator_support: true,
            perf_max_vars: 2_000_000,
            cut_budget: DEFAULT_CUT_BUDGET,
            default_big_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Built {
    pub ir: ModelIr,
    pub cuts: CutReport,
    /// Per-point big-M actually used, `[plus, minus]` (empty in indicator mode).
    pub big_m: [Vec<f64>; 2],
}

/// Rounds `m` up to one significant digit: 632.8 -> 700, 0.41 -> 0.5.
pub fn default_big_m(values: &[f64]) -> f64 {
    let m = values.iter().fold(0.0f64, |a, v| a.max(*v));
    if m <= 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(m.log10().floor() as i32);
    // the small offset keeps exact multiples such as 700 from rounding up
    let lead = (m / scale - 1e-12).ceil();
    lead * scale
}

fn check_bounds(b: &BoundsBundle, ds: &DataSet, p: &FitParams) -> Result<()> {
    if b.len() != ds.len() || b.dim() != ds.dim() {
        return Err(Error::Build(format!(
            "bounds were computed for N={}, d={} but the data has N={}, d={}",
            b.len(),
            b.dim(),
            ds.len(),
            ds.dim()
        )));
    }
    if b.pp != p.pp || b.pm != p.pm {
        return Err(Error::Build(format!(
            "bounds were computed for P+={}, P-={} but the fit uses P+={}, P-={}",
            b.pp, b.pm, p.pp, p.pm
        )));
    }
    if (b.eps - p.eps).abs() > 1e-12 * p.eps.abs().max(1.0) {
        return Err(Error::Build(format!("bounds were computed for eps={} but the fit uses eps={}", b.eps, p.eps)));
    }
    Ok(())
}

/// Builds the fitting MILP for `ds` with the given objective and tightening.
pub fn build(
    ds: &DataSet,
    params: &FitParams,
    obj: Objective,
    cfg: &TighteningConfig,
    bounds: Option<&BoundsBundle>,
    opts: &BuildOptions,
) -> Result<Built> {
    params.validate()?;
    let (n, d, pp, pm, eps) = (ds.len(), ds.dim(), params.pp, params.pm, params.eps);
    if n < d + 1 {
        return Err(Error::Build(format!("need at least d+1 = {} points, got {n}", d + 1)));
    }
    if let Some(b) = bounds {
        check_bounds(b, ds, params)?;
    }
    if cfg.big_m == BigMMode::Indicator && !opts.indicator_support {
        return Err(Error::Build(
            "indicator big-M mode needs a backend with indicator constraints".into(),
        ));
    }
    if matches!(obj, Objective::Hierarchical { .. }) && eps == 0.0 {
        return Err(Error::Build("the hierarchical objective weighs the error by 1/(2 eps); eps must be > 0".into()));
    }
    if cfg.points_per_piece == PointsPerPiece::PerF && n * pp * pm > opts.perf_max_vars {
        return Err(Error::Build(format!(
            "points-per-piece-of-f needs {} auxiliary variables (limit {}); use the per-convex-part variant",
            n * pp * pm,
            opts.perf_max_vars
        )));
    }
    let need = |what: &str| -> Result<&BoundsBundle> {
        bounds.ok_or_else(|| Error::Build(format!("{what} needs preprocessed bounds")))
    };

    // big-M per point and sign
    let big_m: [Vec<f64>; 2] = match cfg.big_m {
        BigMMode::Indicator => [Vec::new(), Vec::new()],
        BigMMode::Tight => {
            let b = need("tight big-M")?;
            [b.m_plus.clone(), b.m_minus.clone()]
        }
        BigMMode::Default => {
            let m = match opts.default_big_m {
                Some(m) => m,
                None => {
                    let b = need("default big-M")?;
                    default_big_m(&[b.m_plus.as_slice(), b.m_minus.as_slice()].concat())
                }
            };
            [vec![m; n], vec![m; n]]
        }
    };

    let mut ir = ModelIr::new(opts.name.clone());
    let mut cat = Catalog {
        n,
        d,
        pp,
        pm,
        ..Catalog::default()
    };
    let free = |ir: &mut ModelIr, name: String| ir.add_var(name, -INF, INF, VarKind::Continuous);
    let unit = |ir: &mut ModelIr, name: String| ir.add_var(name, 0.0, 1.0, VarKind::Continuous);
    let binary = |ir: &mut ModelIr, name: String| ir.add_var(name, 0.0, 1.0, VarKind::Binary);

    cat.f = (1..=n).map(|i| free(&mut ir, format!("f_{i}"))).collect();
    cat.fp = (1..=n).map(|i| free(&mut ir, format!("fp_{i}"))).collect();
    cat.fm = (1..=n).map(|i| free(&mut ir, format!("fm_{i}"))).collect();
    cat.e = (1..=n)
        .map(|i| ir.add_var(format!("e_{i}"), 0.0, eps, VarKind::Continuous))
        .collect();
    cat.ap = (1..=pp)
        .map(|j| (1..=d).map(|r| free(&mut ir, format!("ap_{j}_{r}"))).collect())
        .collect();
    cat.bp = (1..=pp).map(|j| free(&mut ir, format!("bp_{j}"))).collect();
    cat.am = (1..=pm)
        .map(|k| (1..=d).map(|r| free(&mut ir, format!("am_{k}_{r}"))).collect())
        .collect();
    cat.bm = (1..=pm).map(|k| free(&mut ir, format!("bm_{k}"))).collect();
    cat.del_p = (1..=n)
        .map(|i| (1..=pp).map(|j| binary(&mut ir, format!("del_p_{i}_{j}"))).collect())
        .collect();
    cat.del_m = (1..=n)
        .map(|i| (1..=pm).map(|k| binary(&mut ir, format!("del_m_{i}_{k}"))).collect())
        .collect();

    let perf = cfg.points_per_piece == PointsPerPiece::PerF;
    let count = obj.piece_count();
    if perf {
        cat.beta = (1..=n)
            .map(|i| {
                (1..=pp)
                    .map(|j| (1..=pm).map(|k| unit(&mut ir, format!("beta_{i}_{j}_{k}"))).collect())
                    .collect()
            })
            .collect();
    }
    if perf || count.is_some() {
        cat.gamma = (1..=pp)
            .map(|j| (1..=pm).map(|k| unit(&mut ir, format!("gamma_{j}_{k}"))).collect())
            .collect();
    }
    match count {
        Some(PieceCount::FPlus) => cat.alpha_p = (1..=pp).map(|j| unit(&mut ir, format!("alpha_p_{j}"))).collect(),
        Some(PieceCount::FMinus) => cat.alpha_m = (1..=pm).map(|k| unit(&mut ir, format!("alpha_m_{k}"))).collect(),
        _ => {}
    }
    cat.q = free(&mut ir, "Q".into());
    if matches!(obj, Objective::Hierarchical { .. }) {
        cat.q2 = Some(free(&mut ir, "Q2".into()));
    }

    // DC equation
    for i in 0..n {
        ir.add_row(
            format!("dc_{}", i + 1),
            vec![(cat.f[i], 1.0), (cat.fp[i], -1.0), (cat.fm[i], 1.0)],
            Sense::Eq,
            0.0,
        );
    }

    // f^c(x_i) is the max of its pieces
    let signs: [(bool, &Vec<usize>, &Vec<Vec<usize>>, &Vec<usize>, &Vec<Vec<usize>>); 2] = [
        (true, &cat.fp, &cat.ap, &cat.bp, &cat.del_p),
        (false, &cat.fm, &cat.am, &cat.bm, &cat.del_m),
    ];
    let mut rows_cvx0 = Vec::new();
    let mut rows_cvx = Vec::new();
    let mut indicators = Vec::new();
    for (s, &(plus, fc, a, b, del)) in signs.iter().enumerate() {
        let t = if plus { 'p' } else { 'm' };
        for i in 0..n {
            for j in 0..a.len() {
                let mut coeffs = vec![(fc[i], 1.0)];
                coeffs.extend((0..d).map(|r| (a[j][r], -ds.x(i)[r])));
                coeffs.push((b[j], -1.0));
                rows_cvx0.push(Constraint {
                    name: format!("cvx0_{t}_{}_{}", i + 1, j + 1),
                    coeffs: coeffs.clone(),
                    sense: Sense::Ge,
                    rhs: 0.0,
                });
                let name = format!("cvx_{t}_{}_{}", i + 1, j + 1);
                if cfg.big_m == BigMMode::Indicator {
                    indicators.push(Indicator {
                        binary: del[i][j],
                        active_value: true,
                        row: Constraint {
                            name,
                            coeffs,
                            sense: Sense::Le,
                            rhs: 0.0,
                        },
                    });
                } else {
                    let m = big_m[s][i];
                    if m != 0.0 {
                        coeffs.push((del[i][j], m));
                    }
                    rows_cvx.push(Constraint {
                        name,
                        coeffs,
                        sense: Sense::Le,
                        rhs: m,
                    });
                }
            }
        }
    }
    ir.constraints.extend(rows_cvx0);
    ir.constraints.extend(rows_cvx);
    ir.indicators = indicators;

    // every point lies in at least one domain of each convex part
    for &(plus, _, a, _, del) in &signs {
        let t = if plus { 'p' } else { 'm' };
        for i in 0..n {
            let coeffs = (0..a.len()).map(|j| (del[i][j], 1.0)).collect();
            ir.add_row(format!("npp_{t}_{}", i + 1), coeffs, Sense::Ge, 1.0);
        }
    }

    // fitting error
    for i in 0..n {
        let z = ds.z(i);
        ir.add_row(format!("fit_hi_{}", i + 1), vec![(cat.f[i], 1.0), (cat.e[i], -1.0)], Sense::Le, z);
        ir.add_row(format!("fit_lo_{}", i + 1), vec![(cat.f[i], 1.0), (cat.e[i], 1.0)], Sense::Ge, z);
    }

    if cfg.sort_pieces {
        for &(plus, _, a, _, _) in &signs {
            let t = if plus { 'p' } else { 'm' };
            for j in 0..a.len().saturating_sub(1) {
                ir.add_row(
                    format!("sort_{t}_{}", j + 1),
                    vec![(a[j][0], 1.0), (a[j + 1][0], -1.0)],
                    Sense::Le,
                    0.0,
                );
            }
        }
    }

    if cfg.points_per_piece == PointsPerPiece::PerConvexPart {
        for &(plus, _, a, _, del) in &signs {
            let t = if plus { 'p' } else { 'm' };
            for j in 0..a.len() {
                let coeffs = (0..n).map(|i| (del[i][j], 1.0)).collect();
                ir.add_row(format!("ppp_{t}_{}", j + 1), coeffs, Sense::Ge, (d + 1) as f64);
            }
        }
    }

    if perf {
        for i in 0..n {
            for j in 0..pp {
                for k in 0..pm {
                    let (bt, dp, dm) = (cat.beta[i][j][k], cat.del_p[i][j], cat.del_m[i][k]);
                    let id = format!("{}_{}_{}", i + 1, j + 1, k + 1);
                    ir.add_row(format!("bdp_{id}"), vec![(bt, 1.0), (dp, -1.0)], Sense::Le, 0.0);
                    ir.add_row(format!("bdm_{id}"), vec![(bt, 1.0), (dm, -1.0)], Sense::Le, 0.0);
                    ir.add_row(format!("bdpm_{id}"), vec![(bt, 1.0), (dp, -1.0), (dm, -1.0)], Sense::Ge, -1.0);
                    ir.add_row(format!("bg_{id}"), vec![(bt, 1.0), (cat.gamma[j][k], -1.0)], Sense::Le, 0.0);
                }
            }
        }
        for j in 0..pp {
            for k in 0..pm {
                let mut coeffs: Vec<(usize, f64)> = (0..n).map(|i| (cat.beta[i][j][k], 1.0)).collect();
                coeffs.push((cat.gamma[j][k], -((d + 1) as f64)));
                ir.add_row(format!("sbg_{}_{}", j + 1, k + 1), coeffs, Sense::Ge, 0.0);
            }
        }
    } else if count.is_some() {
        // gamma_jk >= del_p_ij + del_m_ik - 1
        for i in 0..n {
            for j in 0..pp {
                for k in 0..pm {
                    ir.add_row(
                        format!("gam_{}_{}_{}", i + 1, j + 1, k + 1),
                        vec![(cat.gamma[j][k], 1.0), (cat.del_p[i][j], -1.0), (cat.del_m[i][k], -1.0)],
                        Sense::Ge,
                        -1.0,
                    );
                }
            }
        }
    }
    for (j, &al) in cat.alpha_p.iter().enumerate() {
        for k in 0..pm {
            ir.add_row(
                format!("alp_{}_{}", j + 1, k + 1),
                vec![(al, 1.0), (cat.gamma[j][k], -1.0)],
                Sense::Ge,
                0.0,
            );
        }
    }
    for (k, &al) in cat.alpha_m.iter().enumerate() {
        for j in 0..pp {
            ir.add_row(
                format!("alm_{}_{}", k + 1, j + 1),
                vec![(al, 1.0), (cat.gamma[j][k], -1.0)],
                Sense::Ge,
                0.0,
            );
        }
    }

    // objective
    let err_var = cat.q2.unwrap_or(cat.q);
    match obj.error_measure() {
        Some(ErrorMeasure::Max) => {
            for i in 0..n {
                ir.add_row(format!("maxerr_{}", i + 1), vec![(err_var, 1.0), (cat.e[i], -1.0)], Sense::Ge, 0.0);
            }
        }
        Some(ErrorMeasure::Mean) => {
            let mut coeffs = vec![(err_var, 1.0)];
            coeffs.extend(cat.e.iter().map(|&e| (e, -1.0 / n as f64)));
            ir.add_row("meanerr".into(), coeffs, Sense::Eq, 0.0);
        }
        None => {}
    }
    if let Some(c) = count {
        let mut coeffs = vec![(cat.q, 1.0)];
        match c {
            PieceCount::F => coeffs.extend(cat.gamma.iter().flatten().map(|&g| (g, -1.0))),
            PieceCount::FPlus => coeffs.extend(cat.alpha_p.iter().map(|&a| (a, -1.0))),
            PieceCount::FMinus => coeffs.extend(cat.alpha_m.iter().map(|&a| (a, -1.0))),
        }
        if let Some(q2) = cat.q2 {
            coeffs.push((q2, -1.0 / (2.0 * eps)));
        }
        ir.add_row("objdef".into(), coeffs, Sense::Eq, 0.0);
    }
    ir.objective = vec![(cat.q, 1.0)];

    // variable bounds
    if cfg.bound_variables {
        let b = need("variable bounding")?;
        for i in 0..n {
            let z = ds.z(i);
            let (lo, hi) = b.f_bounds(z);
            ir.set_bounds(cat.f[i], lo, hi);
            let (lo, hi) = b.f_minus_bounds(i);
            ir.set_bounds(cat.fm[i], lo, hi);
            let (lo, hi) = b.f_plus_bounds(i, z);
            ir.set_bounds(cat.fp[i], lo, hi);
        }
        for j in 0..pp {
            for r in 0..d {
                let (lo, hi) = b.a_plus_bounds(r);
                ir.set_bounds(cat.ap[j][r], lo, hi);
            }
            let (lo, hi) = b.b_plus_bounds();
            ir.set_bounds(cat.bp[j], lo, hi);
        }
        for k in 0..pm {
            for r in 0..d {
                let (lo, hi) = b.a_minus_bounds(r);
                ir.set_bounds(cat.am[k][r], lo, hi);
            }
            let (lo, hi) = b.b_minus_bounds();
            ir.set_bounds(cat.bm[k], lo, hi);
        }
    }
    if cfg.fix_first_piece {
        for r in 0..d {
            ir.set_bounds(cat.am[0][r], 0.0, 0.0);
        }
        ir.set_bounds(cat.bm[0], 0.0, 0.0);
    }

    // optional cuts
    let mut report = CutReport::default();
    let parts = Parts {
        ds,
        signs: [(true, &cat.ap, &cat.del_p), (false, &cat.am, &cat.del_m)],
    };
    if cfg.monotonicity_cuts {
        let m: [&[f64]; 2] = if cfg.big_m == BigMMode::Indicator {
            let b = need("monotonicity cuts")?;
            [&b.m_plus, &b.m_minus]
        } else {
            [&big_m[0], &big_m[1]]
        };
        report.monotonicity_rows = cuts::add_monotonicity(&mut ir, &parts, m);
    }
    if cfg.simplex_cuts != SimplexCuts::None {
        cuts::add_simplex_cuts(
            &mut ir,
            &parts,
            cfg.simplex_cuts == SimplexCuts::Both,
            opts.cut_budget,
            &mut report,
        )?;
    }

    ir.catalog = cat;
    ir.validate()?;
    Ok(Built {
        ir,
        cuts: report,
        big_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_big_m_rounding() {
        assert_eq!(default_big_m(&[1.0, 632.8]), 700.0);
        assert!((default_big_m(&[0.41]) - 0.5).abs() < 1e-15);
        assert_eq!(default_big_m(&[700.0]), 700.0);
        assert_eq!(default_big_m(&[0.0]), 0.0);
        assert_eq!(default_big_m(&[9.2]), 10.0);
    }
}
