//! Tilting under-determined pieces of a fit until every piece of `f`
//! interpolates at least `d+1` of its own values.
//!
//! Two procedures live here. [`tilt_piece`] works on one pair `f_{j,k}` in
//! isolation: it moves the pair's `(a, b)` inside the polyhedron cut out by
//! its interpolation equalities and the signed neighbour inequalities until
//! `min(d+1, n+m)` constraints are active. [`transform`] does the same walk
//! jointly over all pieces of `f^+` and `f^-` plus the per-point values of
//! `f^+`, which keeps the DC form consistent when pieces are shared between
//! pairs: every constraint active at the start stays active, so `g(x_i) =
//! f(x_i)` and each pair keeps the points it interpolated.

use serde::{Deserialize, Serialize};

use crate::cpwl::{
    activity_map, check_well_behaved, domain, verify_eps_approx, AffinePiece, DcFunction, WellBehavedReport,
};
use crate::dataset::DataSet;
use crate::linalg::{dot, Lu, OrthoBasis};
use crate::{Error, Result};

/// Relative slack below which a constraint counts as active during a walk.
pub const WALK_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPiece {
    pub j: usize,
    pub k: usize,
    pub piece: AffinePiece,
    /// Points where both `j` and `k` are active.
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborEdge {
    pub a: usize,
    pub b: usize,
    /// `+1` when the pairs share `k` (the boundary comes from `f^+`), `-1` when they share `j`.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceAssignment {
    pub dim: usize,
    pub pairs: Vec<PairPiece>,
    pub edges: Vec<NeighborEdge>,
    /// `f(x_i)`, i.e. `z_i + e_i`.
    pub targets: Vec<f64>,
}

impl PieceAssignment {
    pub fn neighbors(&self, p: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.edges.iter().filter_map(move |e| {
            if e.a == p {
                Some((e.b, e.sign))
            } else if e.b == p {
                Some((e.a, e.sign))
            } else {
                None
            }
        })
    }

    pub fn find(&self, j: usize, k: usize) -> Option<usize> {
        self.pairs.iter().position(|p| p.j == j && p.k == k)
    }
}

pub fn derive_assignment(f: &DcFunction, ds: &DataSet, tol: f64) -> Result<PieceAssignment> {
    if f.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: f.dim(),
        });
    }
    let act = activity_map(f, ds, tol);
    if let Some(i) = (0..ds.len()).find(|&i| act.plus[i].is_empty() || act.minus[i].is_empty()) {
        return Err(Error::Validation(format!("no active piece at point {} (non-finite values?)", i + 1)));
    }
    let pairs: Vec<PairPiece> = act
        .active_pairs()
        .into_iter()
        .map(|(j, k)| PairPiece {
            j,
            k,
            piece: f.pair_piece(j, k),
            points: (0..ds.len())
                .filter(|&i| act.plus[i].contains(&j) && act.minus[i].contains(&k))
                .collect(),
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..pairs.len() {
        for b in a + 1..pairs.len() {
            let (p, q) = (&pairs[a], &pairs[b]);
            let sign = match (p.j == q.j, p.k == q.k) {
                (false, true) => 1,
                (true, false) => -1,
                _ => continue,
            };
            edges.push(NeighborEdge { a, b, sign });
        }
    }
    Ok(PieceAssignment {
        dim: ds.dim(),
        pairs,
        edges,
        targets: ds.points().iter().map(|p| f.eval(&p.x)).collect(),
    })
}

/// Moves a point inside `{theta : rows theta <= rhs}` so that more rows become
/// active, never releasing an active one.
struct Walker {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    theta: Vec<f64>,
    tight: Vec<bool>,
    basis: OrthoBasis,
}

impl Walker {
    /// `lineality` spans directions along which every row is constant; they are
    /// excluded from the search so the walk cannot drift along them.
    fn new(rows: Vec<Vec<f64>>, rhs: Vec<f64>, theta: Vec<f64>, lineality: &[Vec<f64>]) -> Self {
        let mut basis = OrthoBasis::new(theta.len());
        for l in lineality {
            basis.push(l, RANK_TOL);
        }
        let tight = vec![false; rows.len()];
        Self {
            rows,
            rhs,
            theta,
            tight,
            basis,
        }
    }

    fn scale(&self, r: usize) -> f64 {
        1.0 + self.rhs[r].abs() + self.rows[r].iter().zip(&self.theta).map(|(c, t)| (c * t).abs()).sum::<f64>()
    }

    fn slack(&self, r: usize) -> f64 {
        self.rhs[r] - dot(&self.rows[r], &self.theta)
    }

    fn mark(&mut self, r: usize) {
        if !self.tight[r] {
            self.tight[r] = true;
            self.basis.push(&self.rows[r], RANK_TOL);
        }
    }

    /// Marks the given rows active and moves `theta` by the least-norm
    /// correction that makes them hold with equality.
    fn settle(&mut self, active: &[usize]) -> Result<()> {
        for &r in active {
            self.mark(r);
        }
        let mut indep = OrthoBasis::new(self.theta.len());
        let sel: Vec<usize> = (0..self.rows.len())
            .filter(|&r| self.tight[r] && indep.push(&self.rows[r], RANK_TOL))
            .collect();
        if sel.is_empty() {
            return Ok(());
        }
        let m = sel.len();
        let mut gram = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                gram[a * m + b] = dot(&self.rows[sel[a]], &self.rows[sel[b]]);
            }
        }
        let res: Vec<f64> = sel.iter().map(|&r| self.slack(r)).collect();
        let lu = Lu::factor(&gram, m).ok_or_else(|| Error::Transform("singular active set".into()))?;
        let y = lu.solve(&res);
        for (a, &r) in sel.iter().enumerate() {
            for (t, c) in self.theta.iter_mut().zip(&self.rows[r]) {
                *t += y[a] * c;
            }
        }
        Ok(())
    }

    /// Moves towards making `target` active. Returns the rows that became
    /// active, or `None` when `target` cannot move without releasing an
    /// active row.
    fn step(&mut self, target: usize) -> Option<Vec<usize>> {
        if self.tight[target] {
            return None;
        }
        let c = &self.rows[target];
        let dir = self.basis.residual(c);
        let (dn, cn) = (dot(&dir, &dir).sqrt(), dot(c, c).sqrt());
        if dn <= RANK_TOL * cn {
            return None;
        }
        let mut best = f64::INFINITY;
        for r in 0..self.rows.len() {
            if self.tight[r] {
                continue;
            }
            let rate = dot(&self.rows[r], &dir);
            if rate > RANK_TOL * dn * dot(&self.rows[r], &self.rows[r]).sqrt() {
                best = best.min(self.slack(r).max(0.0) / rate);
            }
        }
        debug_assert!(best.is_finite());
        for (t, d) in self.theta.iter_mut().zip(&dir) {
            *t += best * d;
        }
        let newly: Vec<usize> = (0..self.rows.len())
            .filter(|&r| !self.tight[r] && self.slack(r) <= WALK_TOL * self.scale(r))
            .collect();
        for &r in &newly {
            self.mark(r);
        }
        Some(newly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltResult {
    pub piece: AffinePiece,
    /// Rank of the active constraint set at the result.
    pub active: usize,
    /// Neighbour points the tilted piece now interpolates.
    pub new_points: Vec<usize>,
}

/// Tilts pair `pair` of `assign` inside its polyhedron until
/// `min(d+1, n+m)` constraints are active.
pub fn tilt_piece(assign: &PieceAssignment, ds: &DataSet, pair: usize) -> Result<TiltResult> {
    let d = assign.dim;
    let p = assign
        .pairs
        .get(pair)
        .ok_or_else(|| Error::Validation(format!("no pair with index {pair}")))?;
    if p.points.len() >= d + 1 {
        return Ok(TiltResult {
            piece: p.piece.clone(),
            active: d + 1,
            new_points: Vec::new(),
        });
    }
    let lifted = |i: usize| -> Vec<f64> {
        let mut v = ds.x(i).to_vec();
        v.push(1.0);
        v
    };
    let t = &assign.targets;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut owner = Vec::new();
    for &i in &p.points {
        rows.push(lifted(i));
        rhs.push(t[i]);
        owner.push(i);
    }
    let n = rows.len();
    let mut seen = std::collections::BTreeSet::new();
    for (q, sign) in assign.neighbors(pair) {
        for &i in &assign.pairs[q].points {
            if p.points.contains(&i) || !seen.insert((i, sign)) {
                continue;
            }
            let c = f64::from(sign);
            rows.push(lifted(i).into_iter().map(|v| c * v).collect());
            rhs.push(c * t[i]);
            owner.push(i);
        }
    }
    let m_points: std::collections::BTreeSet<usize> = owner[n..].iter().copied().collect();
    if m_points.is_empty() {
        return Err(Error::Transform(format!(
            "pair ({}, {}) has no neighbour points to tilt towards",
            p.j, p.k
        )));
    }
    let goal = (d + 1).min(n + m_points.len());
    let mut theta = p.piece.a.clone();
    theta.push(p.piece.b);
    let mut w = Walker::new(rows, rhs, theta, &[]);
    let start: Vec<usize> = (0..w.rows.len())
        .filter(|&r| r < n || w.slack(r) <= WALK_TOL * w.scale(r))
        .collect();
    let worst = (n..w.rows.len()).map(|r| -w.slack(r)).fold(0.0f64, f64::max);
    if worst > 1e-9 * (1.0 + t.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
        return Err(Error::Transform(format!(
            "pair ({}, {}) violates a neighbour inequality by {worst:e}",
            p.j, p.k
        )));
    }
    w.settle(&start)?;
    while w.basis.rank() < goal {
        let next = (n..w.rows.len()).find_map(|r| w.step(r));
        if next.is_none() {
            break;
        }
    }
    let piece = AffinePiece::new(w.theta[..d].to_vec(), w.theta[d]);
    let new_points: std::collections::BTreeSet<usize> = (n..w.rows.len())
        .filter(|&r| w.tight[r])
        .map(|r| owner[r])
        .collect();
    Ok(TiltResult {
        piece,
        active: w.basis.rank(),
        new_points: new_points.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformOutcome {
    pub function: DcFunction,
    pub report: WellBehavedReport,
    /// Walk steps taken.
    pub steps: usize,
    /// `max_i |g(x_i) - f(x_i)|`.
    pub max_deviation: f64,
    /// Total number of (point, piece) activities, before and after.
    pub activity_before: usize,
    pub activity_after: usize,
}

/// Index helpers for the joint parameter vector: pieces of `f^+`, pieces of
/// `f^-`, then `u_i = g^+(x_i)`.
struct Layout {
    d: usize,
    pp: usize,
    pm: usize,
    n: usize,
}

impl Layout {
    fn vars(&self) -> usize {
        (self.pp + self.pm) * (self.d + 1) + self.n
    }
    fn piece(&self, plus: bool, j: usize) -> usize {
        (if plus { j } else { self.pp + j }) * (self.d + 1)
    }
    fn u(&self, i: usize) -> usize {
        (self.pp + self.pm) * (self.d + 1) + i
    }
    fn row(&self, plus: bool, i: usize, j: usize) -> usize {
        if plus {
            i * self.pp + j
        } else {
            self.n * self.pp + i * self.pm + j
        }
    }
    fn function(&self, theta: &[f64]) -> DcFunction {
        let part = |plus: bool, count: usize| -> Vec<AffinePiece> {
            (0..count)
                .map(|j| {
                    let o = self.piece(plus, j);
                    AffinePiece::new(theta[o..o + self.d].to_vec(), theta[o + self.d])
                })
                .collect()
        };
        DcFunction::new(part(true, self.pp), part(false, self.pm)).expect("consistent layout")
    }
}

/// Well-behaved version of the ε-approximation `f` of `ds`.
pub fn transform(f: &DcFunction, ds: &DataSet, eps: f64, tol: f64) -> Result<TransformOutcome> {
    let fit = verify_eps_approx(f, ds, eps);
    if !fit.feasible {
        return Err(Error::Validation(format!(
            "input is not an eps-approximation: max error {} > eps {eps} at points {:?}",
            fit.max_error,
            fit.violations.iter().map(|i| i + 1).collect::<Vec<_>>()
        )));
    }
    let lay = Layout {
        d: ds.dim(),
        pp: f.plus.len(),
        pm: f.minus.len(),
        n: ds.len(),
    };
    let targets: Vec<f64> = ds.points().iter().map(|p| f.eval(&p.x)).collect();
    let mut rows = Vec::with_capacity(lay.n * (lay.pp + lay.pm));
    let mut rhs = Vec::with_capacity(rows.capacity());
    for plus in [true, false] {
        let count = if plus { lay.pp } else { lay.pm };
        for i in 0..lay.n {
            for j in 0..count {
                let mut c = vec![0.0; lay.vars()];
                let o = lay.piece(plus, j);
                c[o..o + lay.d].copy_from_slice(ds.x(i));
                c[o + lay.d] = 1.0;
                c[lay.u(i)] = -1.0;
                rows.push(c);
                rhs.push(if plus { 0.0 } else { -targets[i] });
            }
        }
    }
    let mut theta = vec![0.0; lay.vars()];
    for (plus, part) in [(true, &f.plus), (false, &f.minus)] {
        for (j, p) in part.pieces().iter().enumerate() {
            let o = lay.piece(plus, j);
            theta[o..o + lay.d].copy_from_slice(&p.a);
            theta[o + lay.d] = p.b;
        }
    }
    for i in 0..lay.n {
        theta[lay.u(i)] = f.plus.eval(ds.x(i));
    }
    // adding one affine function to every piece changes nothing at the data
    let lineality: Vec<Vec<f64>> = (0..=lay.d)
        .map(|r| {
            let mut v = vec![0.0; lay.vars()];
            for j in 0..lay.pp + lay.pm {
                v[j * (lay.d + 1) + r] = 1.0;
            }
            for i in 0..lay.n {
                v[lay.u(i)] = if r < lay.d { ds.x(i)[r] } else { 1.0 };
            }
            v
        })
        .collect();

    let act = activity_map(f, ds, tol);
    let activity_before: usize = act.plus.iter().chain(&act.minus).map(Vec::len).sum();
    let mut w = Walker::new(rows, rhs, theta, &lineality);
    let mut start = Vec::new();
    for i in 0..lay.n {
        start.extend(act.plus[i].iter().map(|&j| lay.row(true, i, j)));
        start.extend(act.minus[i].iter().map(|&k| lay.row(false, i, k)));
    }
    w.settle(&start)?;
    // the correction may push near-active rows over; they join the active set
    for _ in 0..lay.vars() {
        let over: Vec<usize> = (0..w.rows.len())
            .filter(|&r| !w.tight[r] && w.slack(r) <= WALK_TOL * w.scale(r))
            .collect();
        if over.is_empty() {
            break;
        }
        w.settle(&over)?;
    }

    let mut steps = 0;
    loop {
        let g = lay.function(&w.theta);
        let failing = failing_pairs(&w, &lay, &g, ds, tol);
        if failing.is_empty() {
            break;
        }
        // rows that would add a point to a failing pair, in pair order
        let mut progressed = false;
        'pairs: for &(j, k, _) in &failing {
            for i in 0..lay.n {
                let (pj, mk) = (w.tight[lay.row(true, i, j)], w.tight[lay.row(false, i, k)]);
                let target = match (pj, mk) {
                    (false, true) => lay.row(true, i, j),
                    (true, false) => lay.row(false, i, k),
                    _ => continue,
                };
                if w.step(target).is_some() {
                    progressed = true;
                    break 'pairs;
                }
            }
        }
        if !progressed {
            progressed = (0..w.rows.len()).any(|r| w.step(r).is_some());
        }
        if !progressed {
            break;
        }
        steps += 1;
    }

    let function = lay.function(&w.theta);
    let max_deviation = ds
        .points()
        .iter()
        .zip(&targets)
        .map(|(p, t)| (function.eval(&p.x) - t).abs())
        .fold(0.0, f64::max);
    let report = check_well_behaved(&function, ds, tol);
    let after = activity_map(&function, ds, tol);
    Ok(TransformOutcome {
        activity_after: after.plus.iter().chain(&after.minus).map(Vec::len).sum(),
        function,
        report,
        steps,
        max_deviation,
        activity_before,
    })
}

/// Non-degenerate pairs, from the walk's active sets, with fewer than `d+1`
/// points; sorted by count, then pair.
fn failing_pairs(w: &Walker, lay: &Layout, g: &DcFunction, ds: &DataSet, tol: f64) -> Vec<(usize, usize, usize)> {
    let mut count = vec![0usize; lay.pp * lay.pm];
    for i in 0..lay.n {
        for j in (0..lay.pp).filter(|&j| w.tight[lay.row(true, i, j)]) {
            for k in (0..lay.pm).filter(|&k| w.tight[lay.row(false, i, k)]) {
                count[j * lay.pm + k] += 1;
            }
        }
    }
    let mut out: Vec<(usize, usize, usize)> = (0..lay.pp * lay.pm)
        .filter(|&p| count[p] > 0 && count[p] <= lay.d)
        .map(|p| (p / lay.pm, p % lay.pm, count[p]))
        .filter(|&(j, k, _)| domain::pair_depth(g, ds, j, k, tol) > domain::DEPTH_TOL)
        .collect();
    out.sort_by_key(|&(j, k, c)| (c, j, k));
    out
}

/// Maximum over data points of `|g(x_i) - f(x_i)|`.
pub fn max_deviation(f: &DcFunction, g: &DcFunction, ds: &DataSet) -> f64 {
    ds.points()
        .iter()
        .map(|p| (f.eval(&p.x) - g.eval(&p.x)).abs())
        .fold(0.0, f64::max)
}

/// Whether every point set interpolated by a pair of `f` is contained in the
/// set of the same pair of `g`.
pub fn preserves_pair_points(f: &DcFunction, g: &DcFunction, ds: &DataSet, tol: f64) -> bool {
    let (a, b) = (activity_map(f, ds, tol), activity_map(g, ds, tol));
    (0..ds.len()).all(|i| {
        a.plus[i].iter().all(|j| b.plus[i].contains(j)) && a.minus[i].iter().all(|k| b.minus[i].contains(k))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpwl::ACTIVITY_TOL;

    fn line(a: f64, b: f64) -> AffinePiece {
        AffinePiece::new(vec![a], b)
    }

    fn ds1(rows: &[(f64, f64)]) -> DataSet {
        let rows: Vec<_> = rows.iter().map(|&(x, z)| (vec![x], z)).collect();
        DataSet::from_rows(1, &rows, "t").unwrap()
    }

    #[test]
    fn single_piece_has_no_edges() {
        let s = ds1(&[(0.0, 0.0), (1.0, 1.0)]);
        let f = DcFunction::new(vec![line(1.0, 0.0)], vec![line(0.0, 0.0)]).unwrap();
        let a = derive_assignment(&f, &s, ACTIVITY_TOL).unwrap();
        assert_eq!(a.pairs.len(), 1);
        assert!(a.edges.is_empty());
    }

    #[test]
    fn edge_signs() {
        let s = ds1(&[(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]);
        // max(-x + 1, x - 1): two pieces of f^+ sharing k
        let f = DcFunction::new(vec![line(-1.0, 1.0), line(1.0, -1.0)], vec![line(0.0, 0.0)]).unwrap();
        let a = derive_assignment(&f, &s, ACTIVITY_TOL).unwrap();
        assert_eq!(a.edges, vec![NeighborEdge { a: 0, b: 1, sign: 1 }]);
        // -max(x - 1, -x + 1): two pieces of f^- sharing j
        let s = ds1(&[(0.0, -1.0), (1.0, 0.0), (2.0, -1.0)]);
        let f = DcFunction::new(vec![line(0.0, 0.0)], vec![line(-1.0, 1.0), line(1.0, -1.0)]).unwrap();
        let a = derive_assignment(&f, &s, ACTIVITY_TOL).unwrap();
        assert_eq!(a.edges, vec![NeighborEdge { a: 0, b: 1, sign: -1 }]);
    }

    #[test]
    fn tilt_onto_two_neighbour_points() {
        // min(x, 1.5, 4 - x) on five points; the cap holds only x = 2
        let s = ds1(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.5), (3.0, 1.0), (4.0, 0.0)]);
        let f = DcFunction::new(vec![line(0.0, 0.0)], vec![line(-1.0, 0.0), line(0.0, -1.5), line(1.0, -4.0)]).unwrap();
        let a = derive_assignment(&f, &s, ACTIVITY_TOL).unwrap();
        let p = a.find(0, 1).unwrap();
        assert_eq!(a.pairs[p].points, vec![2]);
        let r = tilt_piece(&a, &s, p).unwrap();
        assert_eq!(r.active, 2);
        assert_eq!(r.new_points.len(), 1);
        // still through (2, 1.5) and now through one neighbour point
        assert!((r.piece.eval(&[2.0]) - 1.5).abs() < 1e-12);
        let q = r.new_points[0];
        assert!((r.piece.eval(s.x(q)) - a.targets[q]).abs() < 1e-12);
    }

    #[test]
    fn tilt_is_noop_when_determined() {
        let s = ds1(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let f = DcFunction::new(vec![line(1.0, 0.0)], vec![line(0.0, 0.0)]).unwrap();
        let a = derive_assignment(&f, &s, ACTIVITY_TOL).unwrap();
        let r = tilt_piece(&a, &s, 0).unwrap();
        assert_eq!(r.active, 2);
        assert_eq!(r.piece, f.pair_piece(0, 0));
    }

    #[test]
    fn transform_fixes_tent_cap() {
        let s = ds1(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.5), (3.0, 1.0), (4.0, 0.0)]);
        let f = DcFunction::new(vec![line(0.0, 0.0)], vec![line(-1.0, 0.0), line(0.0, -1.5), line(1.0, -4.0)]).unwrap();
        assert!(!check_well_behaved(&f, &s, ACTIVITY_TOL).pass);
        let out = transform(&f, &s, 0.0, ACTIVITY_TOL).unwrap();
        assert!(out.report.pass, "{:?}", out.report);
        assert!(out.max_deviation < 1e-12);
        assert!(preserves_pair_points(&f, &out.function, &s, ACTIVITY_TOL));
        assert!(out.activity_after > out.activity_before);
    }

    #[test]
    fn transform_keeps_well_behaved_input() {
        let s = ds1(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 1.0), (4.0, 0.0)]);
        let f = DcFunction::new(vec![line(0.0, 0.0)], vec![line(-1.0, 0.0), line(1.0, -4.0)]).unwrap();
        let out = transform(&f, &s, 0.0, ACTIVITY_TOL).unwrap();
        assert_eq!(out.steps, 0);
        assert!(out.report.pass);
        assert!(max_deviation(&f, &out.function, &s) < 1e-12);
    }

    #[test]
    fn transform_rejects_non_approximation() {
        let s = ds1(&[(0.0, 0.0), (1.0, 5.0)]);
        let f = DcFunction::new(vec![line(0.0, 0.0)], vec![line(0.0, 0.0)]).unwrap();
        assert!(matches!(transform(&f, &s, 0.1, ACTIVITY_TOL), Err(Error::Validation(_))));
    }
}
