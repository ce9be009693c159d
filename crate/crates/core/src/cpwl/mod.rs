//! CPWL functions in difference-of-convex form `f = max_j f_j^+ - max_k f_k^-`.

pub mod domain;
pub mod geometry;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataSet, ScalingInfo};
use crate::{Error, Result};

pub use geometry::{barycentric, point_in_simplex, segment_crosses_facet};

/// Ties in [`eval_dc`] argmax sets.
pub const ARGMAX_TOL: f64 = 1e-9;
/// Default tolerance for [`activity_map`] and [`check_well_behaved`].
pub const ACTIVITY_TOL: f64 = 1e-6;
/// Default slack accepted by [`verify_eps_approx`].
pub const REPORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    pub b: f64,
}

impl AffinePiece {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Self { a, b }
    }

    pub fn constant(dim: usize, b: f64) -> Self {
        Self { a: vec![0.0; dim], b }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `a.x + b`, summed left to right. Lengths are not checked.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (ai, xi) in self.a.iter().zip(x) {
            s += ai * xi;
        }
        s + self.b
    }

    pub fn sub(&self, other: &AffinePiece) -> AffinePiece {
        AffinePiece {
            a: self.a.iter().zip(&other.a).map(|(p, q)| p - q).collect(),
            b: self.b - other.b,
        }
    }

    pub fn max_abs_diff(&self, other: &AffinePiece) -> f64 {
        self.a
            .iter()
            .zip(&other.a)
            .map(|(p, q)| (p - q).abs())
            .fold((self.b - other.b).abs(), f64::max)
    }
}

pub fn eval_affine(p: &AffinePiece, x: &[f64]) -> Result<f64> {
    if p.dim() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: x.len(),
        });
    }
    Ok(p.eval(x))
}

/// Pointwise maximum of a nonempty list of affine pieces.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ConvexPwl {
    pieces: Vec<AffinePiece>,
}

impl<'de> Deserialize<'de> for ConvexPwl {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pieces = Vec::<AffinePiece>::deserialize(d)?;
        ConvexPwl::new(pieces).map_err(serde::de::Error::custom)
    }
}

impl ConvexPwl {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::Validation("a convex part needs at least one piece".into()))?;
        let d = first.dim();
        if let Some(p) = pieces.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn pieces_mut(&mut self) -> &mut [AffinePiece] {
        &mut self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum value and every piece within `tol` of it.
    pub fn argmax(&self, x: &[f64], tol: f64) -> (f64, Vec<usize>) {
        let vals: Vec<f64> = self.pieces.iter().map(|p| p.eval(x)).collect();
        let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let active = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| m - **v <= tol)
            .map(|(j, _)| j)
            .collect();
        (m, active)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcFunction {
    pub plus: ConvexPwl,
    pub minus: ConvexPwl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcValue {
    pub value: f64,
    pub plus_value: f64,
    pub minus_value: f64,
    pub plus_active: Vec<usize>,
    pub minus_active: Vec<usize>,
}

impl DcFunction {
    pub fn new(plus: Vec<AffinePiece>, minus: Vec<AffinePiece>) -> Result<Self> {
        let plus = ConvexPwl::new(plus)?;
        let minus = ConvexPwl::new(minus)?;
        if plus.dim() != minus.dim() {
            return Err(Error::DimensionMismatch {
                expected: plus.dim(),
                got: minus.dim(),
            });
        }
        Ok(Self { plus, minus })
    }

    /// The zero function with one piece in each part.
    pub fn zero(dim: usize) -> Self {
        Self {
            plus: ConvexPwl {
                pieces: vec![AffinePiece::constant(dim, 0.0)],
            },
            minus: ConvexPwl {
                pieces: vec![AffinePiece::constant(dim, 0.0)],
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.plus.eval(x) - self.minus.eval(x)
    }

    /// `f_{j,k} = f_j^+ - f_k^-`.
    pub fn pair_piece(&self, j: usize, k: usize) -> AffinePiece {
        self.plus.pieces[j].sub(&self.minus.pieces[k])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DC function serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DcFunction = serde_json::from_str(text)?;
        if f.plus.dim() != f.minus.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.plus.dim(),
                got: f.minus.dim(),
            });
        }
        Ok(f)
    }

    /// Maps a function fitted on rescaled data back to original units:
    /// `g(x) = z_scale * f((x - x_offset) / x_scale) + z_offset`.
    pub fn unscale(&self, info: &ScalingInfo) -> DcFunction {
        let map = |p: &AffinePiece, add: f64| {
            let a: Vec<f64> = p
                .a
                .iter()
                .zip(&info.x_scale)
                .map(|(ai, s)| info.z_scale * ai / s)
                .collect();
            let shift: f64 = p
                .a
                .iter()
                .zip(info.x_offset.iter().zip(&info.x_scale))
                .map(|(ai, (o, s))| ai * o / s)
                .sum();
            AffinePiece {
                a,
                b: info.z_scale * (p.b - shift) + add,
            }
        };
        DcFunction {
            plus: ConvexPwl {
                pieces: self.plus.pieces.iter().map(|p| map(p, info.z_offset)).collect(),
            },
            minus: ConvexPwl {
                pieces: self.minus.pieces.iter().map(|p| map(p, 0.0)).collect(),
            },
        }
    }
}

pub fn eval_dc(f: &DcFunction, x: &[f64]) -> Result<DcValue> {
    if f.dim() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.len(),
        });
    }
    let (pv, pa) = f.plus.argmax(x, ARGMAX_TOL);
    let (mv, ma) = f.minus.argmax(x, ARGMAX_TOL);
    Ok(DcValue {
        value: pv - mv,
        plus_value: pv,
        minus_value: mv,
        plus_active: pa,
        minus_active: ma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Signed errors `f(x_i) - z_i`.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub mean_error: f64,
    pub eps: f64,
    pub tol: f64,
    pub feasible: bool,
    /// Points whose error exceeds `eps + tol`.
    pub violations: Vec<usize>,
}

pub fn verify_eps_approx(f: &DcFunction, ds: &DataSet, eps: f64) -> FitReport {
    verify_eps_approx_tol(f, ds, eps, REPORT_TOL)
}

pub fn verify_eps_approx_tol(f: &DcFunction, ds: &DataSet, eps: f64, tol: f64) -> FitReport {
    let errors: Vec<f64> = ds.points().iter().map(|p| f.eval(&p.x) - p.z).collect();
    let max_error = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let mean_error = if errors.is_empty() {
        0.0
    } else {
        errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64
    };
    let violations: Vec<usize> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| e.abs() > eps + tol)
        .map(|(i, _)| i)
        .collect();
    FitReport {
        feasible: violations.is_empty(),
        errors,
        max_error,
        mean_error,
        eps,
        tol,
        violations,
    }
}

/// Active piece indices of `f^+` and `f^-` at every data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityMap {
    pub plus: Vec<Vec<usize>>,
    pub minus: Vec<Vec<usize>>,
}

impl ActivityMap {
    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    /// Distinct `(j, k)` pairs with `j in J_i`, `k in K_i` for some `i`, sorted.
    pub fn active_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .plus
            .iter()
            .zip(&self.minus)
            .flat_map(|(js, ks)| js.iter().flat_map(move |&j| ks.iter().map(move |&k| (j, k))))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

pub fn activity_map(f: &DcFunction, ds: &DataSet, tol: f64) -> ActivityMap {
    let mut plus = Vec::with_capacity(ds.len());
    let mut minus = Vec::with_capacity(ds.len());
    for p in ds.points() {
        plus.push(f.plus.argmax(&p.x, tol).1);
        minus.push(f.minus.argmax(&p.x, tol).1);
    }
    ActivityMap { plus, minus }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    pub j: usize,
    pub k: usize,
    /// Points `i` with `|f_{j,k}(x_i) - f(x_i)| <= tol`.
    pub points: Vec<usize>,
    /// The pair's domain meets the hull of the data only in a lower-dimensional
    /// set, so it is not an affine piece of `f`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellBehavedReport {
    pub pass: bool,
    pub required: usize,
    pub pairs: Vec<PairCount>,
}

impl WellBehavedReport {
    pub fn failing(&self) -> impl Iterator<Item = &PairCount> {
        self.pairs
            .iter()
            .filter(move |p| !p.degenerate && p.points.len() < self.required)
    }
}

/// Points interpolated by each pair active somewhere on the data.
pub fn pair_counts(f: &DcFunction, ds: &DataSet, tol: f64) -> Vec<PairCount> {
    let fx: Vec<f64> = ds.points().iter().map(|p| f.eval(&p.x)).collect();
    let act = activity_map(f, ds, tol);
    act.active_pairs()
        .into_iter()
        .map(|(j, k)| {
            let g = f.pair_piece(j, k);
            let points = ds
                .points()
                .iter()
                .zip(&fx)
                .enumerate()
                .filter(|(_, (p, v))| (g.eval(&p.x) - **v).abs() <= tol)
                .map(|(i, _)| i)
                .collect();
            let degenerate = domain::pair_depth(f, ds, j, k, tol) <= domain::DEPTH_TOL;
            PairCount { j, k, points, degenerate }
        })
        .collect()
}

/// Every pair whose domain has interior within the data hull and that is
/// active at some data point must interpolate at least `d+1` of the targets
/// `z_i + e_i = f(x_i)`.
pub fn check_well_behaved(f: &DcFunction, ds: &DataSet, tol: f64) -> WellBehavedReport {
    let pairs = pair_counts(f, ds, tol);
    let required = ds.dim() + 1;
    WellBehavedReport {
        pass: pairs.iter().all(|p| p.degenerate || p.points.len() >= required),
        required,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: f64, b: f64) -> AffinePiece {
        AffinePiece::new(vec![a], b)
    }

    fn dc(plus: &[(f64, f64)], minus: &[(f64, f64)]) -> DcFunction {
        DcFunction::new(
            plus.iter().map(|&(a, b)| line(a, b)).collect(),
            minus.iter().map(|&(a, b)| line(a, b)).collect(),
        )
        .unwrap()
    }

    fn ds(rows: &[(f64, f64)]) -> DataSet {
        let rows: Vec<_> = rows.iter().map(|&(x, z)| (vec![x], z)).collect();
        DataSet::from_rows(1, &rows, "t").unwrap()
    }

    #[test]
    fn affine_values() {
        assert_eq!(eval_affine(&AffinePiece::constant(3, 2.5), &[1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert_eq!(eval_affine(&AffinePiece::new(vec![1.0, 2.0], 0.0), &[3.0, 4.0]).unwrap(), 11.0);
        assert!((eval_affine(&line(1.0, -0.1), &[1.0]).unwrap() - 0.9).abs() < 1e-15);
        assert!(eval_affine(&line(1.0, 0.0), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dc_values_and_ties() {
        let z = DcFunction::zero(1);
        assert_eq!(eval_dc(&z, &[3.0]).unwrap().value, 0.0);

        let f = dc(&[(1.0, 0.0), (2.0, -1.0)], &[(0.0, 0.0)]);
        let v = eval_dc(&f, &[0.4]).unwrap();
        assert!((v.value - 0.4).abs() < 1e-15);
        assert_eq!(v.plus_active, vec![0]);
        let v = eval_dc(&f, &[1.0]).unwrap();
        assert_eq!(v.value, 1.0);
        assert_eq!(v.plus_active, vec![0, 1]);
    }

    #[test]
    fn json_shape() {
        let f = dc(&[(1.0, 0.5)], &[(0.0, 0.0)]);
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"plus":[{"a":[1.0],"b":0.5}],"minus":[{"a":[0.0],"b":0.0}]}"#);
        assert_eq!(DcFunction::from_json(&text).unwrap(), f);
        assert!(DcFunction::from_json(r#"{"plus":[],"minus":[{"a":[0.0],"b":0.0}]}"#).is_err());
    }

    #[test]
    fn verify_interpolation_and_mismatch() {
        let s = ds(&[(0.0, 0.0), (1.0, 1.0)]);
        let r = verify_eps_approx(&dc(&[(1.0, 0.0)], &[(0.0, 0.0)]), &s, 0.0);
        assert!(r.feasible);
        assert_eq!(r.max_error, 0.0);

        let r = verify_eps_approx(&DcFunction::zero(1), &ds(&[(0.0, 1.0)]), 0.5);
        assert!(!r.feasible);
        assert_eq!(r.max_error, 1.0);
        assert_eq!(r.violations, vec![0]);
        assert_eq!(r.errors, vec![-1.0]);
    }

    #[test]
    fn activity_single_and_tie() {
        let s = ds(&[(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]);
        let f = dc(&[(1.0, 0.0)], &[(0.0, 0.0)]);
        let m = activity_map(&f, &s, ACTIVITY_TOL);
        assert!(m.plus.iter().all(|j| j == &vec![0]));
        assert!(m.minus.iter().all(|k| k == &vec![0]));

        let f = dc(&[(1.0, 0.0), (2.0, -1.0)], &[(0.0, 0.0)]);
        let m = activity_map(&f, &s, ACTIVITY_TOL);
        assert_eq!(m.plus, vec![vec![0], vec![0, 1], vec![1]]);
        assert_eq!(m.active_pairs(), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn well_behaved_affine_fit() {
        let s = ds(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let r = check_well_behaved(&dc(&[(1.0, 0.0)], &[(0.0, 0.0)]), &s, ACTIVITY_TOL);
        assert!(r.pass);
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].points, vec![0, 1, 2]);
    }

    #[test]
    fn well_behaved_underdetermined_middle_piece() {
        // tent with a flat cap over [1.5, 2.5] holding only x = 2
        let s = ds(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.5), (3.0, 1.0), (4.0, 0.0)]);
        // f = -max(-x, -1.5, x - 4) = min(x, 1.5, 4 - x)
        let f = dc(&[(0.0, 0.0)], &[(-1.0, 0.0), (0.0, -1.5), (1.0, -4.0)]);
        assert!(verify_eps_approx(&f, &s, 0.0).feasible);
        let r = check_well_behaved(&f, &s, ACTIVITY_TOL);
        assert!(!r.pass);
        let bad: Vec<_> = r.failing().map(|p| (p.j, p.k, p.points.clone())).collect();
        assert_eq!(bad, vec![(0, 1, vec![2])]);
        assert_eq!(r.pairs[0].points, vec![0, 1]);
    }

    #[test]
    fn coincident_kinks_give_degenerate_pairs() {
        // f^+ and f^- both kink at x = 2, so (0,1) and (1,0) touch only there
        let s = ds(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 1.0), (4.0, 2.0)]);
        let f = dc(&[(0.0, 0.0), (2.0, -4.0)], &[(0.0, 0.0), (1.0, -2.0)]);
        assert!(verify_eps_approx(&f, &s, 0.0).feasible);
        let r = check_well_behaved(&f, &s, ACTIVITY_TOL);
        let degenerate: Vec<_> = r.pairs.iter().filter(|p| p.degenerate).map(|p| (p.j, p.k)).collect();
        assert_eq!(degenerate, vec![(0, 1), (1, 0)]);
        assert!(r.pass);
    }

    #[test]
    fn unscale_round_trip() {
        let rows = [(vec![2.0, -1.0], 5.0), (vec![4.0, 3.0], 7.0), (vec![3.0, 0.0], 1.0)];
        let s = DataSet::from_rows(2, &rows, "u").unwrap();
        let (scaled, info) = crate::dataset::rescale(&s);
        let f = DcFunction::new(
            vec![AffinePiece::new(vec![0.3, -0.2], 0.1), AffinePiece::new(vec![1.0, 0.5], -0.4)],
            vec![AffinePiece::new(vec![0.2, 0.2], 0.0)],
        )
        .unwrap();
        let g = f.unscale(&info);
        for (p, q) in s.points().iter().zip(scaled.points()) {
            let want = info.unscale_z(f.eval(&q.x));
            assert!((g.eval(&p.x) - want).abs() < 1e-12);
        }
    }
}
