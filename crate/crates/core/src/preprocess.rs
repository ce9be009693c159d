//! Extreme affine interpolants of `(d+1)`-subsets under `±eps` perturbations,
//! and the big-M values and variable bounds derived from them.
//!
//! Every `(d+1)`-subset `s` gives a lifted matrix `M_s = [x_i 1]`. It is
//! factored once and the factorisation solves all `2^(d+1)` systems
//! `M_s (a, b) = z_s + e` for `e` in `{-eps, +eps}^(d+1)`. Per-point
//! extrema of `g(x_i)` and coefficient extrema are reductions over these
//! solutions, so the default mode folds them without storing the functions.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::combin::{binomial, Combinations};
use crate::cpwl::AffinePiece;
use crate::dataset::DataSet;
use crate::linalg::{inf_norm, Lu};
use crate::{Error, Result};

/// Componentwise tolerance for merging near-identical functions.
pub const DEDUP_TOL: f64 = 1e-10;
/// Relative determinant threshold below which a subset is rejected as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub subset: Vec<usize>,
    /// `+1` or `-1` per subset point.
    pub signs: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeAffineSet {
    pub functions: Vec<AffinePiece>,
    pub sources: Vec<Source>,
    /// Functions produced before deduplication.
    pub raw_count: u128,
    /// Functions dropped as near-duplicates.
    pub dedup_count: usize,
}

/// Per-point and per-coefficient extrema over the extreme affine set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub eps: f64,
    pub gmin: Vec<f64>,
    pub gmax: Vec<f64>,
    pub a_lo: Vec<f64>,
    pub a_hi: Vec<f64>,
    pub b_lo: f64,
    pub b_hi: f64,
    pub raw_count: u128,
}

impl Extrema {
    fn empty(n: usize, d: usize, eps: f64) -> Self {
        Self {
            eps,
            gmin: vec![f64::INFINITY; n],
            gmax: vec![f64::NEG_INFINITY; n],
            a_lo: vec![f64::INFINITY; d],
            a_hi: vec![f64::NEG_INFINITY; d],
            b_lo: f64::INFINITY,
            b_hi: f64::NEG_INFINITY,
            raw_count: 0,
        }
    }

    fn absorb(&mut self, g: &AffinePiece, ds: &DataSet) {
        for (i, p) in ds.points().iter().enumerate() {
            let v = g.eval(&p.x);
            self.gmin[i] = self.gmin[i].min(v);
            self.gmax[i] = self.gmax[i].max(v);
        }
        for (r, &a) in g.a.iter().enumerate() {
            self.a_lo[r] = self.a_lo[r].min(a);
            self.a_hi[r] = self.a_hi[r].max(a);
        }
        self.b_lo = self.b_lo.min(g.b);
        self.b_hi = self.b_hi.max(g.b);
        self.raw_count += 1;
    }

    fn merge(mut self, other: &Extrema) -> Self {
        let mn = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x = x.min(*y));
        let mx = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x = x.max(*y));
        mn(&mut self.gmin, &other.gmin);
        mx(&mut self.gmax, &other.gmax);
        mn(&mut self.a_lo, &other.a_lo);
        mx(&mut self.a_hi, &other.a_hi);
        self.b_lo = self.b_lo.min(other.b_lo);
        self.b_hi = self.b_hi.max(other.b_hi);
        self.raw_count += other.raw_count;
        self
    }

    pub fn spread(&self, i: usize) -> f64 {
        self.gmax[i] - self.gmin[i]
    }
}

fn subset_solver(ds: &DataSet, subset: &[usize]) -> Result<Lu> {
    let n = ds.dim() + 1;
    let m = ds.lifted_matrix(subset);
    let scale = inf_norm(&m, n).powi(ds.dim() as i32);
    match Lu::factor(&m, n) {
        Some(lu) if lu.det().abs() > SINGULAR_TOL * scale => Ok(lu),
        other => Err(Error::Singular {
            subset: subset.to_vec(),
            det: other.map_or(0.0, |lu| lu.det()),
        }),
    }
}

/// Calls `visit(signs, g)` for the `2^(d+1)` extreme interpolants of `subset`.
/// Sign patterns are visited in binary order, bit `k` set meaning `+eps` on
/// the `k`-th subset point.
fn for_each_extreme(
    ds: &DataSet,
    subset: &[usize],
    eps: f64,
    mut visit: impl FnMut(u32, AffinePiece),
) -> Result<()> {
    let lu = subset_solver(ds, subset)?;
    let n = subset.len();
    let d = n - 1;
    let mut rhs = vec![0.0; n];
    let mut sol = vec![0.0; n];
    for mask in 0..(1u32 << n) {
        for (k, &i) in subset.iter().enumerate() {
            let e = if mask >> k & 1 == 1 { eps } else { -eps };
            rhs[k] = ds.z(i) + e;
        }
        lu.solve_into(&rhs, &mut sol);
        visit(mask, AffinePiece::new(sol[..d].to_vec(), sol[d]));
    }
    Ok(())
}

fn check_inputs(ds: &DataSet, eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Validation(format!("eps must be finite and >= 0, got {eps}")));
    }
    if ds.len() < ds.dim() + 1 {
        return Err(Error::Validation(format!(
            "need at least d+1 = {} points, got {}",
            ds.dim() + 1,
            ds.len()
        )));
    }
    Ok(())
}

fn extrema_for_first(ds: &DataSet, eps: f64, first: usize) -> Result<Extrema> {
    let mut acc = Extrema::empty(ds.len(), ds.dim(), eps);
    for s in Combinations::with_first(ds.len(), ds.dim() + 1, first) {
        for_each_extreme(ds, &s, eps, |_, g| acc.absorb(&g, ds))?;
    }
    Ok(acc)
}

/// Streams all extreme interpolants into [`Extrema`] without storing them.
/// The result does not depend on the thread count.
pub fn compute_extrema(ds: &DataSet, eps: f64) -> Result<Extrema> {
    check_inputs(ds, eps)?;
    let k = ds.dim() + 1;
    let firsts: Vec<usize> = (0..=ds.len() - k).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Extrema>> = {
        use rayon::prelude::*;
        firsts.par_iter().map(|&f| extrema_for_first(ds, eps, f)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Extrema>> = firsts.iter().map(|&f| extrema_for_first(ds, eps, f)).collect();

    let mut acc = Extrema::empty(ds.len(), ds.dim(), eps);
    for part in parts {
        acc = acc.merge(&part?);
    }
    Ok(acc)
}

/// Enumerates and stores every extreme interpolant, then removes
/// near-duplicates (componentwise within [`DEDUP_TOL`]).
pub fn enumerate_extreme_affine(ds: &DataSet, eps: f64) -> Result<ExtremeAffineSet> {
    check_inputs(ds, eps)?;
    let k = ds.dim() + 1;
    let mut raw: Vec<(AffinePiece, Source)> = Vec::new();
    for s in Combinations::new(ds.len(), k) {
        for_each_extreme(ds, &s, eps, |mask, g| {
            let signs = (0..k).map(|b| if mask >> b & 1 == 1 { 1 } else { -1 }).collect();
            raw.push((
                g,
                Source {
                    subset: s.clone(),
                    signs,
                },
            ));
        })?;
    }
    let raw_count = raw.len() as u128;
    let (functions, sources) = dedup(raw);
    let dedup_count = raw_count as usize - functions.len();
    Ok(ExtremeAffineSet {
        functions,
        sources,
        raw_count,
        dedup_count,
    })
}

fn key(g: &AffinePiece) -> f64 {
    g.a.first().copied().unwrap_or(g.b)
}

fn dedup(mut raw: Vec<(AffinePiece, Source)>) -> (Vec<AffinePiece>, Vec<Source>) {
    // stable sort on the first coefficient; near-duplicates then sit in a
    // window of width DEDUP_TOL on that key
    raw.sort_by(|x, y| key(&x.0).total_cmp(&key(&y.0)));
    let mut kept: Vec<(AffinePiece, Source)> = Vec::with_capacity(raw.len());
    for (g, src) in raw {
        let kg = key(&g);
        let dup = kept
            .iter()
            .rev()
            .take_while(|(h, _)| kg - key(h) <= DEDUP_TOL)
            .any(|(h, _)| h.max_abs_diff(&g) <= DEDUP_TOL);
        if !dup {
            kept.push((g, src));
        }
    }
    kept.into_iter().unzip()
}

/// `gmin[i]`, `gmax[i]` over the stored functions.
pub fn pointwise_extrema(set: &ExtremeAffineSet, ds: &DataSet) -> (Vec<f64>, Vec<f64>) {
    let mut gmin = vec![f64::INFINITY; ds.len()];
    let mut gmax = vec![f64::NEG_INFINITY; ds.len()];
    for g in &set.functions {
        for (i, p) in ds.points().iter().enumerate() {
            let v = g.eval(&p.x);
            gmin[i] = gmin[i].min(v);
            gmax[i] = gmax[i].max(v);
        }
    }
    (gmin, gmax)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientExtrema {
    pub a_lo: Vec<f64>,
    pub a_hi: Vec<f64>,
    pub b_lo: f64,
    pub b_hi: f64,
}

pub fn coefficient_extrema(set: &ExtremeAffineSet) -> CoefficientExtrema {
    let d = set.functions.first().map_or(0, |g| g.dim());
    let mut out = CoefficientExtrema {
        a_lo: vec![f64::INFINITY; d],
        a_hi: vec![f64::NEG_INFINITY; d],
        b_lo: f64::INFINITY,
        b_hi: f64::NEG_INFINITY,
    };
    for g in &set.functions {
        for (r, &a) in g.a.iter().enumerate() {
            out.a_lo[r] = out.a_lo[r].min(a);
            out.a_hi[r] = out.a_hi[r].max(a);
        }
        out.b_lo = out.b_lo.min(g.b);
        out.b_hi = out.b_hi.max(g.b);
    }
    out
}

impl ExtremeAffineSet {
    pub fn extrema(&self, ds: &DataSet, eps: f64) -> Extrema {
        let (gmin, gmax) = pointwise_extrema(self, ds);
        let c = coefficient_extrema(self);
        Extrema {
            eps,
            gmin,
            gmax,
            a_lo: c.a_lo,
            a_hi: c.a_hi,
            b_lo: c.b_lo,
            b_hi: c.b_hi,
            raw_count: self.raw_count,
        }
    }
}

fn factor(pc: usize, pnc: usize) -> f64 {
    (pc - 1).min(pnc) as f64
}

/// `M_i^c = min(P^c - 1, P^{not c}) (gmax_i - gmin_i)`; returns `(M^-, M^+)`.
pub fn compute_big_m(gmin: &[f64], gmax: &[f64], pp: usize, pm: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(pp >= 1 && pm >= 1, "piece counts must be positive");
    let fp = factor(pp, pm);
    let fm = factor(pm, pp);
    let spread = gmin.iter().zip(gmax).map(|(lo, hi)| hi - lo);
    spread.map(|s| (fm * s, fp * s)).unzip()
}

/// `(a_prime, b_prime)` with `a'_r = min(P^- - 1, P^+)(a_hi_r - a_lo_r)`.
pub fn derived_bounds(a_lo: &[f64], a_hi: &[f64], b_lo: f64, b_hi: f64, pp: usize, pm: usize) -> (Vec<f64>, f64) {
    let f = factor(pm, pp);
    let a_prime = a_lo.iter().zip(a_hi).map(|(lo, hi)| f * (hi - lo)).collect();
    (a_prime, f * (b_hi - b_lo))
}

/// Symmetric table `M_pq = M_p + M_q` for `p != q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseBigM {
    m: Vec<f64>,
}

impl PairwiseBigM {
    pub fn get(&self, p: usize, q: usize) -> Option<f64> {
        (p != q).then(|| self.m[p] + self.m[q])
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

pub fn pairwise_big_m(m: &[f64]) -> PairwiseBigM {
    PairwiseBigM { m: m.to_vec() }
}

/// Closed interval; infinite ends mean unbounded.
pub type Interval = (f64, f64);

/// Big-M values, coefficient extrema and derived parameters for one
/// `(dataset, eps, P^+, P^-)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsBundle {
    pub eps: f64,
    pub pp: usize,
    pub pm: usize,
    pub gmin: Vec<f64>,
    pub gmax: Vec<f64>,
    #[serde(rename = "M_minus")]
    pub m_minus: Vec<f64>,
    #[serde(rename = "M_plus")]
    pub m_plus: Vec<f64>,
    pub a_lo: Vec<f64>,
    pub a_hi: Vec<f64>,
    pub b_lo: f64,
    pub b_hi: f64,
    pub a_prime: Vec<f64>,
    pub b_prime: f64,
    #[serde(default)]
    pub raw_count: u128,
}

impl BoundsBundle {
    pub fn new(ex: &Extrema, pp: usize, pm: usize) -> Self {
        let (m_minus, m_plus) = compute_big_m(&ex.gmin, &ex.gmax, pp, pm);
        let (a_prime, b_prime) = derived_bounds(&ex.a_lo, &ex.a_hi, ex.b_lo, ex.b_hi, pp, pm);
        Self {
            eps: ex.eps,
            pp,
            pm,
            gmin: ex.gmin.clone(),
            gmax: ex.gmax.clone(),
            m_minus,
            m_plus,
            a_lo: ex.a_lo.clone(),
            a_hi: ex.a_hi.clone(),
            b_lo: ex.b_lo,
            b_hi: ex.b_hi,
            a_prime,
            b_prime,
            raw_count: ex.raw_count,
        }
    }

    pub fn dim(&self) -> usize {
        self.a_lo.len()
    }

    pub fn len(&self) -> usize {
        self.gmin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gmin.is_empty()
    }

    /// `M_i^+` if `plus`, else `M_i^-`.
    pub fn big_m(&self, plus: bool, i: usize) -> f64 {
        if plus {
            self.m_plus[i]
        } else {
            self.m_minus[i]
        }
    }

    pub fn max_big_m(&self) -> f64 {
        self.m_plus.iter().chain(&self.m_minus).fold(0.0, |m, v| m.max(*v))
    }

    pub fn f_bounds(&self, z: f64) -> Interval {
        (z - self.eps, z + self.eps)
    }

    pub fn f_minus_bounds(&self, i: usize) -> Interval {
        (0.0, self.m_minus[i])
    }

    pub fn f_plus_bounds(&self, i: usize, z: f64) -> Interval {
        (z - self.eps, z + self.eps + self.m_minus[i])
    }

    /// Bounds on `a^-_{j,r}`; `r` is 0-based, `r == 0` being the sorted coordinate.
    pub fn a_minus_bounds(&self, r: usize) -> Interval {
        if r == 0 {
            (0.0, self.a_prime[0])
        } else {
            (-self.a_prime[r], self.a_prime[r])
        }
    }

    pub fn a_plus_bounds(&self, r: usize) -> Interval {
        if r == 0 {
            (self.a_lo[0], self.a_hi[0] + self.a_prime[0])
        } else {
            (self.a_lo[r] - self.a_prime[r], self.a_hi[r] + self.a_prime[r])
        }
    }

    pub fn b_minus_bounds(&self) -> Interval {
        (-self.b_prime, self.b_prime)
    }

    pub fn b_plus_bounds(&self) -> Interval {
        (self.b_lo - self.b_prime, self.b_hi + self.b_prime)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bounds serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Hex SHA-256 of the dataset bytes followed by `eps`.
pub fn cache_key(ds: &DataSet, eps: f64) -> String {
    let mut h = Sha256::new();
    h.update(ds.canonical_bytes());
    h.update(eps.to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub extrema: Extrema,
    pub seconds: f64,
    pub subsets: u128,
}

/// Timed [`compute_extrema`].
pub fn preprocess(ds: &DataSet, eps: f64) -> Result<Preprocessed> {
    let start = Instant::now();
    let extrema = compute_extrema(ds, eps)?;
    Ok(Preprocessed {
        extrema,
        seconds: start.elapsed().as_secs_f64(),
        subsets: binomial(ds.len(), ds.dim() + 1),
    })
}
