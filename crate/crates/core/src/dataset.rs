//! Point sets `S = (x_i, z_i)`: loading, synthetic generation, rescaling
//! and the general-position check.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, Combinations};
use crate::linalg::{inf_norm, Lu};
use crate::{Error, Result};

/// Default relative determinant tolerance for [`check_general_position`].
pub const GENERAL_POSITION_TOL: f64 = 1e-9;
/// Subset count above which [`check_general_position`] samples instead of
/// scanning every subset.
pub const GENERAL_POSITION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    dim: usize,
    points: Vec<Point>,
    pub name: String,
}

#[derive(Serialize, Deserialize)]
struct DataSetJson {
    dim: usize,
    name: String,
    points: Vec<Vec<f64>>,
}

impl Serialize for DataSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DataSetJson {
            dim: self.dim,
            name: self.name.clone(),
            points: self
                .points
                .iter()
                .map(|p| p.x.iter().copied().chain(std::iter::once(p.z)).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DataSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DataSetJson::deserialize(d)?;
        let points = raw
            .points
            .into_iter()
            .map(|mut row| {
                if row.len() != raw.dim + 1 {
                    return Err(serde::de::Error::custom(format!(
                        "point has {} entries, expected {}",
                        row.len(),
                        raw.dim + 1
                    )));
                }
                let z = row.pop().unwrap();
                Ok(Point { x: row, z })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        DataSet::new(raw.dim, points, raw.name).map_err(serde::de::Error::custom)
    }
}

impl DataSet {
    /// Builds a validated data set: every `x` has length `dim`, all values are
    /// finite and no two points share the same `x`.
    pub fn new(dim: usize, points: Vec<Point>, name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if p.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.x.len(),
                });
            }
            if !p.z.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("point {i} has a non-finite coordinate")));
            }
            // -0.0 and 0.0 are the same location
            let key: Vec<u64> = p.x.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::Validation(format!(
                    "duplicate point x = {:?} (point {i})",
                    p.x
                )));
            }
        }
        Ok(Self {
            dim,
            points,
            name: name.into(),
        })
    }

    /// Convenience constructor from `(x, z)` rows.
    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)], name: &str) -> Result<Self> {
        let points = rows
            .iter()
            .map(|(x, z)| Point { x: x.clone(), z: *z })
            .collect();
        Self::new(dim, points, name)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.points[i].x
    }

    pub fn z(&self, i: usize) -> f64 {
        self.points[i].z
    }

    /// Row-major lifted matrix `[x_i, 1]` of the points in `subset`.
    pub fn lifted_matrix(&self, subset: &[usize]) -> Vec<f64> {
        let mut m = Vec::with_capacity(subset.len() * (self.dim + 1));
        for &i in subset {
            m.extend_from_slice(&self.points[i].x);
            m.push(1.0);
        }
        m
    }

    /// CSV text with header `x1,...,xd,z`, values printed round-trip exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 1..=self.dim {
            let _ = write!(out, "x{r},");
        }
        out.push_str("z\n");
        for p in &self.points {
            for v in &p.x {
                let _ = write!(out, "{v:?},");
            }
            let _ = writeln!(out, "{:?}", p.z);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Stable byte encoding used for cache keys.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * self.len() * (self.dim + 1) + 8);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for p in &self.points {
            for v in p.x.iter().chain(std::iter::once(&p.z)) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Parses CSV text with header `x1,...,xd,z`. Line numbers in errors are 1-based.
pub fn parse_csv(text: &str, name: &str) -> Result<DataSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim = cols.len().saturating_sub(1);
    let header_ok = dim >= 1
        && cols.last() == Some(&"z")
        && cols[..dim]
            .iter()
            .enumerate()
            .all(|(r, c)| *c == format!("x{}", r + 1));
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header x1,...,xd,z, found `{header}`"),
        });
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != dim + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} columns, found {}", dim + 1, cells.len()),
            });
        }
        let mut vals = Vec::with_capacity(dim + 1);
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("column {} is not a number: `{cell}`", c + 1),
            })?;
            vals.push(v);
        }
        let z = vals.pop().unwrap();
        points.push(Point { x: vals, z });
    }
    DataSet::new(dim, points, name)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DataSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, &name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFunction {
    /// `x2 * sin(x1)`
    X2SinX1,
    /// `x1^2 - x2^2`
    SquareDiff,
    /// `x1^2 + x2^2 + x3^2`
    SumSquares3,
    /// `x1 * x2 * x3`
    Product3,
}

impl SyntheticFunction {
    pub const ALL: [SyntheticFunction; 4] = [
        SyntheticFunction::X2SinX1,
        SyntheticFunction::SquareDiff,
        SyntheticFunction::SumSquares3,
        SyntheticFunction::Product3,
    ];

    pub fn arity(self) -> usize {
        match self {
            SyntheticFunction::X2SinX1 | SyntheticFunction::SquareDiff => 2,
            SyntheticFunction::SumSquares3 | SyntheticFunction::Product3 => 3,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            SyntheticFunction::X2SinX1 => x[1] * x[0].sin(),
            SyntheticFunction::SquareDiff => x[0] * x[0] - x[1] * x[1],
            SyntheticFunction::SumSquares3 => x[0] * x[0] + x[1] * x[1] + x[2] * x[2],
            SyntheticFunction::Product3 => x[0] * x[1] * x[2],
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            SyntheticFunction::X2SinX1 => "x2_sin_x1",
            SyntheticFunction::SquareDiff => "square_diff",
            SyntheticFunction::SumSquares3 => "sum_squares3",
            SyntheticFunction::Product3 => "product3",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.id() == id)
    }

    /// Domain and point count used by the reference experiments.
    pub fn reference_spec(self, seed: u64) -> SyntheticSpec {
        let (domain, count) = match self {
            SyntheticFunction::X2SinX1 => (vec![(0.0, PI), (0.0, 1.0)], 121),
            SyntheticFunction::SquareDiff => (vec![(-1.0, 1.0); 2], 64),
            SyntheticFunction::SumSquares3 | SyntheticFunction::Product3 => (vec![(0.0, 1.0); 3], 64),
        };
        SyntheticSpec {
            function: self,
            domain,
            count,
            seed,
            sampling: Sampling::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Grid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub function: SyntheticFunction,
    pub domain: Vec<(f64, f64)>,
    pub count: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

/// Samples `spec.count` points in the domain box and evaluates the named
/// function exactly. Deterministic for a fixed seed.
pub fn generate(spec: &SyntheticSpec) -> Result<DataSet> {
    let d = spec.function.arity();
    if spec.domain.len() != d {
        return Err(Error::Validation(format!(
            "{} takes {d} inputs but the domain box has {} dimensions",
            spec.function.id(),
            spec.domain.len()
        )));
    }
    if spec.domain.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::Validation("domain bounds must satisfy lo < hi".into()));
    }
    if spec.count == 0 {
        return Err(Error::Validation("point count must be positive".into()));
    }
    let xs: Vec<Vec<f64>> = match spec.sampling {
        Sampling::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..spec.count)
                .map(|_| {
                    spec.domain
                        .iter()
                        .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                        .collect()
                })
                .collect()
        }
        Sampling::Grid => {
            let m = (spec.count as f64).powf(1.0 / d as f64).round() as usize;
            if m < 2 || m.pow(d as u32) != spec.count {
                return Err(Error::Validation(format!(
                    "grid sampling needs a perfect {d}-th power point count, got {}",
                    spec.count
                )));
            }
            (0..spec.count)
                .map(|mut idx| {
                    spec.domain
                        .iter()
                        .map(|&(lo, hi)| {
                            let k = idx % m;
                            idx /= m;
                            lo + (hi - lo) * k as f64 / (m - 1) as f64
                        })
                        .collect()
                })
                .collect()
        }
    };
    let points = xs
        .into_iter()
        .map(|x| {
            let z = spec.function.eval(&x);
            Point { x, z }
        })
        .collect();
    DataSet::new(d, points, spec.function.id())
}

/// Affine per-coordinate map `v' = (v - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub x_offset: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub z_offset: f64,
    pub z_scale: f64,
    /// One flag per coordinate (`x_1..x_d`, then `z`): constant coordinate left unscaled.
    pub degenerate: Vec<bool>,
}

impl ScalingInfo {
    pub fn identity(dim: usize) -> Self {
        Self {
            x_offset: vec![0.0; dim],
            x_scale: vec![1.0; dim],
            z_offset: 0.0,
            z_scale: 1.0,
            degenerate: vec![false; dim + 1],
        }
    }

    pub fn has_warning(&self) -> bool {
        self.degenerate.iter().any(|&b| b)
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_offset.iter().zip(&self.x_scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_offset.iter().zip(&self.x_scale))
            .map(|(v, (o, s))| v * s + o)
            .collect()
    }

    pub fn scale_z(&self, z: f64) -> f64 {
        (z - self.z_offset) / self.z_scale
    }

    pub fn unscale_z(&self, z: f64) -> f64 {
        z * self.z_scale + self.z_offset
    }

    pub fn unscale(&self, ds: &DataSet) -> Result<DataSet> {
        let points = ds
            .points
            .iter()
            .map(|p| Point {
                x: self.unscale_x(&p.x),
                z: self.unscale_z(p.z),
            })
            .collect();
        DataSet::new(ds.dim, points, ds.name.clone())
    }
}

fn min_max(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Maps every coordinate and `z` affinely onto `[0, 1]`. A constant
/// coordinate is left unscaled and flagged in [`ScalingInfo::degenerate`].
pub fn rescale(ds: &DataSet) -> (DataSet, ScalingInfo) {
    let d = ds.dim;
    let mut info = ScalingInfo::identity(d);
    for r in 0..d {
        let (lo, hi) = min_max(ds.points.iter().map(|p| p.x[r]));
        if hi > lo {
            info.x_offset[r] = lo;
            info.x_scale[r] = hi - lo;
        } else {
            info.degenerate[r] = true;
        }
    }
    let (lo, hi) = min_max(ds.points.iter().map(|p| p.z));
    if hi > lo {
        info.z_offset = lo;
        info.z_scale = hi - lo;
    } else {
        info.degenerate[d] = true;
    }
    let points = ds
        .points
        .iter()
        .map(|p| Point {
            x: info.scale_x(&p.x),
            z: info.scale_z(p.z),
        })
        .collect();
    // min-max scaling keeps distinct x distinct
    let scaled = DataSet {
        dim: d,
        points,
        name: ds.name.clone(),
    };
    (scaled, info)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralPositionReport {
    pub pass: bool,
    /// First offending subset (lexicographic in exhaustive mode).
    pub offending: Option<Vec<usize>>,
    pub exhaustive: bool,
    pub checked: u128,
    pub total: u128,
}

impl GeneralPositionReport {
    pub fn coverage(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.checked as f64 / self.total as f64
        }
    }
}

fn subset_is_degenerate(ds: &DataSet, subset: &[usize], tol: f64) -> bool {
    let n = ds.dim + 1;
    let m = ds.lifted_matrix(subset);
    let scale = inf_norm(&m, n).powi(ds.dim as i32);
    match Lu::factor(&m, n) {
        None => true,
        Some(lu) => lu.det().abs() <= tol * scale,
    }
}

/// Checks that every `(d+1)`-subset of the projected points is affinely
/// independent, i.e. `|det M_s| > tol * ||M_s||_inf^d` for the lifted matrix
/// `M_s = [x_i 1]`. Exhaustive up to `cap` subsets, otherwise `cap` subsets
/// are sampled with the given seed.
pub fn check_general_position(ds: &DataSet, tol: f64, cap: u128, seed: u64) -> GeneralPositionReport {
    let k = ds.dim + 1;
    let n = ds.len();
    let total = binomial(n, k);
    if total <= cap {
        let offending = first_degenerate_subset(ds, tol);
        GeneralPositionReport {
            pass: offending.is_none(),
            offending,
            exhaustive: true,
            checked: total,
            total,
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offending = None;
        let mut checked = 0u128;
        for _ in 0..cap {
            let mut s: Vec<usize> = sample(&mut rng, n, k).into_vec();
            s.sort_unstable();
            checked += 1;
            if subset_is_degenerate(ds, &s, tol) {
                offending = Some(s);
                break;
            }
        }
        GeneralPositionReport {
            pass: offending.is_none(),
            offending,
            exhaustive: false,
            checked,
            total,
        }
    }
}

#[cfg(feature = "parallel")]
fn first_degenerate_subset(ds: &DataSet, tol: f64) -> Option<Vec<usize>> {
    use rayon::prelude::*;
    let k = ds.dim + 1;
    let n = ds.len();
    if n < k {
        return None;
    }
    // chunks are keyed by first element, so the minimum chunk hit is the
    // lexicographically first offending subset
    (0..=n - k)
        .into_par_iter()
        .filter_map(|first| {
            Combinations::with_first(n, k, first).find(|s| subset_is_degenerate(ds, s, tol))
        })
        .min()
}

#[cfg(not(feature = "parallel"))]
fn first_degenerate_subset(ds: &DataSet, tol: f64) -> Option<Vec<usize>> {
    Combinations::new(ds.len(), ds.dim + 1).find(|s| subset_is_degenerate(ds, s, tol))
}
