//! Simplex predicates used to generate the convex-domain cuts.

use crate::linalg::{Lu, OrthoBasis};
use crate::{Error, Result};

const DEGENERATE_TOL: f64 = 1e-12;

fn check_dims(x: &[f64], verts: &[&[f64]], count: usize) -> Result<usize> {
    let d = x.len();
    if verts.len() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            got: verts.len(),
        });
    }
    if let Some(v) = verts.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    Ok(d)
}

fn affine_rank(verts: &[&[f64]]) -> usize {
    let d = verts[0].len();
    let scale = verts
        .iter()
        .flat_map(|v| v.iter())
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let mut basis = OrthoBasis::new(d);
    for v in &verts[1..] {
        let diff: Vec<f64> = v.iter().zip(verts[0]).map(|(p, q)| (p - q) / scale).collect();
        basis.push(&diff, DEGENERATE_TOL.sqrt());
    }
    basis.rank()
}

/// Barycentric coordinates of `x` with respect to the `d+1` vertices.
pub fn barycentric(x: &[f64], verts: &[&[f64]]) -> Result<Vec<f64>> {
    let d = check_dims(x, verts, x.len() + 1)?;
    let n = d + 1;
    if affine_rank(verts) < d {
        return Err(Error::DegenerateSimplex(format!("{n} vertices span less than {d} dimensions")));
    }
    // columns are (v_k, 1)
    let mut m = vec![0.0; n * n];
    for (k, v) in verts.iter().enumerate() {
        for r in 0..d {
            m[r * n + k] = v[r];
        }
        m[d * n + k] = 1.0;
    }
    let lu = Lu::factor(&m, n).ok_or_else(|| Error::DegenerateSimplex("singular vertex matrix".into()))?;
    let mut rhs = x.to_vec();
    rhs.push(1.0);
    Ok(lu.solve(&rhs))
}

/// True iff every barycentric coordinate of `x` is at least `-tol`.
/// A negative `tol` demands strict interiority.
pub fn point_in_simplex(x: &[f64], verts: &[&[f64]], tol: f64) -> Result<bool> {
    Ok(barycentric(x, verts)?.iter().all(|&l| l >= -tol))
}

/// True iff the segment `[q1, q2]` meets the `(d-1)`-simplex spanned by the
/// `d` vertices at a point interior to both. Coplanar contact and crossings
/// through the facet boundary or a segment endpoint count as non-crossing.
pub fn segment_crosses_facet(q1: &[f64], q2: &[f64], verts: &[&[f64]], tol: f64) -> Result<bool> {
    let d = check_dims(q1, verts, q1.len())?;
    if q2.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q2.len(),
        });
    }
    if d > 1 && affine_rank(verts) < d - 1 {
        return Err(Error::DegenerateSimplex(format!("{d} facet vertices span less than {} dimensions", d - 1)));
    }
    // unknowns (t, mu_1..mu_d): q1 + t (q2 - q1) = sum mu_k v_k, sum mu_k = 1
    let n = d + 1;
    let mut m = vec![0.0; n * n];
    for r in 0..d {
        m[r * n] = q1[r] - q2[r];
        for (k, v) in verts.iter().enumerate() {
            m[r * n + 1 + k] = v[r];
        }
    }
    for k in 0..d {
        m[d * n + 1 + k] = 1.0;
    }
    let scale = crate::linalg::inf_norm(&m, n).max(1.0);
    let Some(lu) = Lu::factor(&m, n) else {
        return Ok(false);
    };
    if lu.det().abs() <= DEGENERATE_TOL * scale.powi(n as i32) {
        return Ok(false);
    }
    let mut rhs = q1.to_vec();
    rhs.push(1.0);
    let sol = lu.solve(&rhs);
    let t = sol[0];
    Ok(t > tol && t < 1.0 - tol && sol[1..].iter().all(|&mu| mu > tol))
}
