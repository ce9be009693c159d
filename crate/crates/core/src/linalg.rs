//! Dense linear algebra for the small systems that appear everywhere here:
//! `(d+1) x (d+1)` interpolation matrices and active-set projections in a
//! few dozen dimensions. Row-major `Vec<f64>` storage throughout.

/// LU factorisation with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factors the `n x n` row-major matrix `a`. Returns `None` when a pivot
    /// is exactly zero; near-singularity is left to the caller via [`Lu::det`].
    pub fn factor(a: &[f64], n: usize) -> Option<Lu> {
        assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[col * n + col].abs();
            for row in col + 1..n {
                let v = lu[row * n + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best == 0.0 {
                return None;
            }
            if piv != col {
                for k in 0..n {
                    lu.swap(col * n + k, piv * n + k);
                }
                perm.swap(col, piv);
                sign = -sign;
            }
            let p = lu[col * n + col];
            for row in col + 1..n {
                let f = lu[row * n + col] / p;
                lu[row * n + col] = f;
                if f != 0.0 {
                    for k in col + 1..n {
                        lu[row * n + k] -= f * lu[col * n + k];
                    }
                }
            }
        }
        Some(Lu { n, lu, perm, sign })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn det(&self) -> f64 {
        (0..self.n).fold(self.sign, |acc, i| acc * self.lu[i * self.n + i])
    }

    /// Solves `A x = rhs` into `out`.
    pub fn solve_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = rhs[self.perm[i]];
            for k in 0..i {
                s -= self.lu[i * n + k] * out[k];
            }
            out[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = out[i];
            for k in i + 1..n {
                s -= self.lu[i * n + k] * out[k];
            }
            out[i] = s / self.lu[i * n + i];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.solve_into(rhs, &mut out);
        out
    }

    /// Columns of `A^{-1}`, stored row-major as the inverse matrix.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.solve_into(&e, &mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

/// Maximum absolute row sum of a row-major `rows x cols` matrix.
pub fn inf_norm(a: &[f64], cols: usize) -> f64 {
    a.chunks(cols)
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incrementally built orthonormal basis (modified Gram-Schmidt with one
/// re-orthogonalisation pass). Used to project search directions onto the
/// null space of an active constraint set.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    dim: usize,
    vecs: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn new(dim: usize) -> Self {
        Self { dim, vecs: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.vecs.len()
    }

    /// Component of `v` orthogonal to the span of the basis.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.vecs {
                let c = dot(&r, q);
                r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        r
    }

    /// Adds `v` if its residual is larger than `rel_tol * |v|`; returns
    /// whether the rank grew.
    pub fn push(&mut self, v: &[f64], rel_tol: f64) -> bool {
        debug_assert_eq!(v.len(), self.dim);
        let norm = dot(v, v).sqrt();
        if norm == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = dot(&r, &r).sqrt();
        if rn <= rel_tol * norm {
            return false;
        }
        self.vecs.push(r.into_iter().map(|x| x / rn).collect());
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_and_reports_determinant() {
        // [[0,1],[2,3]] needs a row swap
        let a = [0.0, 1.0, 2.0, 3.0];
        let lu = Lu::factor(&a, 2).unwrap();
        assert!((lu.det() + 2.0).abs() < 1e-15);
        let x = lu.solve(&[1.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lu_inverse_times_matrix_is_identity() {
        let a = [4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0];
        let inv = Lu::factor(&a, 3).unwrap().inverse();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected_or_has_zero_det() {
        let a = [1.0, 2.0, 2.0, 4.0];
        match Lu::factor(&a, 2) {
            None => {}
            Some(lu) => assert!(lu.det().abs() < 1e-14),
        }
    }

    #[test]
    fn ortho_basis_rank_and_residual() {
        let mut b = OrthoBasis::new(3);
        assert!(b.push(&[1.0, 0.0, 0.0], 1e-12));
        assert!(b.push(&[1.0, 1.0, 0.0], 1e-12));
        assert!(!b.push(&[3.0, -2.0, 0.0], 1e-12));
        let r = b.residual(&[1.0, 2.0, 3.0]);
        assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15 && (r[2] - 3.0).abs() < 1e-15);
        assert_eq!(b.rank(), 2);
    }
}
