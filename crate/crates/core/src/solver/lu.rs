//! Dense LU factorization with partial pivoting, used for the simplex basis.

/// `P A = L U` for a square matrix stored row-major.
#[derive(Debug, Clone)]
pub(crate) struct DenseLu {
    dim: usize,
    /// Packed factors: strict lower part is `L` (unit diagonal), upper part is `U`.
    factors: Vec<f64>,
    /// `perm[i]` is the row of `A` that ended up in row `i` of `P A`.
    perm: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Singular {
    pub column: usize,
}

impl DenseLu {
    pub(crate) fn factor(dim: usize, mut a: Vec<f64>, pivot_tol: f64) -> Result<Self, Singular> {
        assert_eq!(a.len(), dim * dim);
        let mut perm: Vec<usize> = (0..dim).collect();
        for k in 0..dim {
            let mut best = k;
            let mut best_abs = a[k * dim + k].abs();
            for i in (k + 1)..dim {
                let v = a[i * dim + k].abs();
                if v > best_abs {
                    best = i;
                    best_abs = v;
                }
            }
            if best_abs <= pivot_tol {
                return Err(Singular { column: k });
            }
            if best != k {
                for j in 0..dim {
                    a.swap(k * dim + j, best * dim + j);
                }
                perm.swap(k, best);
            }
            let pivot = a[k * dim + k];
            for i in (k + 1)..dim {
                let factor = a[i * dim + k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[i * dim + k] = factor;
                let (upper, lower) = a.split_at_mut(i * dim);
                let row_k = &upper[k * dim..(k + 1) * dim];
                let row_i = &mut lower[..dim];
                for j in (k + 1)..dim {
                    row_i[j] -= factor * row_k[j];
                }
            }
        }
        Ok(Self {
            dim,
            factors: a,
            perm,
        })
    }

    /// Solves `A x = b`, overwriting `b` with `x`.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = self.dim;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.factors[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.factors[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `A^T y = c`, overwriting `c` with `y`.
    pub(crate) fn solve_transpose(&self, c: &mut [f64]) {
        let n = self.dim;
        let mut z = c.to_vec();
        // U^T z = c
        for i in 0..n {
            let zi = z[i] / self.factors[i * n + i];
            z[i] = zi;
            if zi != 0.0 {
                let row = &self.factors[i * n..(i + 1) * n];
                for j in (i + 1)..n {
                    z[j] -= row[j] * zi;
                }
            }
        }
        // L^T w = z
        for i in (0..n).rev() {
            let wi = z[i];
            if wi != 0.0 {
                let row = &self.factors[i * n..i * n + i];
                for j in 0..i {
                    z[j] -= row[j] * wi;
                }
            }
        }
        // y = P^T w
        for (i, &p) in self.perm.iter().enumerate() {
            c[p] = z[i];
        }
    }
}
