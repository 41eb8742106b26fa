use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lower Cholesky factor of a dense SPD matrix, stored column-major.
#[derive(Clone, Debug)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    /// Factors the matrix whose lower triangle is read from the
    /// column-major `a` (`n × n`).
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension {
                context: "dense Cholesky",
                expected: n * n,
                got: a.len(),
            });
        }
        let mut l = vec![0.0; n * n];
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j..].copy_from_slice(&a[j * n + j..(j + 1) * n]);
            for k in 0..j {
                let ljk = l[k * n + j];
                if ljk == 0.0 {
                    continue;
                }
                let col = &l[k * n..(k + 1) * n];
                for i in j..n {
                    x[i] -= col[i] * ljk;
                }
            }
            let d = x[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l[j * n + j] = ljj;
            for i in j + 1..n {
                l[j * n + i] = x[i] / ljj;
            }
        }
        Ok(DenseCholesky { n, l })
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor(a.as_slice(), a.nrows())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Column-major lower factor (upper triangle zero).
    pub fn values(&self) -> &[f64] {
        &self.l
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            0.0
        } else {
            self.l[j * self.n + i]
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n, &self.l)
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|j| self.l[j * self.n + j].ln()).sum::<f64>()
    }

    /// In place `L y = b`.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let col = &self.l[j * n..(j + 1) * n];
            b[j] /= col[j];
            let bj = b[j];
            for i in j + 1..n {
                b[i] -= col[i] * bj;
            }
        }
    }

    /// In place `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &mut [f64]) {
        let n = self.n;
        for j in (0..n).rev() {
            let col = &self.l[j * n..(j + 1) * n];
            let mut s = y[j];
            for i in j + 1..n {
                s -= col[i] * y[i];
            }
            y[j] = s / col[j];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower(&mut x);
        self.solve_upper(&mut x);
        x
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for j in 0..n {
            let col = &self.l[j * n..(j + 1) * n];
            for i in j..n {
                out[i] += col[i] * z[j];
            }
        }
        out
    }

    /// Reverse rule of [`Self::factor`]. `lbar` is the column-major adjoint
    /// of the factor (upper triangle ignored); the result is the adjoint of
    /// the lower-triangle entries that `factor` read, column-major.
    pub fn adjoint(&self, lbar: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        let mut lb = lbar.to_vec();
        let mut abar = vec![0.0; n * n];
        let mut xb = vec![0.0; n];
        for j in (0..n).rev() {
            let ljj = l[j * n + j];
            let mut d = lb[j * n + j];
            for i in j + 1..n {
                xb[i] = lb[j * n + i] / ljj;
                d -= lb[j * n + i] * l[j * n + i] / ljj;
            }
            xb[j] = d / (2.0 * ljj);
            abar[j * n + j..(j + 1) * n].copy_from_slice(&xb[j..]);
            for k in 0..j {
                let ljk = l[k * n + j];
                let mut acc = 0.0;
                for i in j..n {
                    lb[k * n + i] -= xb[i] * ljk;
                    acc += xb[i] * l[k * n + i];
                }
                lb[k * n + j] -= acc;
            }
        }
        abar
    }
}

/// Adjoint of a symmetric input matrix given the factor `l` and the adjoint
/// `lbar` of the factor. Symmetrized: off-diagonal entries carry half of the
/// lower-triangle adjoint on each side.
pub fn cholesky_adjoint(l: &DMatrix<f64>, lbar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let chol = DenseCholesky {
        n,
        l: l.lower_triangle().as_slice().to_vec(),
    };
    let lower = chol.adjoint(lbar.lower_triangle().as_slice());
    DMatrix::from_fn(n, n, |i, j| {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let v = lower[c * n + r];
        if i == j {
            v
        } else {
            0.5 * v
        }
    })
}
