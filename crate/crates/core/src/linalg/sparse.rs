use std::sync::Arc;

use super::ordering::{minimum_degree, Ordering};
use crate::error::{Error, Result};

/// Symbolic analysis of a sparse symmetric matrix: permutation, lower CSC
/// pattern of the permuted matrix and of its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    a_colptr: Vec<usize>,
    a_rowidx: Vec<usize>,
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    /// For each row `j`, the columns `k < j` with `L[j,k] != 0` and the
    /// position of that entry in the factor values.
    row_ptr: Vec<usize>,
    row_entries: Vec<(usize, usize)>,
}

impl SymbolicCholesky {
    /// `entries` lists structurally nonzero `(i, j)` pairs of the original
    /// matrix in either triangle; the diagonal is always included.
    pub fn new(n: usize, entries: &[(usize, usize)], ordering: Ordering) -> Self {
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::MinimumDegree => minimum_degree(n, entries),
        };
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for &(i, j) in entries {
            let (a, b) = (iperm[i], iperm[j]);
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            cols[c].push(r);
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        let (a_colptr, a_rowidx) = compress(&cols);

        // column patterns of L via the elimination tree
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut lcols: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut mark = vec![usize::MAX; n];
        for j in 0..n {
            let mut pat = Vec::new();
            for &i in &cols[j] {
                if mark[i] != j {
                    mark[i] = j;
                    pat.push(i);
                }
            }
            for &c in &children[j] {
                for &i in &lcols[c] {
                    if i > c && mark[i] != j {
                        mark[i] = j;
                        pat.push(i);
                    }
                }
            }
            pat.sort_unstable();
            if let Some(&parent) = pat.get(1) {
                children[parent].push(j);
            }
            lcols.push(pat);
        }
        let (l_colptr, l_rowidx) = compress(&lcols);

        let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for k in 0..n {
            for p in l_colptr[k] + 1..l_colptr[k + 1] {
                rows[l_rowidx[p]].push((k, p));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut row_entries = Vec::new();
        for r in rows {
            row_entries.extend(r);
            row_ptr.push(row_entries.len());
        }
        SymbolicCholesky {
            n,
            perm,
            iperm,
            a_colptr,
            a_rowidx,
            l_colptr,
            l_rowidx,
            row_ptr,
            row_entries,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn nnz_a(&self) -> usize {
        self.a_rowidx.len()
    }

    pub fn nnz_l(&self) -> usize {
        self.l_rowidx.len()
    }

    /// Column pointers and row indices of the factor, permuted coordinates.
    pub fn l_pattern(&self) -> (&[usize], &[usize]) {
        (&self.l_colptr, &self.l_rowidx)
    }

    /// Position in the permuted lower-CSC value array of original entry
    /// `(i, j)`, if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.iperm[i], self.iperm[j]);
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        let col = &self.a_rowidx[self.a_colptr[c]..self.a_colptr[c + 1]];
        col.binary_search(&r).ok().map(|k| self.a_colptr[c] + k)
    }

    /// Original-coordinate `(i, j)` of each stored entry.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz_a());
        for c in 0..self.n {
            for p in self.a_colptr[c]..self.a_colptr[c + 1] {
                out.push((self.perm[self.a_rowidx[p]], self.perm[c]));
            }
        }
        out
    }

    /// Numeric factorization of the matrix with values `a` (in the order of
    /// [`Self::entries`]).
    pub fn factor(self: &Arc<Self>, a: &[f64]) -> Result<SparseCholesky> {
        if a.len() != self.nnz_a() {
            return Err(Error::Dimension {
                context: "sparse Cholesky",
                expected: self.nnz_a(),
                got: a.len(),
            });
        }
        let n = self.n;
        let (cp, ri) = (&self.l_colptr, &self.l_rowidx);
        let mut l = vec![0.0; self.nnz_l()];
        let mut x = vec![0.0; n];
        for j in 0..n {
            for p in self.a_colptr[j]..self.a_colptr[j + 1] {
                x[self.a_rowidx[p]] = a[p];
            }
            for &(k, pos) in &self.row_entries[self.row_ptr[j]..self.row_ptr[j + 1]] {
                let ljk = l[pos];
                for p in pos..cp[k + 1] {
                    x[ri[p]] -= l[p] * ljk;
                }
            }
            let d = x[j];
            x[j] = 0.0;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: self.perm[j],
                    value: d,
                });
            }
            let ljj = d.sqrt();
            l[cp[j]] = ljj;
            for p in cp[j] + 1..cp[j + 1] {
                l[p] = x[ri[p]] / ljj;
                x[ri[p]] = 0.0;
            }
        }
        Ok(SparseCholesky {
            sym: Arc::clone(self),
            l,
        })
    }
}

fn compress(cols: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = Vec::with_capacity(cols.len() + 1);
    ptr.push(0);
    let mut idx = Vec::new();
    for c in cols {
        idx.extend_from_slice(c);
        ptr.push(idx.len());
    }
    (ptr, idx)
}

/// Numeric sparse Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    sym: Arc<SymbolicCholesky>,
    l: Vec<f64>,
}

impl SparseCholesky {
    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.sym
    }

    pub fn values(&self) -> &[f64] {
        &self.l
    }

    pub fn logdet(&self) -> f64 {
        let cp = &self.sym.l_colptr;
        2.0 * (0..self.sym.n).map(|j| self.l[cp[j]].ln()).sum::<f64>()
    }

    /// `L y = b` in permuted coordinates, in place.
    pub fn solve_lower_permuted(&self, y: &mut [f64]) {
        let (cp, ri) = (&self.sym.l_colptr, &self.sym.l_rowidx);
        for j in 0..self.sym.n {
            y[j] /= self.l[cp[j]];
            let yj = y[j];
            for p in cp[j] + 1..cp[j + 1] {
                y[ri[p]] -= self.l[p] * yj;
            }
        }
    }

    /// `Lᵀ x = y` in permuted coordinates, in place.
    pub fn solve_upper_permuted(&self, y: &mut [f64]) {
        let (cp, ri) = (&self.sym.l_colptr, &self.sym.l_rowidx);
        for j in (0..self.sym.n).rev() {
            let mut s = y[j];
            for p in cp[j] + 1..cp[j + 1] {
                s -= self.l[p] * y[ri[p]];
            }
            y[j] = s / self.l[cp[j]];
        }
    }

    pub fn permute(&self, b: &[f64]) -> Vec<f64> {
        self.sym.perm.iter().map(|&old| b[old]).collect()
    }

    pub fn unpermute(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sym.n];
        for (new, &old) in self.sym.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.permute(b);
        self.solve_lower_permuted(&mut y);
        self.solve_upper_permuted(&mut y);
        self.unpermute(&y)
    }

    /// `Pᵀ L z`: a draw with covariance `A` when `z` is standard normal.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let (cp, ri) = (&self.sym.l_colptr, &self.sym.l_rowidx);
        let mut y = vec![0.0; self.sym.n];
        for j in 0..self.sym.n {
            for p in cp[j]..cp[j + 1] {
                y[ri[p]] += self.l[p] * z[j];
            }
        }
        self.unpermute(&y)
    }

    /// Factor as `(row, col, value)` triplets in permuted coordinates.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let (cp, ri) = (&self.sym.l_colptr, &self.sym.l_rowidx);
        let mut out = Vec::with_capacity(self.l.len());
        for j in 0..self.sym.n {
            for p in cp[j]..cp[j + 1] {
                out.push((ri[p], j, self.l[p]));
            }
        }
        out
    }

    /// Position of the diagonal entry of permuted column `j` in
    /// [`Self::values`].
    pub fn diag_position(&self, j: usize) -> usize {
        self.sym.l_colptr[j]
    }

    /// Reverse rule of the numeric factorization: maps the adjoint of the
    /// factor values to the adjoint of the input values.
    pub fn adjoint(&self, lbar: &[f64]) -> Vec<f64> {
        let s = &*self.sym;
        let (cp, ri) = (&s.l_colptr, &s.l_rowidx);
        let l = &self.l;
        let mut lb = lbar.to_vec();
        let mut abar = vec![0.0; s.nnz_a()];
        let mut xb = vec![0.0; s.n];
        for j in (0..s.n).rev() {
            let ljj = l[cp[j]];
            let mut d = lb[cp[j]];
            for p in cp[j] + 1..cp[j + 1] {
                xb[ri[p]] = lb[p] / ljj;
                d -= lb[p] * l[p] / ljj;
            }
            xb[j] = d / (2.0 * ljj);
            for p in s.a_colptr[j]..s.a_colptr[j + 1] {
                abar[p] = xb[s.a_rowidx[p]];
            }
            for &(k, pos) in &s.row_entries[s.row_ptr[j]..s.row_ptr[j + 1]] {
                let ljk = l[pos];
                let mut acc = 0.0;
                for p in pos..cp[k + 1] {
                    let xi = xb[ri[p]];
                    lb[p] -= xi * ljk;
                    acc += xi * l[p];
                }
                lb[pos] -= acc;
            }
            for p in cp[j]..cp[j + 1] {
                xb[ri[p]] = 0.0;
            }
        }
        abar
    }
}

#[cfg(test)]
mod tests {
    use super::super::dense::DenseCholesky;
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Arrowhead: tridiagonal block plus a dense last row.
    fn arrow(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 4.0 + rng.random::<f64>();
            if i + 1 < n - 1 {
                let v = rng.random_range(-1.0..1.0);
                a[(i + 1, i)] = v;
                a[(i, i + 1)] = v;
            }
            if i < n - 1 {
                let v = rng.random_range(-0.5..0.5);
                a[(n - 1, i)] = v;
                a[(i, n - 1)] = v;
            }
        }
        a[(n - 1, n - 1)] += n as f64;
        a
    }

    fn pattern(a: &DMatrix<f64>) -> Vec<(usize, usize)> {
        let n = a.nrows();
        let mut e = Vec::new();
        for j in 0..n {
            for i in j..n {
                if a[(i, j)] != 0.0 {
                    e.push((i, j));
                }
            }
        }
        e
    }

    fn values(sym: &SymbolicCholesky, a: &DMatrix<f64>) -> Vec<f64> {
        sym.entries().iter().map(|&(i, j)| a[(i, j)]).collect()
    }

    #[test]
    fn sparse_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = arrow(9, &mut rng);
        let dense = DenseCholesky::from_matrix(&a).unwrap();
        for ordering in [Ordering::Natural, Ordering::MinimumDegree] {
            let sym = Arc::new(SymbolicCholesky::new(9, &pattern(&a), ordering));
            let sp = sym.factor(&values(&sym, &a)).unwrap();
            assert!((sp.logdet() - dense.logdet()).abs() < 1e-10);
            let b: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
            let xs = sp.solve(&b);
            let xd = dense.solve(&b);
            for (u, v) in xs.iter().zip(&xd) {
                assert!((u - v).abs() < 1e-10);
            }
            let z: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
            // Pᵀ L (Pᵀ L)ᵀ = A, checked through A⁻¹ (Pᵀ L z) = Pᵀ L⁻ᵀ z
            let y = sp.mul_lower(&z);
            let back = sp.solve(&y);
            let mut w = z.clone();
            sp.solve_upper_permuted(&mut w);
            let w = sp.unpermute(&w);
            for (u, v) in back.iter().zip(&w) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn arrowhead_has_no_fill_in_natural_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = arrow(12, &mut rng);
        let sym = SymbolicCholesky::new(12, &pattern(&a), Ordering::Natural);
        assert_eq!(sym.nnz_l(), sym.nnz_a());
    }

    #[test]
    fn sparse_adjoint_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 8;
        let a = arrow(n, &mut rng);
        let dense = DenseCholesky::from_matrix(&a).unwrap();
        for ordering in [Ordering::Natural, Ordering::MinimumDegree] {
            let sym = Arc::new(SymbolicCholesky::new(n, &pattern(&a), ordering));
            let sp = sym.factor(&values(&sym, &a)).unwrap();
            // seed: logdet + quadratic form, both invariant to ordering
            let p: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
            let mut w = sp.permute(&p);
            sp.solve_lower_permuted(&mut w);
            let mut u = w.clone();
            sp.solve_upper_permuted(&mut u);
            let mut lbar = vec![0.0; sym.nnz_l()];
            for (k, (r, c, v)) in sp.triplets().into_iter().enumerate() {
                lbar[k] = -u[r] * w[c] + if r == c { 1.0 / v } else { 0.0 };
            }
            let abar = sp.adjoint(&lbar);

            let mut wd = p.clone();
            dense.solve_lower(&mut wd);
            let mut ud = wd.clone();
            dense.solve_upper(&mut ud);
            let lbar_d: Vec<f64> = (0..n * n)
                .map(|k| {
                    let (i, j) = (k % n, k / n);
                    if i < j {
                        0.0
                    } else {
                        -ud[i] * wd[j] + if i == j { 1.0 / dense.get(i, i) } else { 0.0 }
                    }
                })
                .collect();
            let abar_d = dense.adjoint(&lbar_d);
            for (k, (i, j)) in sym.entries().into_iter().enumerate() {
                let (r, c) = if i >= j { (i, j) } else { (j, i) };
                assert!((abar[k] - abar_d[c * n + r]).abs() < 1e-10, "{ordering:?} ({i},{j})");
            }
        }
    }
}
