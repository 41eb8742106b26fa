//! Log-density gradient covariance (LGC) matrices and the closed-form
//! catalog for the base distributions.
//!
//! Ordering inside every matrix is the random variable first, then the
//! parameters in the order documented on each constructor.

mod catalog;

pub use catalog::{
    fisher_zip, lgc_expgamma, lgc_inverselogitbeta, lgc_mvnormal_precision, lgc_normal1d,
    lgc_zip, transform_lgc,
};

use nalgebra::DMatrix;
use smallvec::{smallvec, SmallVec};

use crate::ad::Real;

/// Symmetric `(d + p) × (d + p)` matrix stored as its packed lower
/// triangle. Leading `d × d` block is V, trailing `p × p` block is the
/// Fisher information F, off-diagonal block W.
#[derive(Clone, Debug)]
pub struct LgcMatrix<T> {
    d: usize,
    p: usize,
    data: SmallVec<[T; 10]>,
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl<T: Real> LgcMatrix<T> {
    pub fn zeros(d: usize, p: usize) -> Self {
        let n = d + p;
        LgcMatrix {
            d,
            p,
            data: smallvec![T::zero(); n * (n + 1) / 2],
        }
    }

    pub fn dim_x(&self) -> usize {
        self.d
    }

    pub fn dim_theta(&self) -> usize {
        self.p
    }

    pub fn size(&self) -> usize {
        self.d + self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[packed(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[packed(i, j)] = v;
    }

    /// True when entry `(i, j)` is a structural zero (constant zero).
    #[inline]
    pub fn is_zero(&self, i: usize, j: usize) -> bool {
        let v = self.get(i, j);
        v.is_constant() && v.value() == 0.0
    }

    /// Writes the block starting at `(r0, c0)` from a row-major closure.
    pub fn set_block(&mut self, r0: usize, c0: usize, rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) {
        for i in 0..rows {
            for j in 0..cols {
                if r0 + i >= c0 + j {
                    self.set(r0 + i, c0 + j, f(i, j));
                }
            }
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j).value())
    }

    /// Smallest eigenvalue is at least `-1e-10 · λ_max`.
    pub fn is_psd(&self) -> bool {
        is_psd(&self.to_dmatrix())
    }
}

/// Eigenvalue floor check used for all catalog outputs.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    min >= -1e-10 * max.abs().max(f64::MIN_POSITIVE)
}
