use std::ops::{Add, Div, Mul, Neg, Sub};

use smallvec::SmallVec;

use super::real::Real;

type Pairs<T> = SmallVec<[(u32, T); 4]>;

/// Gradient storage of a [`SparseDual`]: sorted `(index, partial)` pairs,
/// or a dense vector once more than half the coordinates are touched.
#[derive(Clone, Debug)]
pub enum Grad<T> {
    Sparse(Pairs<T>),
    Dense(Vec<T>),
}

impl<T: Real> Grad<T> {
    fn empty() -> Self {
        Grad::Sparse(SmallVec::new())
    }

    pub fn nnz(&self) -> usize {
        match self {
            Grad::Sparse(p) => p.len(),
            Grad::Dense(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Grad::Sparse(p) => p.is_empty(),
            Grad::Dense(_) => false,
        }
    }

    /// Visits every stored entry in increasing index order.
    pub fn for_each(&self, mut f: impl FnMut(usize, T)) {
        match self {
            Grad::Sparse(p) => p.iter().for_each(|&(i, v)| f(i as usize, v)),
            Grad::Dense(d) => d.iter().enumerate().for_each(|(i, &v)| f(i, v)),
        }
    }

    /// Like [`Self::for_each`] but skips constant zeros.
    pub fn for_each_structural(&self, mut f: impl FnMut(usize, T)) {
        self.for_each(|i, v| {
            if !(v.is_constant() && v.value() == 0.0) {
                f(i, v)
            }
        })
    }

    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nnz());
        self.for_each(|i, _| out.push(i));
        out
    }

    pub fn entries(&self) -> Vec<(usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        self.for_each(|i, v| out.push((i, v)));
        out
    }

    /// Entries as plain values; structural zeros of a dense gradient are
    /// dropped.
    pub fn to_pairs(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        match self {
            Grad::Sparse(p) => p.iter().for_each(|&(i, v)| out.push((i as usize, v.value()))),
            Grad::Dense(d) => d.iter().enumerate().for_each(|(i, v)| {
                if !(v.is_constant() && v.value() == 0.0) {
                    out.push((i, v.value()))
                }
            }),
        }
        out
    }

    fn to_dense(&self, dim: usize) -> Vec<T> {
        match self {
            Grad::Dense(d) => d.clone(),
            Grad::Sparse(p) => {
                let mut d = vec![T::zero(); dim];
                for &(i, v) in p {
                    d[i as usize] = v;
                }
                d
            }
        }
    }
}

#[inline]
fn coef_mul<T: Real>(c: T, g: T) -> T {
    if c.is_constant() && c.value() == 1.0 {
        g
    } else {
        c * g
    }
}

/// `ca·a + cb·b` over the union of both index sets.
fn lincomb<T: Real>(ca: T, a: &Grad<T>, cb: T, b: &Grad<T>, dim: usize) -> Grad<T> {
    match (a, b) {
        (Grad::Sparse(pa), Grad::Sparse(pb)) => {
            let mut out: Pairs<T> = SmallVec::with_capacity(pa.len() + pb.len());
            let (mut i, mut j) = (0, 0);
            while i < pa.len() && j < pb.len() {
                let (ia, va) = pa[i];
                let (ib, vb) = pb[j];
                if ia < ib {
                    out.push((ia, coef_mul(ca, va)));
                    i += 1;
                } else if ib < ia {
                    out.push((ib, coef_mul(cb, vb)));
                    j += 1;
                } else {
                    out.push((ia, coef_mul(ca, va) + coef_mul(cb, vb)));
                    i += 1;
                    j += 1;
                }
            }
            out.extend(pa[i..].iter().map(|&(k, v)| (k, coef_mul(ca, v))));
            out.extend(pb[j..].iter().map(|&(k, v)| (k, coef_mul(cb, v))));
            if dim > 0 && 2 * out.len() > dim {
                Grad::Sparse(out).densify(dim)
            } else {
                Grad::Sparse(out)
            }
        }
        _ => {
            let da = a.to_dense(dim);
            let db = b.to_dense(dim);
            let out = da
                .iter()
                .zip(&db)
                .map(|(&x, &y)| {
                    let zx = x.is_constant() && x.value() == 0.0;
                    let zy = y.is_constant() && y.value() == 0.0;
                    match (zx, zy) {
                        (true, true) => T::zero(),
                        (true, false) => coef_mul(cb, y),
                        (false, true) => coef_mul(ca, x),
                        (false, false) => coef_mul(ca, x) + coef_mul(cb, y),
                    }
                })
                .collect();
            Grad::Dense(out)
        }
    }
}

impl<T: Real> Grad<T> {
    fn densify(self, dim: usize) -> Self {
        Grad::Dense(self.to_dense(dim))
    }

    fn scale(&self, c: T) -> Self {
        match self {
            Grad::Sparse(p) => Grad::Sparse(p.iter().map(|&(i, v)| (i, coef_mul(c, v))).collect()),
            Grad::Dense(d) => Grad::Dense(
                d.iter()
                    .map(|&v| {
                        if v.is_constant() && v.value() == 0.0 {
                            v
                        } else {
                            coef_mul(c, v)
                        }
                    })
                    .collect(),
            ),
        }
    }
}

/// Scalar with a sparse gradient with respect to the sampled vector.
#[derive(Clone, Debug)]
pub struct SparseDual<T> {
    val: T,
    grad: Grad<T>,
    dim: u32,
}

impl<T: Real> SparseDual<T> {
    /// A quantity that does not depend on q.
    pub fn constant(v: f64) -> Self {
        Self::from_value(T::cst(v))
    }

    /// A value that does not depend on q (it may still live on a tape).
    pub fn from_value(val: T) -> Self {
        SparseDual {
            val,
            grad: Grad::empty(),
            dim: 0,
        }
    }

    /// Coordinate `i` of a `dim`-dimensional input, with unit partial.
    pub fn coordinate(val: T, i: usize, dim: usize) -> Self {
        let mut p = SmallVec::new();
        p.push((i as u32, T::cst(1.0)));
        let g = Grad::Sparse(p);
        let grad = if 2 > dim { g.densify(dim) } else { g };
        SparseDual {
            val,
            grad,
            dim: dim as u32,
        }
    }

    /// Seeded inputs from plain values.
    pub fn seed(q: &[f64]) -> Vec<Self> {
        (0..q.len())
            .map(|i| Self::coordinate(T::cst(q[i]), i, q.len()))
            .collect()
    }

    /// Seeded inputs from (possibly taped) values.
    pub fn seed_from(q: &[T]) -> Vec<Self> {
        (0..q.len())
            .map(|i| Self::coordinate(q[i], i, q.len()))
            .collect()
    }

    /// Inputs without gradient tracking: used when only values are needed.
    pub fn untracked(q: &[T]) -> Vec<Self> {
        q.iter().map(|&v| Self::from_value(v)).collect()
    }

    #[inline]
    pub fn value(&self) -> T {
        self.val
    }

    #[inline]
    pub fn val(&self) -> f64 {
        self.val.value()
    }

    pub fn grad(&self) -> &Grad<T> {
        &self.grad
    }

    /// Chain rule for a scalar function with value `val` and derivative `d`.
    fn chain(&self, val: T, d: T) -> Self {
        SparseDual {
            val,
            grad: self.grad.scale(d),
            dim: self.dim,
        }
    }

    fn combine(&self, ca: T, other: &Self, cb: T, val: T) -> Self {
        let dim = self.dim.max(other.dim);
        let grad = if other.grad.is_empty() {
            self.grad.scale(ca)
        } else if self.grad.is_empty() {
            other.grad.scale(cb)
        } else {
            lincomb(ca, &self.grad, cb, &other.grad, dim as usize)
        };
        SparseDual { val, grad, dim }
    }

    /// Multiplies by a scalar that carries no q-gradient.
    pub fn scale(&self, c: T) -> Self {
        self.chain(self.val * c, c)
    }

    pub fn exp(&self) -> Self {
        let e = self.val.exp();
        self.chain(e, e)
    }

    pub fn ln(&self) -> Self {
        self.chain(self.val.ln(), self.val.recip())
    }

    pub fn sqrt(&self) -> Self {
        let s = self.val.sqrt();
        self.chain(s, s.recip() * 0.5)
    }

    pub fn powf(&self, e: f64) -> Self {
        self.chain(self.val.powf(e), self.val.powf(e - 1.0) * e)
    }

    pub fn powi(&self, n: i32) -> Self {
        self.chain(self.val.powi(n), self.val.powi(n - 1) * n as f64)
    }

    /// `self^e` with a differentiable exponent, for positive `self`.
    pub fn pow(&self, e: &Self) -> Self {
        (&self.ln() * e).exp()
    }

    pub fn square(&self) -> Self {
        self.chain(self.val.square(), self.val * 2.0)
    }

    pub fn recip(&self) -> Self {
        let r = self.val.recip();
        self.chain(r, -(r * r))
    }

    pub fn ln_1p(&self) -> Self {
        self.chain(self.val.ln_1p(), (self.val + 1.0).recip())
    }

    pub fn logistic(&self) -> Self {
        let s = self.val.logistic();
        self.chain(s, s * (T::cst(1.0) - s))
    }

    pub fn softplus(&self) -> Self {
        self.chain(self.val.softplus(), self.val.logistic())
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, |$a:ident, $b:ident| $body:expr) => {
        impl<T: Real> $tr<&SparseDual<T>> for &SparseDual<T> {
            type Output = SparseDual<T>;
            fn $m(self, rhs: &SparseDual<T>) -> SparseDual<T> {
                let $a = self;
                let $b = rhs;
                $body
            }
        }
        impl<T: Real> $tr<SparseDual<T>> for SparseDual<T> {
            type Output = SparseDual<T>;
            fn $m(self, rhs: SparseDual<T>) -> SparseDual<T> {
                (&self).$m(&rhs)
            }
        }
        impl<T: Real> $tr<&SparseDual<T>> for SparseDual<T> {
            type Output = SparseDual<T>;
            fn $m(self, rhs: &SparseDual<T>) -> SparseDual<T> {
                (&self).$m(rhs)
            }
        }
        impl<T: Real> $tr<SparseDual<T>> for &SparseDual<T> {
            type Output = SparseDual<T>;
            fn $m(self, rhs: SparseDual<T>) -> SparseDual<T> {
                self.$m(&rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| a.combine(T::cst(1.0), b, T::cst(1.0), a.val + b.val));
binop!(Sub, sub, |a, b| a.combine(T::cst(1.0), b, T::cst(-1.0), a.val - b.val));
binop!(Mul, mul, |a, b| a.combine(b.val, b, a.val, a.val * b.val));
binop!(Div, div, |a, b| {
    let inv = b.val.recip();
    let q = a.val * inv;
    a.combine(inv, b, -(q * inv), q)
});

macro_rules! scalar_op {
    ($tr:ident, $m:ident, |$a:ident, $c:ident| $body:expr) => {
        impl<T: Real> $tr<f64> for &SparseDual<T> {
            type Output = SparseDual<T>;
            fn $m(self, $c: f64) -> SparseDual<T> {
                let $a = self;
                $body
            }
        }
        impl<T: Real> $tr<f64> for SparseDual<T> {
            type Output = SparseDual<T>;
            fn $m(self, c: f64) -> SparseDual<T> {
                (&self).$m(c)
            }
        }
    };
}

scalar_op!(Add, add, |a, c| SparseDual {
    val: a.val + c,
    grad: a.grad.clone(),
    dim: a.dim
});
scalar_op!(Sub, sub, |a, c| SparseDual {
    val: a.val - c,
    grad: a.grad.clone(),
    dim: a.dim
});
scalar_op!(Mul, mul, |a, c| a.scale(T::cst(c)));
scalar_op!(Div, div, |a, c| a.scale(T::cst(1.0 / c)));

impl<T: Real> Neg for &SparseDual<T> {
    type Output = SparseDual<T>;
    fn neg(self) -> SparseDual<T> {
        self.scale(T::cst(-1.0))
    }
}

impl<T: Real> Neg for SparseDual<T> {
    type Output = SparseDual<T>;
    fn neg(self) -> SparseDual<T> {
        -&self
    }
}

macro_rules! lhs_scalar {
    ($tr:ident, $m:ident, |$c:ident, $a:ident| $body:expr) => {
        impl<T: Real> $tr<&SparseDual<T>> for f64 {
            type Output = SparseDual<T>;
            #[allow(clippy::suspicious_arithmetic_impl)]
            fn $m(self, $a: &SparseDual<T>) -> SparseDual<T> {
                let $c = self;
                $body
            }
        }
        impl<T: Real> $tr<SparseDual<T>> for f64 {
            type Output = SparseDual<T>;
            fn $m(self, a: SparseDual<T>) -> SparseDual<T> {
                self.$m(&a)
            }
        }
    };
}

lhs_scalar!(Add, add, |c, a| a + c);
lhs_scalar!(Sub, sub, |c, a| -a + c);
lhs_scalar!(Mul, mul, |c, a| a * c);
lhs_scalar!(Div, div, |c, a| a.recip() * c);

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: f64, i: usize, dim: usize) -> SparseDual<f64> {
        SparseDual::coordinate(v, i, dim)
    }

    #[test]
    fn merge_keeps_sorted_unique_indices() {
        let a = d(1.0, 5, 20);
        let b = d(2.0, 2, 20);
        let c = d(3.0, 9, 20);
        let s = &(&a * &b) + &(&c - &a);
        assert_eq!(s.grad().indices(), vec![2, 5, 9]);
        let e = s.grad().to_pairs();
        assert_eq!(e, vec![(2, 1.0), (5, 1.0), (9, 1.0)]);
    }

    #[test]
    fn dense_fallback_past_half() {
        let q = SparseDual::<f64>::seed(&[1.0, 2.0, 3.0, 4.0]);
        let s = &(&q[0] + &q[1]) + &q[2];
        assert!(matches!(s.grad(), Grad::Dense(_)));
        assert_eq!(s.grad().to_pairs(), vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
        let t = &s * &q[3];
        assert_eq!(t.grad().to_pairs(), vec![(0, 4.0), (1, 4.0), (2, 4.0), (3, 6.0)]);
    }

    #[test]
    fn constant_combination_is_empty() {
        let a = SparseDual::<f64>::constant(2.0);
        let b = (&a * 3.0).exp();
        assert!(b.grad().is_empty());
    }

    fn central_diff(f: &dyn Fn(&[f64]) -> f64, q: &[f64], i: usize) -> f64 {
        let h = 1e-6 * q[i].abs().max(1.0);
        let mut a = q.to_vec();
        let mut b = q.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    fn expr<T: Real>(q: &[SparseDual<T>]) -> SparseDual<T> {
        let a = (&q[0] * &q[1]).exp() / (&q[2].square() + 1.0);
        let b = q[3].logistic().ln_1p() + q[1].softplus().sqrt();
        let c = (&q[0] - &q[3]).powi(3) + (q[2].square() + 0.5).powf(0.7);
        &(&a + &b) * &c + 2.0 / (&q[1].exp() + 1.0)
    }

    proptest! {
        #[test]
        fn forward_matches_finite_differences(q in prop::collection::vec(-1.5f64..1.5, 4)) {
            let dual = expr(&SparseDual::<f64>::seed(&q));
            let f = |x: &[f64]| expr(&SparseDual::<f64>::untracked(x)).val();
            let grad = dual.grad().to_dense(4);
            for i in 0..4 {
                let fd = central_diff(&f, &q, i);
                prop_assert!((grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                    "coord {} ad {} fd {}", i, grad[i], fd);
            }
        }
    }
}
