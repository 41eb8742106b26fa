//! The P-representation `P(ω) = L Λ Lᵀ` of SPD matrices and the LGCs of
//! Gaussian and Wishart distributions expressed in it.
//!
//! Layout of `ω` (length `n(n+1)/2`): the first `n` entries are the log
//! diagonal of Λ; the rest fill the strictly lower part of the unit lower
//! triangular `L` column by column. Column `k` (1-based, `k < n`) is the
//! block `J_k`.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::lgc::LgcMatrix;
use crate::model::{Dist, Factors};

/// Row-major square matrix over a [`Real`] scalar.
#[derive(Clone, Debug)]
pub struct Square<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Square<T> {
    pub fn zeros(n: usize) -> Self {
        Square {
            n,
            a: vec![T::zero(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[i * self.n + j] = v;
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).value())
    }

    pub fn scaled(&self, c: T) -> Self {
        Square {
            n: self.n,
            a: self.a.iter().map(|&v| v * c).collect(),
        }
    }
}

/// Length of `ω` for an `n × n` matrix.
pub fn omega_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Matrix dimension for a given `ω` length.
pub fn dim_from_len(len: usize) -> Option<usize> {
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (omega_len(n) == len).then_some(n)
}

fn col_start(n: usize, j: usize) -> usize {
    // 0-based column j of L starts at κ_{j+1} - 1
    n * (j + 1) - j * (j + 1) / 2
}

/// Positions of `J_k` (1-based `k`, `1 ≤ k < n`) inside `ω`.
pub fn block(n: usize, k: usize) -> Range<usize> {
    let s = col_start(n, k - 1);
    s..s + (n - k)
}

/// Position in `ω` of `L[i, j]` (0-based, `i > j`).
pub fn l_index(n: usize, i: usize, j: usize) -> usize {
    col_start(n, j) + (i - j - 1)
}

/// `ω′` such that `P(ω′)` is the trailing sub-representation `P_r(ω)`.
pub fn sub_omega<T: Clone>(omega: &[T], n: usize, r: usize) -> Vec<T> {
    let mut out: Vec<T> = omega[r..n].to_vec();
    out.extend_from_slice(&omega[col_start(n, r).min(omega.len())..]);
    out
}

fn check_len<T>(omega: &[T]) -> Result<usize> {
    dim_from_len(omega.len()).ok_or(Error::Dimension {
        context: "P-representation",
        expected: omega_len(dim_from_len(omega.len()).unwrap_or(1)),
        got: omega.len(),
    })
}

/// `P(ω)`.
pub fn prep_build<T: Real>(omega: &[T]) -> Result<Square<T>> {
    let n = check_len(omega)?;
    let lam: Vec<T> = omega[..n].iter().map(|w| w.exp()).collect();
    let l = |i: usize, j: usize| -> Option<T> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => None,
            std::cmp::Ordering::Equal => Some(T::cst(1.0)),
            std::cmp::Ordering::Greater => Some(omega[l_index(n, i, j)]),
        }
    };
    let mut p = Square::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::zero();
            for k in 0..=j {
                let (Some(a), Some(b)) = (l(i, k), l(j, k)) else { continue };
                let t = if k == j { a * lam[k] } else { a * b * lam[k] };
                s = if k == 0 { t } else { s + t };
            }
            p.set(i, j, s);
            p.set(j, i, s);
        }
    }
    Ok(p)
}

/// Inverse of `vech ∘ P`: recovers `ω` from an SPD matrix via its
/// LDLᵀ factorization.
pub fn prep_reconstruct(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let chol = crate::linalg::DenseCholesky::from_matrix(p)?;
    let mut omega = vec![0.0; omega_len(n)];
    for j in 0..n {
        let d = chol.get(j, j);
        omega[j] = 2.0 * d.ln();
        for i in j + 1..n {
            omega[l_index(n, i, j)] = chol.get(i, j) / d;
        }
    }
    Ok(omega)
}

/// `[P_0⁻¹, P_1⁻¹, …, P_{n-1}⁻¹]`, where `P_r⁻¹` is `(n - r) × (n - r)`.
pub fn prep_inverse_recursion<T: Real>(omega: &[T]) -> Result<Vec<Square<T>>> {
    let n = check_len(omega)?;
    let mut out: Vec<Square<T>> = Vec::with_capacity(n);
    let mut last = Square::zeros(1);
    last.set(0, 0, (-omega[n - 1]).exp());
    out.push(last);
    for r in (0..n.saturating_sub(1)).rev() {
        let next = out.last().expect("recursion seeded");
        let m = n - r - 1;
        let wj = &omega[block(n, r + 1)];
        let rho: Vec<T> = (0..m)
            .map(|i| {
                let mut s = T::zero();
                for (j, &w) in wj.iter().enumerate() {
                    s = if j == 0 { next.get(i, j) * w } else { s + next.get(i, j) * w };
                }
                s
            })
            .collect();
        let mut cur = Square::zeros(m + 1);
        let mut top = (-omega[r]).exp();
        for (&p, &w) in rho.iter().zip(wj) {
            top += p * w;
        }
        cur.set(0, 0, top);
        for i in 0..m {
            cur.set(0, i + 1, -rho[i]);
            cur.set(i + 1, 0, -rho[i]);
            for j in 0..m {
                cur.set(i + 1, j + 1, next.get(i, j));
            }
        }
        out.push(cur);
    }
    out.reverse();
    Ok(out)
}

/// `Σ_i (n + 1 - i) ω_i`, the log Jacobian of `ω ↦ vech(P(ω))` up to a
/// constant.
pub fn prep_logjac<T: Real>(omega: &[T]) -> Result<T> {
    let n = check_len(omega)?;
    let mut s = T::zero();
    for i in 0..n {
        s += omega[i] * (n - i) as f64;
    }
    Ok(s)
}

/// `Lᵀ r` for the unit lower `L(ω)`.
fn lt_mul<T: Real>(omega: &[T], n: usize, r: &[T]) -> Vec<T> {
    (0..n)
        .map(|k| {
            let mut s = r[k];
            for i in k + 1..n {
                s += omega[l_index(n, i, k)] * r[i];
            }
            s
        })
        .collect()
}

/// `L⁻¹ r` for the unit lower `L(ω)`.
fn l_solve<T: Real>(omega: &[T], n: usize, r: &[T]) -> Vec<T> {
    let mut z: Vec<T> = r.to_vec();
    for j in 0..n {
        for i in j + 1..n {
            z[i] = z[i] - omega[l_index(n, i, j)] * z[j];
        }
    }
    z
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha.value() > 0.0 && alpha.value().is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must be positive, got {}", alpha.value())))
    }
}

/// log N(x | μ, [α P(ω)]⁻¹).
pub fn logpdf_mvnormal_precision_prep<T: Real>(x: &[T], mu: &[T], alpha: T, omega: &[T]) -> Result<T> {
    check_alpha(alpha)?;
    let n = check_len(omega)?;
    let r: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
    let z = lt_mul(omega, n, &r);
    let mut quad = T::zero();
    let mut half_logdet = alpha.ln() * (0.5 * n as f64);
    for k in 0..n {
        quad += omega[k].exp() * z[k].square();
        half_logdet += omega[k] * 0.5;
    }
    Ok(half_logdet - quad * alpha * 0.5 - HALF_LN_2PI * n as f64)
}

/// log N(x | μ, α P(ω)).
pub fn logpdf_mvnormal_covariance_prep<T: Real>(x: &[T], mu: &[T], alpha: T, omega: &[T]) -> Result<T> {
    check_alpha(alpha)?;
    let n = check_len(omega)?;
    let r: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
    let z = l_solve(omega, n, &r);
    let mut quad = T::zero();
    let mut half_logdet = alpha.ln() * (0.5 * n as f64);
    for k in 0..n {
        quad += (-omega[k]).exp() * z[k].square();
        half_logdet += omega[k] * 0.5;
    }
    Ok(-half_logdet - quad / alpha * 0.5 - HALF_LN_2PI * n as f64)
}

fn prep_parameter_blocks<T: Real>(m: &mut LgcMatrix<T>, off: usize, alpha: T, omega: &[T], n: usize) -> Result<()> {
    let inv = prep_inverse_recursion(omega)?;
    let ia = alpha.recip();
    m.set(off, off, ia.square() * (0.5 * n as f64));
    for i in 0..n {
        m.set(off + 1 + i, off, ia * 0.5);
        m.set(off + 1 + i, off + 1 + i, T::cst(0.5));
    }
    for k in 1..n {
        let b = block(n, k);
        let scale = omega[k - 1].exp();
        let pk = &inv[k];
        for (a, ia_) in b.clone().enumerate() {
            for (c, ic) in b.clone().enumerate() {
                if ia_ >= ic {
                    m.set(off + 1 + ia_, off + 1 + ic, pk.get(a, c) * scale);
                }
            }
        }
    }
    Ok(())
}

/// LGC of N(x | μ, [α P(ω)]⁻¹), ordering (x, μ, α, ω_Λ, ω_L).
pub fn lgc_mvnormal_precision_prep<T: Real>(alpha: T, omega: &[T]) -> Result<LgcMatrix<T>> {
    check_alpha(alpha)?;
    let n = check_len(omega)?;
    let p = prep_build(omega)?.scaled(alpha);
    let mut m = LgcMatrix::zeros(n, n + 1 + omega.len());
    x_mu_blocks(&mut m, &p);
    prep_parameter_blocks(&mut m, 2 * n, alpha, omega, n)?;
    Ok(m)
}

/// LGC of N(x | μ, α P(ω)), ordering (x, μ, α, ω_Λ, ω_L).
pub fn lgc_mvnormal_covariance_prep<T: Real>(alpha: T, omega: &[T]) -> Result<LgcMatrix<T>> {
    check_alpha(alpha)?;
    let n = check_len(omega)?;
    let inv = prep_inverse_recursion(omega)?;
    let p = inv[0].scaled(alpha.recip());
    let mut m = LgcMatrix::zeros(n, n + 1 + omega.len());
    x_mu_blocks(&mut m, &p);
    prep_parameter_blocks(&mut m, 2 * n, alpha, omega, n)?;
    Ok(m)
}

fn x_mu_blocks<T: Real>(m: &mut LgcMatrix<T>, p: &Square<T>) {
    let n = p.n();
    for i in 0..n {
        for j in 0..n {
            if i >= j {
                m.set(i, j, p.get(i, j));
                m.set(n + i, n + j, p.get(i, j));
            }
            m.set(n + i, j, -p.get(i, j));
        }
    }
}

fn check_nu<T: Real>(nu: T, n: usize) -> Result<()> {
    if nu.value() > (n as f64) - 1.0 && nu.value().is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "degrees of freedom must exceed {}, got {}",
            n as f64 - 1.0,
            nu.value()
        )))
    }
}

/// log ExpGamma(x | α, β) with β a scale: αx − eˣ/β − ln Γ(α) − α ln β.
pub fn logpdf_expgamma<T: Real>(x: T, alpha: T, beta: T) -> Result<T> {
    if !(alpha.value() > 0.0) || !(beta.value() > 0.0) {
        return Err(Error::domain(format!(
            "ExpGamma parameters must be positive, got ({}, {})",
            alpha.value(),
            beta.value()
        )));
    }
    Ok(alpha * x - x.exp() / beta - alpha.ln_gamma() - alpha * beta.ln())
}

/// Log-density of ω with `P(x) ~ W(ν⁻¹ P(y), ν)` in the factored form:
/// ExpGamma diagonal terms plus Gaussian columns of L.
pub fn logpdf_wishart_prep<T: Real>(x: &[T], y: &[T], nu: T) -> Result<T> {
    let n = check_len(x)?;
    if y.len() != x.len() {
        return Err(Error::Dimension {
            context: "Wishart scale representation",
            expected: x.len(),
            got: y.len(),
        });
    }
    check_nu(nu, n)?;
    let inu = nu.recip();
    let mut lp = T::zero();
    for i in 0..n {
        let alpha = (nu + (1.0 - (i + 1) as f64)) * 0.5;
        let beta = y[i].exp() * inu * 2.0;
        lp += logpdf_expgamma(x[i], alpha, beta)?;
    }
    for k in 1..n {
        let b = block(n, k);
        let alpha = inu * (-x[k - 1]).exp();
        let sub = sub_omega(y, n, k);
        lp += logpdf_mvnormal_covariance_prep(&x[b.clone()], &y[b], alpha, &sub)?;
    }
    Ok(lp)
}

/// Joint LGC of `x | y, ν` with `P(x) ~ W(ν⁻¹ P(y), ν)`, ordering
/// (x, y, ν); `x` and `y` each of length `n(n+1)/2`.
pub fn lgc_wishart_prep_joint<T: Real>(y: &[T], nu: T) -> Result<LgcMatrix<T>> {
    let n = check_len(y)?;
    check_nu(nu, n)?;
    let len = y.len();
    let (xo, yo, vo) = (0, len, 2 * len);
    let mut m = LgcMatrix::zeros(len, len + 1);
    let nf = n as f64;
    let mut nunu = T::cst(-nf * 0.5) / nu;
    for i in 0..n {
        let fi = (i + 1) as f64;
        m.set(xo + i, xo + i, T::cst((1.0 + nf) * 0.5 - fi) + nu * 0.5);
        m.set(yo + i, xo + i, -((nu + (1.0 - fi)) * 0.5));
        for j in i + 1..n {
            m.set(yo + j, xo + i, T::cst(-0.5));
        }
        m.set(vo, xo + i, T::cst((nf + 1.0 - 2.0 * fi) * 0.5) / nu);
        m.set(yo + i, yo + i, nu * 0.5);
        nunu += ((nu + (1.0 - fi)) * 0.5).trigamma() * 0.25;
    }
    m.set(vo, vo, nunu);
    let inv = prep_inverse_recursion(y)?;
    for k in 1..n {
        let b = block(n, k);
        let ek = y[k - 1].exp();
        let sx = ek * (nu + (1.0 - k as f64));
        let sy = ek * nu;
        let pk = &inv[k];
        for (a, ia) in b.clone().enumerate() {
            for (c, ic) in b.clone().enumerate() {
                let v = pk.get(a, c);
                if ia >= ic {
                    m.set(xo + ia, xo + ic, v * sx);
                    m.set(yo + ia, yo + ic, v * sy);
                }
                m.set(yo + ia, xo + ic, -(v * sx));
            }
        }
    }
    Ok(m)
}

/// Factors for `P(ω) ~ W(diag(w), ν)`: ExpGamma diagonal terms and
/// independent Gaussian entries of L.
pub fn wishart_diag_factors<T: Real>(
    out: &mut Factors<T>,
    label: &'static str,
    omega: &[SparseDual<T>],
    nu: &SparseDual<T>,
    w: &[SparseDual<T>],
) -> Result<()> {
    let n = check_len(omega)?;
    if w.len() != n {
        return Err(Error::Dimension {
            context: "Wishart diagonal scale",
            expected: n,
            got: w.len(),
        });
    }
    check_nu(nu.value(), n)?;
    for i in 0..n {
        let alpha = (nu - i as f64) * 0.5;
        out.expgamma(label, i, omega[i].clone(), alpha, &w[i] * 2.0);
    }
    for k in 0..n.saturating_sub(1) {
        let scale = (&omega[k] * -0.5).exp();
        for j in k + 1..n {
            let idx = l_index(n, j, k);
            let sigma = &scale * &w[j].sqrt();
            out.normal(label, idx, omega[idx].clone(), SparseDual::constant(0.0), sigma);
        }
    }
    Ok(())
}

/// Factors for `P(x) ~ W(ν⁻¹ P(y), ν)`. `joint` selects a single factor
/// with the joint LGC; otherwise ExpGamma diagonal terms and covariance-P
/// Gaussian columns are emitted.
pub fn wishart_prep_factors<T: Real>(
    out: &mut Factors<T>,
    label: &'static str,
    index: usize,
    x: &[SparseDual<T>],
    y: &[SparseDual<T>],
    nu: &SparseDual<T>,
    joint: bool,
) -> Result<()> {
    let n = check_len(x)?;
    if y.len() != x.len() {
        return Err(Error::Dimension {
            context: "Wishart scale representation",
            expected: x.len(),
            got: y.len(),
        });
    }
    check_nu(nu.value(), n)?;
    if joint {
        let mut param = y.to_vec();
        param.push(nu.clone());
        out.push(label, index, Dist::WishartPScaleJoint(n), x.to_vec(), param);
        return Ok(());
    }
    let inu = nu.recip();
    for i in 0..n {
        let alpha = (nu + (1.0 - (i + 1) as f64)) * 0.5;
        let beta = &y[i].exp() * &inu * 2.0;
        out.expgamma(label, index, x[i].clone(), alpha, beta);
    }
    for k in 1..n {
        let b = block(n, k);
        let alpha = &inu * &(-&x[k - 1]).exp();
        let mut param = y[b.clone()].to_vec();
        param.push(alpha);
        param.extend(sub_omega(y, n, k));
        out.push(label, index, Dist::MvNormalCovarianceP(n - k), x[b].to_vec(), param);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_omega(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..omega_len(n)).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_is_identity() {
        let p = prep_build(&[0.0; 6]).unwrap();
        assert_eq!(p.to_dmatrix(), DMatrix::identity(3, 3));
        for inv in prep_inverse_recursion(&[0.0; 6]).unwrap() {
            let k = inv.n();
            assert_eq!(inv.to_dmatrix(), DMatrix::identity(k, k));
        }
        assert_eq!(prep_logjac(&[0.0; 6]).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_by_hand() {
        let c = 0.7;
        let p = prep_build(&[0.0, 0.0, c]).unwrap().to_dmatrix();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0 + c * c]));
        assert_eq!(prep_logjac(&[0.4, -1.1, 3.0]).unwrap(), 2.0 * 0.4 - 1.1);
    }

    #[test]
    fn index_map() {
        // n = 4: columns hold (4,5,6), (7,8), (9) in 0-based ω positions
        assert_eq!(block(4, 1), 4..7);
        assert_eq!(block(4, 2), 7..9);
        assert_eq!(block(4, 3), 9..10);
        assert_eq!(l_index(4, 3, 1), 8);
        assert_eq!(sub_omega(&(0..10).collect::<Vec<_>>(), 4, 1), vec![1, 2, 3, 7, 8, 9]);
        assert_eq!(sub_omega(&(0..10).collect::<Vec<_>>(), 4, 3), vec![3]);
        assert_eq!(dim_from_len(10), Some(4));
        assert_eq!(dim_from_len(7), None);
    }

    #[test]
    fn round_trip_and_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            for _ in 0..5 {
                let w = random_omega(n, &mut rng);
                let p = prep_build(&w).unwrap().to_dmatrix();
                assert!(p.clone().symmetric_eigen().eigenvalues.min() > 0.0);
                let back = prep_reconstruct(&p).unwrap();
                for (a, b) in w.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn inverse_recursion_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 3;
        let w = random_omega(n, &mut rng);
        assert_eq!(prep_inverse_recursion(&[0.3]).unwrap()[0].get(0, 0), (-0.3f64).exp());
        let invs = prep_inverse_recursion(&w).unwrap();
        for r in 0..n {
            let pr = prep_build(&sub_omega(&w, n, r)).unwrap().to_dmatrix();
            let direct = pr.clone().try_inverse().unwrap();
            assert!((invs[r].to_dmatrix() - &direct).abs().max() < 1e-10);
        }
        let p0 = prep_build(&w).unwrap().to_dmatrix();
        assert!((invs[0].to_dmatrix() * p0 - DMatrix::identity(n, n)).abs().max() < 1e-10);
    }

    fn vech_jacobian_logdet(w: &[f64], n: usize) -> f64 {
        let h = 1e-6;
        let len = w.len();
        let vech = |w: &[f64]| {
            let p = prep_build(w).unwrap();
            let mut v = Vec::new();
            for j in 0..n {
                for i in j..n {
                    v.push(p.get(i, j));
                }
            }
            v
        };
        let mut jac = DMatrix::zeros(len, len);
        for c in 0..len {
            let mut a = w.to_vec();
            let mut b = w.to_vec();
            a[c] += h;
            b[c] -= h;
            let (va, vb) = (vech(&a), vech(&b));
            for r in 0..len {
                jac[(r, c)] = (va[r] - vb[r]) / (2.0 * h);
            }
        }
        jac.determinant().abs().ln()
    }

    #[test]
    fn logjac_matches_fd_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 3;
        let w1 = random_omega(n, &mut rng);
        let w2 = random_omega(n, &mut rng);
        let d_fd = vech_jacobian_logdet(&w1, n) - vech_jacobian_logdet(&w2, n);
        let d = prep_logjac(&w1).unwrap() - prep_logjac(&w2).unwrap();
        assert!((d - d_fd).abs() < 1e-6, "{d} vs {d_fd}");
        // ω-independent constant is zero for this parameterization
        assert!(vech_jacobian_logdet(&w1, n) - prep_logjac(&w1).unwrap() < 1e-6);
    }

    #[test]
    fn precision_prep_small_cases() {
        let m = lgc_mvnormal_precision_prep(2.0, &[0.3]).unwrap();
        let e = 0.3f64.exp();
        assert!((m.get(0, 0) - 2.0 * e).abs() < 1e-14);
        assert!((m.get(1, 0) + 2.0 * e).abs() < 1e-14);
        assert_eq!(m.get(2, 2), 1.0 / 8.0);
        assert_eq!(m.get(3, 2), 0.25);
        assert_eq!(m.get(3, 3), 0.5);
        let c = lgc_mvnormal_covariance_prep(2.0, &[0.3]).unwrap();
        assert!((c.get(0, 0) - (-0.3f64).exp() / 2.0).abs() < 1e-14);
        assert_eq!(c.get(2, 2), m.get(2, 2));
        assert!(lgc_mvnormal_precision_prep(0.0, &[0.3]).is_err());
    }

    #[test]
    fn precision_prep_x_block_is_scaled_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = random_omega(3, &mut rng);
        let m = lgc_mvnormal_precision_prep(1.7, &w).unwrap();
        let p = prep_build(&w).unwrap().to_dmatrix() * 1.7;
        let full = m.to_dmatrix();
        assert!((full.view((0, 0), (3, 3)) - &p).abs().max() < 1e-14);
        assert!(m.is_psd());
        let c = lgc_mvnormal_covariance_prep(1.7, &w).unwrap();
        assert!(c.is_psd());
        let pinv = p.try_inverse().unwrap();
        assert!((c.to_dmatrix().view((0, 0), (3, 3)) - pinv).abs().max() < 1e-10);
    }

    #[test]
    fn density_forms_agree_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_omega(3, &mut rng);
        let x = [0.3, -0.2, 1.1];
        let mu = [0.1, 0.0, -0.5];
        let p = prep_build(&w).unwrap().to_dmatrix();
        let r = nalgebra::DVector::from_iterator(3, x.iter().zip(&mu).map(|(a, b)| a - b));
        let dense = |cov: &DMatrix<f64>| {
            let q = (r.transpose() * cov.clone().try_inverse().unwrap() * &r)[0];
            -0.5 * cov.determinant().ln() - 0.5 * q - 1.5 * (2.0 * std::f64::consts::PI).ln()
        };
        let a = 0.8;
        let lp = logpdf_mvnormal_precision_prep(&x, &mu, a, &w).unwrap();
        assert!((lp - dense(&(p.clone() * a).try_inverse().unwrap())).abs() < 1e-10);
        let lc = logpdf_mvnormal_covariance_prep(&x, &mu, a, &w).unwrap();
        assert!((lc - dense(&(p * a))).abs() < 1e-10);
    }

    #[test]
    fn joint_wishart_x_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = random_omega(3, &mut rng);
        let nu = 10.0;
        let m = lgc_wishart_prep_joint(&y, nu).unwrap();
        for i in 0..3 {
            let expect = (nu + 1.0 + 3.0) / 2.0 - (i + 1) as f64;
            assert!((m.get(i, i) - expect).abs() < 1e-14);
        }
        assert!(m.is_psd());
        assert!(m.get(12, 12) > 0.0);
        assert!(lgc_wishart_prep_joint(&y, 1.5).is_err());
    }

    fn factor_logpdf(f: &Factors<f64>) -> f64 {
        f.iter().map(|x| x.log_density().unwrap()).sum()
    }

    fn duals(v: &[f64]) -> Vec<SparseDual<f64>> {
        SparseDual::seed(v)
    }

    /// Wishart log-density up to constants, scale `w` diagonal.
    fn wishart_kernel(p: &DMatrix<f64>, winv: &DMatrix<f64>, nu: f64) -> f64 {
        let n = p.nrows() as f64;
        0.5 * (nu - n - 1.0) * p.determinant().ln() - 0.5 * (winv * p).trace()
    }

    #[test]
    fn diag_wishart_factors_match_density_up_to_constant() {
        let nu = 6.5;
        let w = [0.5, 1.2, 2.0];
        let winv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, w.iter().map(|v| 1.0 / v)));
        let wd: Vec<SparseDual<f64>> = w.iter().map(|&v| SparseDual::constant(v)).collect();
        let nud = SparseDual::constant(nu);
        let diff = |om: &[f64]| {
            let mut f = Factors::new();
            wishart_diag_factors(&mut f, "p", &duals(om), &nud, &wd).unwrap();
            let p = prep_build(om).unwrap().to_dmatrix();
            factor_logpdf(&f) - prep_logjac(om).unwrap() - wishart_kernel(&p, &winv, nu)
        };
        let a = diff(&[0.1, -0.3, 0.4, 0.2, -0.5, 0.7]);
        let b = diff(&[-0.6, 0.2, 1.1, -0.9, 0.3, 0.05]);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn diag_wishart_factor_draws_have_wishart_mean() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Gamma, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, nu) = (3usize, 5.0);
        let w = [0.5, 1.0, 2.0];
        let draws = 100_000;
        let mut sum = DMatrix::<f64>::zeros(n, n);
        let mut sq = DMatrix::<f64>::zeros(n, n);
        let mut om = vec![0.0; omega_len(n)];
        for _ in 0..draws {
            for i in 0..n {
                let g = Gamma::new((nu - i as f64) / 2.0, 2.0 * w[i]).unwrap();
                om[i] = g.sample(&mut rng).ln();
            }
            for k in 0..n - 1 {
                for j in k + 1..n {
                    let sd = ((-om[k]).exp() * w[j]).sqrt();
                    om[l_index(n, j, k)] = Normal::new(0.0, sd).unwrap().sample(&mut rng);
                }
            }
            let p = prep_build(&om).unwrap().to_dmatrix();
            sq += p.component_mul(&p);
            sum += p;
        }
        let m = draws as f64;
        for i in 0..n {
            for j in 0..n {
                let mean = sum[(i, j)] / m;
                let se = ((sq[(i, j)] / m - mean * mean) / m).sqrt();
                let want = if i == j { nu * w[i] } else { 0.0 };
                assert!((mean - want).abs() < 4.0 * se, "({i},{j}): {mean} vs {want} (se {se})");
            }
        }
    }

    #[test]
    fn prep_wishart_factored_and_joint_agree() {
        let x = [0.2, -0.1, 0.5, 0.3, -0.4, 0.1];
        let y = [0.1, 0.3, -0.2, 0.6, 0.0, -0.3];
        let nu = SparseDual::constant(9.0);
        let mut fa = Factors::new();
        wishart_prep_factors(&mut fa, "w", 0, &duals(&x), &SparseDual::untracked(&y), &nu, false).unwrap();
        let mut fj = Factors::new();
        wishart_prep_factors(&mut fj, "w", 0, &duals(&x), &SparseDual::untracked(&y), &nu, true).unwrap();
        assert_eq!(fa.len(), 3 + 2);
        assert_eq!(fj.len(), 1);
        assert!((factor_logpdf(&fa) - factor_logpdf(&fj)).abs() < 1e-10);
    }

    #[test]
    fn prep_wishart_factors_match_density_up_to_constant() {
        let nu = 8.0;
        let y = [0.3, -0.2, 0.5, 0.4, -0.1, 0.2];
        let scale = prep_build(&y).unwrap().to_dmatrix() / nu;
        let sinv = scale.try_inverse().unwrap();
        let diff = |x: &[f64]| {
            let lp = logpdf_wishart_prep(x, &y, nu).unwrap();
            let p = prep_build(x).unwrap().to_dmatrix();
            lp - prep_logjac(x).unwrap() - wishart_kernel(&p, &sinv, nu)
        };
        let a = diff(&[0.1, -0.3, 0.4, 0.2, -0.5, 0.7]);
        let b = diff(&[-0.6, 0.2, 1.1, -0.9, 0.3, 0.05]);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}
