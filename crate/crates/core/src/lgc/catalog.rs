use nalgebra::DMatrix;

use super::LgcMatrix;
use crate::ad::Real;
use crate::error::{Error, Result};
use crate::linalg::DenseCholesky;

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v.value() > 0.0 && v.value().is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {}", v.value())))
    }
}

/// N(x | μ, σ²) with ordering (x, μ, σ).
pub fn lgc_normal1d<T: Real>(_mu: T, sigma: T) -> Result<LgcMatrix<T>> {
    positive("sigma", sigma)?;
    let prec = sigma.square().recip();
    let mut m = LgcMatrix::zeros(1, 2);
    m.set(0, 0, prec);
    m.set(1, 0, -prec);
    m.set(1, 1, prec);
    m.set(2, 2, prec * 2.0);
    Ok(m)
}

/// N(x | μ, P⁻¹) with ordering (x, μ, ω), where `fisher_omega` is the
/// Fisher block of whatever parameters ω determine the precision `p`.
pub fn lgc_mvnormal_precision(
    mu: &[f64],
    p: &DMatrix<f64>,
    fisher_omega: &DMatrix<f64>,
) -> Result<LgcMatrix<f64>> {
    let n = mu.len();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Dimension {
            context: "precision matrix",
            expected: n,
            got: p.nrows(),
        });
    }
    DenseCholesky::from_matrix(p)?;
    let k = fisher_omega.nrows();
    let mut m = LgcMatrix::zeros(n, n + k);
    for i in 0..n {
        for j in 0..=i {
            m.set(i, j, p[(i, j)]);
            m.set(n + i, n + j, p[(i, j)]);
        }
        for j in 0..n {
            m.set(n + i, j, -p[(i, j)]);
        }
    }
    for i in 0..k {
        for j in 0..=i {
            m.set(2 * n + i, 2 * n + j, fisher_omega[(i, j)]);
        }
    }
    Ok(m)
}

/// Log of a Gamma(shape α, scale β) variate, ordering (x, α, β).
pub fn lgc_expgamma<T: Real>(alpha: T, beta: T) -> Result<LgcMatrix<T>> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    let ib = beta.recip();
    let mut m = LgcMatrix::zeros(1, 2);
    m.set(0, 0, alpha);
    m.set(1, 0, T::cst(-1.0));
    m.set(2, 0, -(alpha * ib));
    m.set(1, 1, alpha.trigamma());
    m.set(2, 1, ib);
    m.set(2, 2, alpha * ib * ib);
    Ok(m)
}

/// Logit of a Beta(a, b) variate, ordering (x, a, b).
pub fn lgc_inverselogitbeta<T: Real>(a: T, b: T) -> Result<LgcMatrix<T>> {
    positive("a", a)?;
    positive("b", b)?;
    let s = a + b;
    let tg_s = s.trigamma();
    let mut m = LgcMatrix::zeros(1, 2);
    m.set(0, 0, a * b / (s + 1.0));
    m.set(1, 0, -(b / s));
    m.set(2, 0, a / s);
    m.set(1, 1, a.trigamma() - tg_s);
    m.set(2, 1, -tg_s);
    m.set(2, 2, b.trigamma() - tg_s);
    Ok(m)
}

/// Fisher information of the zero-inflated Poisson in (η, g), where
/// `e^η` is the Poisson mean and `logistic(g)` the zero-inflation
/// probability. Returns the packed entries `[F_ηη, F_ηg, F_gg]`, evaluated
/// in log space so that large |η|, |g| do not overflow.
pub fn fisher_zip<T: Real>(eta: T, g: T) -> [T; 3] {
    let s = eta.exp();
    let sp_g = g.softplus();
    // softplus(-(g + s)) = ln(1 + e^{g+s}) - (g + s)
    let sp_neg = (-(g + s)).softplus();
    let f00 = (eta - sp_g).exp() * (T::cst(1.0) - (eta - s - sp_neg).exp());
    let f01 = -(eta - sp_g - s - sp_neg).exp();
    let f11 = (g - sp_g * 2.0 - sp_neg).exp() * (-(-s).exp_m1());
    [f00, f01, f11]
}

/// ZIP LGC, ordering (x, η, g): Fisher block only, zero V and W.
pub fn lgc_zip<T: Real>(eta: T, g: T) -> LgcMatrix<T> {
    let [a, b, c] = fisher_zip(eta, g);
    let mut m = LgcMatrix::zeros(1, 2);
    m.set(1, 1, a);
    m.set(2, 1, b);
    m.set(2, 2, c);
    m
}

/// LGC of z = B⁻¹(x - a(η)) with parameters η, θ = ψ(η): `Uᵀ V U` with
/// `U = [[B, ∇a], [0, ∇ψ]]`.
pub fn transform_lgc(
    base: &LgcMatrix<f64>,
    b: &DMatrix<f64>,
    grad_a: &DMatrix<f64>,
    grad_psi: &DMatrix<f64>,
) -> Result<LgcMatrix<f64>> {
    let (d, p) = (base.dim_x(), base.dim_theta());
    let pp = grad_a.ncols();
    if b.nrows() != d || b.ncols() != d {
        return Err(Error::Dimension {
            context: "transform B",
            expected: d,
            got: b.nrows(),
        });
    }
    if grad_a.nrows() != d || grad_psi.nrows() != p || grad_psi.ncols() != pp {
        return Err(Error::Dimension {
            context: "transform Jacobians",
            expected: d + p,
            got: grad_a.nrows() + grad_psi.nrows(),
        });
    }
    if d > 0 {
        let lu = b.clone().full_piv_lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("transform_lgc"));
        }
    }
    let mut u = DMatrix::zeros(d + p, d + pp);
    u.view_mut((0, 0), (d, d)).copy_from(b);
    u.view_mut((0, d), (d, pp)).copy_from(grad_a);
    u.view_mut((d, d), (p, pp)).copy_from(grad_psi);
    let out = u.transpose() * base.to_dmatrix() * &u;
    let mut m = LgcMatrix::zeros(d, pp);
    for i in 0..d + pp {
        for j in 0..=i {
            m.set(i, j, 0.5 * (out[(i, j)] + out[(j, i)]));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::TRIGAMMA_ONE;

    fn assert_mat(m: &LgcMatrix<f64>, expect: &[&[f64]], tol: f64) {
        for (i, row) in expect.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((m.get(i, j) - v).abs() <= tol, "({i},{j}): {} vs {v}", m.get(i, j));
            }
        }
    }

    #[test]
    fn normal_unit_and_scaled() {
        let m = lgc_normal1d(0.0, 1.0).unwrap();
        assert_mat(&m, &[&[1.0, -1.0, 0.0], &[-1.0, 1.0, 0.0], &[0.0, 0.0, 2.0]], 0.0);
        let m = lgc_normal1d(5.0, 2.0).unwrap();
        assert_mat(&m, &[&[0.25, -0.25, 0.0], &[-0.25, 0.25, 0.0], &[0.0, 0.0, 0.5]], 0.0);
        assert_eq!(m.get(0, 0) + m.get(0, 1), 0.0);
        assert!(lgc_normal1d(0.0, 0.0).is_err());
        assert!(lgc_normal1d(0.0, -1.0).is_err());
    }

    #[test]
    fn mvnormal_blocks() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let m = lgc_mvnormal_precision(&[0.0, 0.0], &p, &DMatrix::zeros(0, 0)).unwrap();
        let full = m.to_dmatrix();
        assert_eq!(full.view((0, 0), (2, 2)), p);
        assert_eq!(full.view((2, 0), (2, 2)), -p.clone());
        assert_eq!(full.view((2, 2), (2, 2)), p);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match lgc_mvnormal_precision(&[0.0, 0.0], &bad, &DMatrix::zeros(0, 0)) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expgamma_closed_form() {
        // (β, β) entry is α/β², the variance of e^x/β² - α/β
        let m = lgc_expgamma(3.0, 2.0).unwrap();
        let tg3 = TRIGAMMA_ONE - 1.25;
        assert_mat(&m, &[&[3.0, -1.0, -1.5], &[-1.0, tg3, 0.5], &[-1.5, 0.5, 0.75]], 1e-13);
        let m = lgc_expgamma(1.0, 1.0).unwrap();
        assert_mat(&m, &[&[1.0, -1.0, -1.0], &[-1.0, TRIGAMMA_ONE, 1.0], &[-1.0, 1.0, 1.0]], 1e-13);
        assert!(m.is_psd());
        assert!(lgc_expgamma(0.0, 1.0).is_err());
    }

    #[test]
    fn inverselogitbeta_entries() {
        let m = lgc_inverselogitbeta(1.0, 1.0).unwrap();
        assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        // equal shapes: cross terms are equal and opposite
        let m = lgc_inverselogitbeta(2.5, 2.5).unwrap();
        assert_eq!(m.get(0, 1), -0.5);
        assert_eq!(m.get(0, 2), 0.5);
        assert!(m.is_psd());
    }

    fn zip_brute(eta: f64, g: f64) -> [f64; 3] {
        // exhaustive sum over y with analytic scores
        let s = eta.exp();
        let pi = 1.0 / (1.0 + (-g).exp());
        let mut f = [0.0; 3];
        let p0 = pi + (1.0 - pi) * (-s).exp();
        let d_eta0 = -(1.0 - pi) * s * (-s).exp() / p0;
        let d_g0 = pi * (1.0 - pi) * (1.0 - (-s).exp()) / p0;
        f[0] += p0 * d_eta0 * d_eta0;
        f[1] += p0 * d_eta0 * d_g0;
        f[2] += p0 * d_g0 * d_g0;
        for y in 1..200 {
            let lp = (1.0 - pi).ln() + y as f64 * eta - s - crate::special::ln_gamma(y as f64 + 1.0);
            let p = lp.exp();
            let de = y as f64 - s;
            let dg = -pi;
            f[0] += p * de * de;
            f[1] += p * de * dg;
            f[2] += p * dg * dg;
        }
        f
    }

    #[test]
    fn zip_fisher_matches_exhaustive_sum() {
        for &(eta, g) in &[(0.0, 0.0), (1.0, -2.0), (-1.0, 1.0), (2.5, 0.3)] {
            let f = fisher_zip(eta, g);
            let b = zip_brute(eta, g);
            for k in 0..3 {
                assert!((f[k] - b[k]).abs() < 1e-8, "({eta},{g}) entry {k}: {} vs {}", f[k], b[k]);
            }
        }
    }

    #[test]
    fn zip_fisher_no_overflow() {
        for &eta in &[-30.0, 0.0, 30.0] {
            for &g in &[-30.0, 0.0, 30.0] {
                let [a, b, c] = fisher_zip(eta, g);
                assert!(a.is_finite() && b.is_finite() && c.is_finite(), "({eta},{g})");
                assert!(a >= 0.0 && c >= 0.0);
                assert!(a * c - b * b >= -1e-12 * (a * c).abs());
            }
        }
    }

    #[test]
    fn identity_transform() {
        let base = lgc_expgamma(2.0, 3.0).unwrap();
        let out = transform_lgc(
            &base,
            &DMatrix::identity(1, 1),
            &DMatrix::zeros(1, 2),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!((out.to_dmatrix() - base.to_dmatrix()).abs().max() < 1e-15);
    }

    #[test]
    fn location_shift_keeps_x_block() {
        let base = lgc_normal1d(0.0, 1.5).unwrap();
        let ga = DMatrix::from_row_slice(1, 2, &[0.7, -0.2]);
        let out = transform_lgc(&base, &DMatrix::identity(1, 1), &ga, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(out.get(0, 0), base.get(0, 0));
    }

    #[test]
    fn scaling_transform() {
        let base = lgc_normal1d(0.0, 1.0).unwrap();
        let out = transform_lgc(
            &base,
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::zeros(1, 2),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(out.get(0, 0), 4.0);
        assert!(transform_lgc(
            &base,
            &DMatrix::zeros(1, 1),
            &DMatrix::zeros(1, 2),
            &DMatrix::identity(2, 2)
        )
        .is_err());
    }

    #[test]
    fn transforms_compose() {
        let base = lgc_inverselogitbeta(2.0, 3.0).unwrap();
        let b1 = DMatrix::from_element(1, 1, 1.5);
        let a1 = DMatrix::from_row_slice(1, 2, &[0.3, 0.1]);
        let p1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.4, 0.8]);
        let b2 = DMatrix::from_element(1, 1, -0.7);
        let a2 = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let p2 = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.3, 1.1]);
        let once = transform_lgc(&transform_lgc(&base, &b1, &a1, &p1).unwrap(), &b2, &a2, &p2).unwrap();
        // U = U1 U2
        let b = &b1 * &b2;
        let a = &b1 * &a2 + &a1 * &p2;
        let p = &p1 * &p2;
        let direct = transform_lgc(&base, &b, &a, &p).unwrap();
        assert!((once.to_dmatrix() - direct.to_dmatrix()).abs().max() < 1e-12);
        assert!(once.is_psd());
    }
}
