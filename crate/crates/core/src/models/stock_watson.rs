use rand::Rng;
use rand_distr::StandardNormal;

use super::{diffs, variance, Synthetic};
use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{Factors, ModelDef, Storage};

pub const INIT_SD: f64 = 10.0;

/// Local level `y_t ~ N(τ_t, e^{x_t})`, `τ_t ~ N(τ_{t-1}, e^{z_{t-1}})`
/// with random walk log-variances `z` and `x` sharing innovation scale σ;
/// `σ⁻² ~ Gamma(5, rate 0.5)` and `N(0, 10²)` on `z_1`, `x_1` and `τ_1`.
///
/// With fixed volatilities only `τ` is sampled.
#[derive(Clone, Debug)]
pub struct StockWatson {
    y: Vec<f64>,
    fixed: Option<(f64, f64)>,
}

impl StockWatson {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::InvalidModel("model needs at least two observations".into()));
        }
        Ok(StockWatson { y, fixed: None })
    }

    /// Log-variances held at `z` (trend) and `x` (observation).
    pub fn fixed(y: Vec<f64>, z: f64, x: f64) -> Result<Self> {
        let mut m = Self::new(y)?;
        m.fixed = Some((z, x));
        Ok(m)
    }

    fn t(&self) -> usize {
        self.y.len()
    }
}

impl ModelDef for StockWatson {
    fn dim(&self) -> usize {
        match self.fixed {
            Some(_) => self.t(),
            None => 3 * self.t(),
        }
    }

    fn coord_names(&self) -> Vec<String> {
        let t = self.t();
        let tau = (1..=t).map(|i| format!("tau{i}"));
        if self.fixed.is_some() {
            return tau.collect();
        }
        let mut v: Vec<String> = (1..t).map(|i| format!("z{i}")).collect();
        v.extend((1..=t).map(|i| format!("x{i}")));
        v.extend(tau);
        v.push("log_prec".into());
        v
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let t = self.t();
        if let Some((zf, xf)) = self.fixed {
            let tau_sd = (0.5 * zf).exp();
            let y_sd = (0.5 * xf).exp();
            out.normal_const("tau", 0, q[0].clone(), 0.0, INIT_SD);
            for i in 1..t {
                out.normal("tau", i, q[i].clone(), q[i - 1].clone(), SparseDual::constant(tau_sd));
            }
            for (i, &y) in self.y.iter().enumerate() {
                out.normal("y", i, SparseDual::constant(y), q[i].clone(), SparseDual::constant(y_sd));
            }
            return Ok(());
        }
        let z = &q[..t - 1];
        let x = &q[t - 1..2 * t - 1];
        let tau = &q[2 * t - 1..3 * t - 1];
        let lp = &q[3 * t - 1];
        out.expgamma("log_prec", 0, lp.clone(), SparseDual::constant(5.0), SparseDual::constant(2.0));
        let sigma = (lp * -0.5).exp();
        out.normal_const("z", 0, z[0].clone(), 0.0, INIT_SD);
        for i in 1..t - 1 {
            out.normal("z", i, z[i].clone(), z[i - 1].clone(), sigma.clone());
        }
        out.normal_const("x", 0, x[0].clone(), 0.0, INIT_SD);
        for i in 1..t {
            out.normal("x", i, x[i].clone(), x[i - 1].clone(), sigma.clone());
        }
        out.normal_const("tau", 0, tau[0].clone(), 0.0, INIT_SD);
        for i in 1..t {
            out.normal("tau", i, tau[i].clone(), tau[i - 1].clone(), (&z[i - 1] * 0.5).exp());
        }
        for (i, &y) in self.y.iter().enumerate() {
            out.normal("y", i, SparseDual::constant(y), tau[i].clone(), (&x[i] * 0.5).exp());
        }
        Ok(())
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        let t = self.t();
        if self.fixed.is_some() {
            return Some(self.y.clone());
        }
        let lv = (0.5 * variance(&diffs(&self.y))).max(1e-8).ln();
        let mut q = vec![lv; t - 1];
        q.extend(std::iter::repeat_n(lv, t));
        q.extend(self.y.iter().copied());
        q.push(10f64.ln());
        Some(q)
    }

    fn storage(&self) -> Storage {
        Storage::Sparse
    }
}

pub(super) fn generate<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Synthetic {
    let sigma = 0.3;
    let (mut z, mut x, mut tau) = (-1.0, -0.5, 2.0);
    let mut y = Vec::with_capacity(t);
    for i in 0..t {
        if i > 0 {
            tau += (0.5 * z).exp() * rng.sample::<f64, _>(StandardNormal);
            z += sigma * rng.sample::<f64, _>(StandardNormal);
            x += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        y.push(tau + (0.5 * x).exp() * rng.sample::<f64, _>(StandardNormal));
    }
    Synthetic {
        data: Table {
            names: vec!["y".into()],
            columns: vec![y],
        },
        truth: vec![("sigma".into(), sigma)],
    }
}

/// Posterior means and variances of a local level model with prior
/// `τ_1 ~ N(0, p0)`, by Kalman filtering and RTS smoothing.
pub fn local_level_smoother(y: &[f64], q_var: f64, r_var: f64, p0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let (mut mf, mut pf) = (vec![0.0; n], vec![0.0; n]);
    let (mut mp, mut pp) = (0.0, p0);
    for i in 0..n {
        if i > 0 {
            mp = mf[i - 1];
            pp = pf[i - 1] + q_var;
        }
        let k = pp / (pp + r_var);
        mf[i] = mp + k * (y[i] - mp);
        pf[i] = (1.0 - k) * pp;
    }
    let (mut ms, mut ps) = (mf.clone(), pf.clone());
    for i in (0..n.saturating_sub(1)).rev() {
        let pred = pf[i] + q_var;
        let g = pf[i] / pred;
        ms[i] = mf[i] + g * (ms[i + 1] - mf[i]);
        ps[i] = pf[i] + g * g * (ps[i + 1] - pred);
    }
    (ms, ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, Target};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn smoother_matches_dense_gaussian_posterior() {
        let y = [1.0, 0.4, 2.2, 1.7, -0.3];
        let (q, r, p0) = (0.5, 1.3, 100.0);
        let n = y.len();
        let mut prec = DMatrix::zeros(n, n);
        prec[(0, 0)] += 1.0 / p0;
        for i in 1..n {
            prec[(i, i)] += 1.0 / q;
            prec[(i - 1, i - 1)] += 1.0 / q;
            prec[(i, i - 1)] -= 1.0 / q;
            prec[(i - 1, i)] -= 1.0 / q;
        }
        for i in 0..n {
            prec[(i, i)] += 1.0 / r;
        }
        let cov = prec.try_inverse().unwrap();
        let mean: DVector<f64> = &cov * DVector::from_iterator(n, y.iter().map(|v| v / r));
        let (m, v) = local_level_smoother(&y, q, r, p0);
        for i in 0..n {
            assert_relative_eq!(m[i], mean[i], epsilon = 1e-10);
            assert_relative_eq!(v[i], cov[(i, i)], epsilon = 1e-10);
        }
    }

    #[test]
    fn fixed_variant_metric_is_posterior_precision() {
        let y = vec![0.1, -0.2, 0.4];
        let m = Model::new(StockWatson::fixed(y, 0.0, 2f64.ln()).unwrap()).unwrap();
        let g = m.metric(&[0.0; 3]).unwrap().to_dense();
        assert_relative_eq!(g[(0, 0)], 0.01 + 1.0 + 0.5, epsilon = 1e-12);
        assert_relative_eq!(g[(1, 1)], 2.0 + 0.5, epsilon = 1e-12);
        assert_relative_eq!(g[(1, 0)], -1.0, epsilon = 1e-12);
        assert_eq!(g[(2, 0)], 0.0);
    }

    #[test]
    fn full_layout_dimension_and_pattern() {
        let y: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let sw = StockWatson::new(y).unwrap();
        assert_eq!(sw.dim(), 24);
        assert_eq!(sw.coord_names()[7], "x1");
        let m = Model::new(sw).unwrap();
        assert!(m.layout().is_sparse());
        // scale parameters enter only through σ, which has no cross term with
        // the mean in the normal LGC: z is decoupled from τ and log_prec only
        // sits on the diagonal
        let (z0, tau0, lp) = (0, 15, 23);
        assert!(m.layout().position(1, z0).is_some());
        assert!(m.layout().position(lp, z0).is_none());
        assert!(m.layout().position(lp, lp).is_some());
        assert!(m.layout().position(tau0 + 1, tau0).is_some());
        assert!(m.layout().position(tau0 + 1, z0).is_none());
        assert!(m.layout().position(2, z0).is_none());
    }
}
