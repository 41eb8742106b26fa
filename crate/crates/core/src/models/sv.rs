use rand::Rng;
use rand_distr::StandardNormal;

use super::{c, Synthetic};
use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{Dist, Factors, ModelDef, Storage};

const Z0_SD: f64 = 10.0;

/// Random walk log-volatility `z_t ~ N(z_{t-1}, σ²)` with leverage
/// `y_t ~ N(ρ e^{z_{t-1}/2} (z_t − z_{t-1})/σ, e^{z_{t-1}} (1 − ρ²))`.
/// `ρ = −1 + 2 logistic(r)` with `ρ ~ U(−1, 1)`, `σ² ~ 0.1/χ²₁₀`,
/// `z_0 ~ N(0, 10²)`.
///
/// The noncentered layout samples `z̄_t = (z_t − z_{t-1})/σ` instead of
/// `z_t` for `t ≥ 1`.
#[derive(Clone, Debug)]
pub struct SvLeverage {
    y: Vec<f64>,
    noncentered: bool,
}

impl SvLeverage {
    pub fn new(y: Vec<f64>, noncentered: bool) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidModel("stochastic volatility needs at least one return".into()));
        }
        Ok(SvLeverage { y, noncentered })
    }

    fn t(&self) -> usize {
        self.y.len()
    }
}

/// `(ρ, σ)` at `q`.
pub(super) fn derived(q: &[f64], t: usize) -> [f64; 2] {
    let l = 1.0 / (1.0 + (-q[t + 1]).exp());
    [2.0 * l - 1.0, q[t + 2].exp()]
}

impl ModelDef for SvLeverage {
    fn dim(&self) -> usize {
        self.t() + 3
    }

    fn coord_names(&self) -> Vec<String> {
        let z = if self.noncentered { "zbar" } else { "z" };
        let mut v: Vec<String> = (0..=self.t()).map(|i| format!("{z}{i}")).collect();
        v.push("r".into());
        v.push("log_sigma".into());
        v
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let t = self.t();
        let r = &q[t + 1];
        let s = &q[t + 2];
        out.push("r", 0, Dist::InverseLogitBeta, vec![r.clone()], vec![c(1.0), c(1.0)]);
        // 0.1/σ² ~ Gamma(5, scale 2); the map s ↦ ln 0.1 − 2s has constant Jacobian
        out.expgamma("log_sigma", 0, &(s * -2.0) + 0.1f64.ln(), c(5.0), c(2.0));
        let sigma = s.exp();
        let rho = &(&r.logistic() * 2.0) - 1.0;
        let sd_scale = &(&r.logistic() * &(-r).logistic()).sqrt() * 2.0;
        out.normal_const("z0", 0, q[0].clone(), 0.0, Z0_SD);
        let mut z_prev = q[0].clone();
        for i in 1..=t {
            let (z, innov) = if self.noncentered {
                out.normal_const("zbar", i, q[i].clone(), 0.0, 1.0);
                (&z_prev + &(&sigma * &q[i]), q[i].clone())
            } else {
                out.normal("z", i, q[i].clone(), z_prev.clone(), sigma.clone());
                (q[i].clone(), &(&q[i] - &z_prev) / &sigma)
            };
            let vol = (&z_prev * 0.5).exp();
            let mu = &(&rho * &vol) * &innov;
            out.normal("y", i - 1, c(self.y[i - 1]), mu, &vol * &sd_scale);
            z_prev = z;
        }
        Ok(())
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        let t = self.t();
        let level = (self.y.iter().map(|v| v * v).sum::<f64>() / t as f64).max(1e-12).ln();
        let mut q = vec![0.0; t + 3];
        if self.noncentered {
            q[0] = level;
        } else {
            q[..=t].fill(level);
        }
        q[t + 2] = 0.1f64.ln();
        Some(q)
    }

    fn storage(&self) -> Storage {
        if self.noncentered {
            Storage::Dense
        } else {
            Storage::Sparse
        }
    }
}

pub(super) fn generate<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Synthetic {
    let (rho, sigma) = (-0.4, 0.15);
    let mut z = 0.0;
    let y = (0..t)
        .map(|_| {
            let eps: f64 = rng.sample(StandardNormal);
            let xi: f64 = rng.sample(StandardNormal);
            let y = (0.5 * z).exp() * (rho * eps + (1.0f64 - rho * rho).sqrt() * xi);
            z += sigma * eps;
            y
        })
        .collect();
    Synthetic {
        data: Table {
            names: vec!["y".into()],
            columns: vec![y],
        },
        truth: vec![("rho".into(), rho), ("sigma".into(), sigma)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, Target};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn data() -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        generate(15, &mut rng).data.columns[0].clone()
    }

    #[test]
    fn zero_rho_reduces_observation_to_scale_only() {
        let y = data();
        let m = SvLeverage::new(y.clone(), false).unwrap();
        let mut q: Vec<f64> = (0..=y.len()).map(|i| 0.1 * i as f64 - 0.5).collect();
        q.push(0.0);
        q.push(-1.0);
        let mut f = Factors::new();
        m.factors(&SparseDual::<f64>::untracked(&q), &mut f).unwrap();
        for fac in f.iter().filter(|f| f.label == "y") {
            let t = fac.index + 1;
            assert_relative_eq!(fac.param[0].value(), 0.0, epsilon = 1e-15);
            assert_relative_eq!(fac.param[1].value(), (0.5 * q[t - 1]).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn centered_and_noncentered_agree_up_to_jacobian() {
        let y = data();
        let t = y.len();
        let a = Model::new(SvLeverage::new(y.clone(), false).unwrap()).unwrap();
        let b = Model::new(SvLeverage::new(y, true).unwrap()).unwrap();
        let mut z: Vec<f64> = (0..=t).map(|i| (i as f64 * 0.7).sin()).collect();
        z.extend([0.3, -1.7]);
        let sigma = z[t + 2].exp();
        let mut zbar = z.clone();
        for i in 1..=t {
            zbar[i] = (z[i] - z[i - 1]) / sigma;
        }
        // dz/dz̄ is triangular with σ on the diagonal
        let jac = t as f64 * sigma.ln();
        assert_relative_eq!(a.log_density(&z).unwrap() + jac, b.log_density(&zbar).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn centered_metric_is_arrowhead() {
        let m = Model::new(SvLeverage::new(data(), false).unwrap()).unwrap();
        let t = 15;
        for i in 0..=t {
            for j in 0..i {
                let expect = i - j == 1;
                assert_eq!(m.layout().position(i, j).is_some(), expect, "({i},{j})");
            }
            assert!(m.layout().position(t + 1, i).is_some());
            assert!(m.layout().position(t + 2, i).is_some());
        }
    }
}
