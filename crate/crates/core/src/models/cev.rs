use rand::Rng;
use rand_distr::StandardNormal;

use super::{c, diffs, mean, variance, Synthetic};
use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{Factors, ModelDef, Storage};

pub const DELTA: f64 = 1.0 / 252.0;
const X1_MEAN: f64 = 0.09569;
const X1_SD: f64 = 0.01;

/// Euler-discretized CEV short rate
/// `x_t ~ N(x_{t-1} + Δ(α − β x_{t-1}), σ_x² Δ x_{t-1}^{2γ})` observed as
/// `y_t ~ N(x_t, σ_y²)`. `α ~ N(0, 100Δ⁻²)`, `β ~ N(Δ⁻¹, 100Δ⁻²)`; flat on
/// `log σ_x²`, `log σ_y²` and γ.
#[derive(Clone, Debug)]
pub struct Cev {
    y: Vec<f64>,
}

impl Cev {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::InvalidModel("CEV needs at least two observations".into()));
        }
        Ok(Cev { y })
    }
}

/// `(α, β, σ_x, γ, σ_y)` at `q`.
pub(super) fn derived(q: &[f64], t: usize) -> [f64; 5] {
    [q[t], q[t + 1], (0.5 * q[t + 2]).exp(), q[t + 3], (0.5 * q[t + 4]).exp()]
}

impl ModelDef for Cev {
    fn dim(&self) -> usize {
        self.y.len() + 5
    }

    fn coord_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.y.len()).map(|i| format!("x{i}")).collect();
        v.extend(["alpha", "beta", "log_sigma_x2", "gamma", "log_sigma_y2"].map(String::from));
        v
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let t = self.y.len();
        let x = &q[..t];
        let (alpha, beta, lsx, gamma, lsy) = (&q[t], &q[t + 1], &q[t + 2], &q[t + 3], &q[t + 4]);
        out.normal_const("alpha", 0, alpha.clone(), 0.0, 10.0 / DELTA);
        out.normal_const("beta", 0, beta.clone(), 1.0 / DELTA, 10.0 / DELTA);
        out.normal_const("x", 0, x[0].clone(), X1_MEAN, X1_SD);
        let sx = &(lsx * 0.5).exp() * DELTA.sqrt();
        for i in 1..t {
            let prev = &x[i - 1];
            let mu = prev + &(&(alpha - &(beta * prev)) * DELTA);
            let sd = &sx * &(gamma * &prev.ln()).exp();
            out.normal("x", i, x[i].clone(), mu, sd);
        }
        let sy = (lsy * 0.5).exp();
        for (i, &y) in self.y.iter().enumerate() {
            out.normal("y", i, c(y), x[i].clone(), sy.clone());
        }
        Ok(())
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        let t = self.y.len();
        let mut q: Vec<f64> = self.y.iter().map(|v| v.max(1e-4)).collect();
        let d = diffs(&self.y);
        let dv = variance(&d).max(1e-16);
        let level = mean(&self.y).abs().max(1e-4);
        q.extend([0.0, 0.0, (dv / (DELTA * level * level)).ln(), 1.0, (0.1 * dv).ln()]);
        debug_assert_eq!(q.len(), t + 5);
        Some(q)
    }

    fn storage(&self) -> Storage {
        Storage::Sparse
    }
}

pub(super) fn generate<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Result<Synthetic> {
    let (alpha, beta, sigma_x, gamma, sigma_y) = (0.01, 0.17, 0.4, 1.2, 0.001);
    let mut x = X1_MEAN + X1_SD * rng.sample::<f64, _>(StandardNormal);
    let mut y = Vec::with_capacity(t);
    for i in 0..t {
        if i > 0 {
            let e: f64 = rng.sample(StandardNormal);
            x += DELTA * (alpha - beta * x) + sigma_x * DELTA.sqrt() * x.powf(gamma) * e;
            if x <= 0.0 {
                return Err(Error::domain("simulated short rate left (0, ∞)"));
            }
        }
        y.push(x + sigma_y * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(Synthetic {
        data: Table {
            names: vec!["y".into()],
            columns: vec![y],
        },
        truth: vec![
            ("alpha".into(), alpha),
            ("beta".into(), beta),
            ("sigma_x".into(), sigma_x),
            ("gamma".into(), gamma),
            ("sigma_y".into(), sigma_y),
        ],
    })
}
