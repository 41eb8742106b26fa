use rand::Rng;
use rand_distr::StandardNormal;

use super::{c, Synthetic};
use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{Dist, Factors, ModelDef};

/// `q1 ~ N(0, 1)`, `q2 | q1 ~ N(0, e^{-3 q1})`, either as two factors or
/// as one joint factor.
#[derive(Clone, Debug, Default)]
pub struct Funnel {
    pub joint: bool,
}

impl ModelDef for Funnel {
    fn dim(&self) -> usize {
        2
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        if self.joint {
            out.push("funnel", 0, Dist::FunnelJoint, q.to_vec(), Vec::new());
        } else {
            out.normal_const("q1", 0, q[0].clone(), 0.0, 1.0);
            out.normal("q2", 0, q[1].clone(), c(0.0), (&q[0] * -1.5).exp());
        }
        Ok(())
    }
}

/// `y_i ~ N(θ₁ + θ₂², 1)` with `θ ~ N(0, 100 I)`.
#[derive(Clone, Debug)]
pub struct Bc {
    y: Vec<f64>,
}

impl Bc {
    pub fn new(y: Vec<f64>) -> Self {
        Bc { y }
    }
}

impl ModelDef for Bc {
    fn dim(&self) -> usize {
        2
    }

    fn coord_names(&self) -> Vec<String> {
        vec!["theta1".into(), "theta2".into()]
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let mu = &q[0] + &q[1].square();
        for (i, &y) in self.y.iter().enumerate() {
            out.normal("y", i, c(y), mu.clone(), c(1.0));
        }
        out.normal_const("prior", 0, q[0].clone(), 0.0, 10.0);
        out.normal_const("prior", 1, q[1].clone(), 0.0, 10.0);
        Ok(())
    }
}

pub(super) fn generate_bc<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Synthetic {
    let (t1, t2) = (0.5, 1.0);
    let y = (0..n).map(|_| t1 + t2 * t2 + rng.sample::<f64, _>(StandardNormal)).collect();
    Synthetic {
        data: Table {
            names: vec!["y".into()],
            columns: vec![y],
        },
        truth: vec![("theta1".into(), t1), ("theta2".into(), t2)],
    }
}

/// `λ ~ N(0, 3²)`, `z | λ ~ N(0, e^{-λ})`, `y | z ~ N(z, 1)`.
#[derive(Clone, Debug, Default)]
pub struct Hierarchical {
    pub y: f64,
}

impl ModelDef for Hierarchical {
    fn dim(&self) -> usize {
        2
    }

    fn coord_names(&self) -> Vec<String> {
        vec!["lambda".into(), "z".into()]
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        out.normal_const("lambda", 0, q[0].clone(), 0.0, 3.0);
        out.normal("z", 0, q[1].clone(), c(0.0), (&q[0] * -0.5).exp());
        out.normal("y", 0, c(self.y), q[1].clone(), c(1.0));
        Ok(())
    }
}

/// Pairwise differences of `q ∈ R³` are `N(0, κ⁻¹)`; with `tau`, each
/// coordinate also gets an `N(0, τ⁻¹)` factor.
#[derive(Clone, Debug)]
pub struct Intrinsic {
    kappa: f64,
    tau: Option<f64>,
}

impl Intrinsic {
    pub fn new(kappa: f64, tau: Option<f64>) -> Result<Self> {
        if !(kappa > 0.0) || tau.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config(format!(
                "kappa and tau must be positive, got {kappa} and {tau:?}"
            )));
        }
        Ok(Intrinsic { kappa, tau })
    }
}

impl ModelDef for Intrinsic {
    fn dim(&self) -> usize {
        3
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let sd = self.kappa.powf(-0.5);
        for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
            out.normal_const("diff", k, &q[i] - &q[j], 0.0, sd);
        }
        if let Some(tau) = self.tau {
            for (i, qi) in q.iter().enumerate() {
                out.normal_const("proper", i, qi.clone(), 0.0, tau.powf(-0.5));
            }
        }
        Ok(())
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        Some(vec![0.1, -0.1, 0.05])
    }
}

/// Independent normals.
#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != sd.len() || sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("Gaussian needs matching mean and positive sd".into()));
        }
        Ok(Gaussian { mean, sd })
    }

    pub fn standard(d: usize) -> Self {
        Gaussian {
            mean: vec![0.0; d],
            sd: vec![1.0; d],
        }
    }
}

impl ModelDef for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        for (i, qi) in q.iter().enumerate() {
            out.normal_const("q", i, qi.clone(), self.mean[i], self.sd[i]);
        }
        Ok(())
    }
}
