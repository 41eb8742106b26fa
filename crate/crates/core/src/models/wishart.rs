use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{c, Synthetic};
use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{Dist, Factors, ModelDef, Storage};
use crate::spd::{self, omega_len};

/// `P_t | P_{t-1} ~ W(ν⁻¹ P_{t-1}, ν)`, `y_t ~ N(0, P_t⁻¹)`, with
/// `P_1 ~ W(I/ν₀, ν₀)`, `ν₀ = p + 2`, and `ν ~ N(mean, sd²)`. Each `P_t`
/// is held in its P-representation `ω_t`.
#[derive(Clone, Debug)]
pub struct WishartSv {
    y: Vec<Vec<f64>>,
    p: usize,
    joint: bool,
    nu_prior: (f64, f64),
}

impl WishartSv {
    /// `joint` uses one factor per transition; otherwise the transition is
    /// split into ExpGamma and Gaussian column factors.
    pub fn new(y: Vec<Vec<f64>>, joint: bool, nu_prior: (f64, f64)) -> Result<Self> {
        let p = y.first().map_or(0, |r| r.len());
        if p == 0 || y.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidModel("returns must be non-empty rows of equal length".into()));
        }
        if !(nu_prior.1 > 0.0) {
            return Err(Error::Config(format!("nu_sd must be positive, got {}", nu_prior.1)));
        }
        Ok(WishartSv { y, p, joint, nu_prior })
    }

    fn m(&self) -> usize {
        omega_len(self.p)
    }
}

/// Return vectors from columns whose names start with `y`.
pub(super) fn returns_from_table(t: &Table) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<&Vec<f64>> = t.names.iter().zip(&t.columns).filter(|(n, _)| n.starts_with('y')).map(|(_, c)| c).collect();
    if cols.is_empty() {
        return Err(Error::InvalidModel(format!(
            "data has no return columns named y* (found: {})",
            t.names.join(", ")
        )));
    }
    Ok((0..t.n_rows()).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

impl ModelDef for WishartSv {
    fn dim(&self) -> usize {
        self.y.len() * self.m() + 1
    }

    fn coord_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.y.len())
            .flat_map(|t| (1..=self.m()).map(move |k| format!("omega{t}_{k}")))
            .collect();
        v.push("nu".into());
        v
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let m = self.m();
        let nu = &q[q.len() - 1];
        out.normal_const("nu", 0, nu.clone(), self.nu_prior.0, self.nu_prior.1);
        let nu0 = (self.p + 2) as f64;
        let w: Vec<SparseDual<T>> = vec![c(1.0 / nu0); self.p];
        spd::wishart_diag_factors(out, "omega1", &q[..m], &c(nu0), &w)?;
        for t in 1..self.y.len() {
            let x = &q[t * m..(t + 1) * m];
            let y = &q[(t - 1) * m..t * m];
            spd::wishart_prep_factors(out, "transition", t, x, y, nu, self.joint)?;
        }
        for (t, yt) in self.y.iter().enumerate() {
            let mut param: Vec<SparseDual<T>> = vec![c(0.0); self.p];
            param.push(c(1.0));
            param.extend_from_slice(&q[t * m..(t + 1) * m]);
            out.push("y", t, Dist::MvNormalPrecisionP(self.p), yt.iter().map(|&v| c(v)).collect(), param);
        }
        Ok(())
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        let mut q = vec![0.0; self.dim()];
        q[self.dim() - 1] = self.nu_prior.0;
        Some(q)
    }

    fn storage(&self) -> Storage {
        Storage::Sparse
    }
}

/// Draws `P ~ W(V, ν)` by the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(v: &DMatrix<f64>, nu: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    if !(nu > (n - 1) as f64) {
        return Err(Error::domain(format!("Wishart degrees of freedom {nu} must exceed {}", n - 1)));
    }
    let l = v.clone().cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?.l();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new(nu - i as f64).map_err(|e| Error::domain(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * a;
    Ok(&la * la.transpose())
}

pub(super) fn generate<R: Rng + ?Sized>(p: usize, t: usize, nu: f64, rng: &mut R) -> Result<Synthetic> {
    let nu0 = (p + 2) as f64;
    let mut prec = sample_wishart(&(DMatrix::identity(p, p) / nu0), nu0, rng)?;
    let mut cols = vec![Vec::with_capacity(t); p];
    for i in 0..t {
        if i > 0 {
            prec = sample_wishart(&(&prec / nu), nu, rng)?;
        }
        // y = L⁻ᵀ e with P = L Lᵀ has covariance P⁻¹
        let l = prec.clone().cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?.l();
        let e = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = l.transpose().solve_upper_triangular(&e).ok_or(Error::Singular("precision factor"))?;
        for k in 0..p {
            cols[k].push(y[k]);
        }
    }
    let names = (1..=p).map(|k| format!("y{k}")).collect();
    Ok(Synthetic {
        data: Table::new(names, cols)?,
        truth: vec![("nu".into(), nu)],
    })
}
