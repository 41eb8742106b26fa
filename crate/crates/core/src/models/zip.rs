use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::{c, lincomb, Synthetic};
use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{Dist, Factors, ModelDef, Storage};

/// Zero-inflated Poisson regression. The log mean is `X β_η + b_site`, the
/// zero-inflation logit is `X β_g`; `b ~ N(0, σ²)` and `σ² ~ Exp(1)`.
#[derive(Clone, Debug)]
pub struct Zip {
    counts: Vec<f64>,
    site: Vec<usize>,
    n_sites: usize,
    /// Row-major design, `n × k`.
    x: Vec<Vec<f64>>,
    k: usize,
}

const BETA_SD: f64 = 10.0;

impl Zip {
    pub fn new(counts: Vec<f64>, site: Vec<usize>, x: Vec<Vec<f64>>) -> Result<Self> {
        let n = counts.len();
        if site.len() != n || x.len() != n {
            return Err(Error::Dimension {
                context: "zip data rows",
                expected: n,
                got: site.len().min(x.len()),
            });
        }
        if let Some(c) = counts.iter().find(|c| **c < 0.0 || c.fract() != 0.0) {
            return Err(Error::InvalidModel(format!("counts must be non-negative integers, got {c}")));
        }
        let k = x.first().map_or(1, |r| r.len());
        if x.iter().any(|r| r.len() != k) || k == 0 {
            return Err(Error::InvalidModel("design rows must have equal, non-zero length".into()));
        }
        let n_sites = site.iter().max().map_or(0, |m| m + 1);
        Ok(Zip {
            counts,
            site,
            n_sites,
            x,
            k,
        })
    }

    /// Columns: `count`, `site` (integer labels), and design columns whose
    /// names start with `x`. Without design columns an intercept is used.
    pub fn from_table(t: &Table) -> Result<Self> {
        let counts = t.require("count")?.to_vec();
        let raw = t.require("site")?;
        let mut labels: Vec<i64> = Vec::with_capacity(raw.len());
        for &s in raw {
            if s.fract() != 0.0 {
                return Err(Error::InvalidModel(format!("site labels must be integers, got {s}")));
            }
            labels.push(s as i64);
        }
        let mut uniq = labels.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let site = labels.iter().map(|l| uniq.binary_search(l).unwrap()).collect();
        let cols: Vec<&[f64]> = t
            .names
            .iter()
            .zip(&t.columns)
            .filter(|(n, _)| n.starts_with('x'))
            .map(|(_, c)| c.as_slice())
            .collect();
        let x = (0..counts.len())
            .map(|i| if cols.is_empty() { vec![1.0] } else { cols.iter().map(|c| c[i]).collect() })
            .collect();
        Zip::new(counts, site, x)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_covariates(&self) -> usize {
        self.k
    }
}

impl ModelDef for Zip {
    fn dim(&self) -> usize {
        1 + self.n_sites + 2 * self.k
    }

    fn coord_names(&self) -> Vec<String> {
        let mut v = vec!["log_sigma2".to_string()];
        v.extend((1..=self.n_sites).map(|j| format!("b{j}")));
        v.extend((1..=self.k).map(|j| format!("beta_eta{j}")));
        v.extend((1..=self.k).map(|j| format!("beta_g{j}")));
        v
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
        let s = self.n_sites;
        let b = &q[1..1 + s];
        let be = &q[1 + s..1 + s + self.k];
        let bg = &q[1 + s + self.k..];
        out.expgamma("log_sigma2", 0, q[0].clone(), c(1.0), c(1.0));
        let sigma = (&q[0] * 0.5).exp();
        for (j, bj) in b.iter().enumerate() {
            out.normal("b", j, bj.clone(), c(0.0), sigma.clone());
        }
        for (j, v) in be.iter().enumerate() {
            out.normal_const("beta_eta", j, v.clone(), 0.0, BETA_SD);
        }
        for (j, v) in bg.iter().enumerate() {
            out.normal_const("beta_g", j, v.clone(), 0.0, BETA_SD);
        }
        for (i, row) in self.x.iter().enumerate() {
            let eta = &lincomb(be.iter().zip(row.iter().copied())) + &b[self.site[i]];
            let g = lincomb(bg.iter().zip(row.iter().copied()));
            out.push("y", i, Dist::ZeroInflatedPoisson, vec![c(self.counts[i])], vec![eta, g]);
        }
        Ok(())
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        let mut q = vec![0.0; self.dim()];
        let pos: Vec<f64> = self.counts.iter().copied().filter(|&c| c > 0.0).collect();
        if !pos.is_empty() {
            q[1 + self.n_sites] = super::mean(&pos).ln();
        }
        Some(q)
    }

    fn storage(&self) -> Storage {
        Storage::Dense
    }
}

pub(super) fn generate<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Synthetic> {
    let n_sites = 10;
    let sigma = 0.8;
    let beta_eta = [0.7, 0.4];
    let beta_g = [-0.8, 0.5];
    let b: Vec<f64> = (0..n_sites).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    for i in 0..n {
        let site = i % n_sites;
        let x1: f64 = rng.sample(StandardNormal);
        let eta = beta_eta[0] + beta_eta[1] * x1 + b[site];
        let g = beta_g[0] + beta_g[1] * x1;
        let zero = rng.random::<f64>() < 1.0 / (1.0 + (-g).exp());
        let count = if zero {
            0.0
        } else {
            Poisson::new(eta.exp()).map_err(|e| Error::domain(e.to_string()))?.sample(rng)
        };
        cols[0].push(count);
        cols[1].push(site as f64);
        cols[2].push(1.0);
        cols[3].push(x1);
    }
    let names = ["count", "site", "x0", "x1"].map(String::from).to_vec();
    Ok(Synthetic {
        data: Table::new(names, cols)?,
        truth: vec![
            ("sigma".into(), sigma),
            ("beta_eta1".into(), beta_eta[0]),
            ("beta_eta2".into(), beta_eta[1]),
            ("beta_g1".into(), beta_g[0]),
            ("beta_g2".into(), beta_g[1]),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, Target};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn sigma_entry_includes_prior_term() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let syn = generate(40, &mut rng).unwrap();
        let z = Zip::from_table(&syn.data).unwrap();
        let s = z.n_sites() as f64;
        let m = Model::new(z).unwrap();
        let q = m.init_point().unwrap();
        let g = m.metric(&q).unwrap().to_dense();
        // ExpGamma(1, ·) contributes α = 1; each b_j ~ N(0, e^{q0}) adds 1/2
        assert_relative_eq!(g[(0, 0)], 1.0 + 0.5 * s, epsilon = 1e-12);
    }

    #[test]
    fn site_labels_are_compacted() {
        let t = Table::new(
            vec!["count".into(), "site".into()],
            vec![vec![0.0, 2.0, 1.0], vec![7.0, 3.0, 7.0]],
        )
        .unwrap();
        let z = Zip::from_table(&t).unwrap();
        assert_eq!(z.n_sites(), 2);
        assert_eq!(z.n_covariates(), 1);
        assert_eq!(z.site, vec![1, 0, 1]);
    }

    #[test]
    fn fractional_count_rejected() {
        assert!(Zip::new(vec![1.5], vec![0], vec![vec![1.0]]).is_err());
    }
}
