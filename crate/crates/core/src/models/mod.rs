//! Built-in models, their coordinate layouts and seeded synthetic data.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ad::{Real, SparseDual};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::{MetricOptions, Model, ModelDef, Storage, Target};
use crate::sampler::Mode;

mod cev;
mod small;
mod stock_watson;
mod sv;
mod wishart;
mod zip;

pub use cev::Cev;
pub use small::{Bc, Funnel, Gaussian, Hierarchical, Intrinsic};
pub use stock_watson::{local_level_smoother, StockWatson, INIT_SD as STOCK_WATSON_INIT_SD};
pub use sv::SvLeverage;
pub use wishart::{sample_wishart, WishartSv};
pub use zip::Zip;

pub(crate) fn c<T: Real>(v: f64) -> SparseDual<T> {
    SparseDual::constant(v)
}

/// `Σ w_k x_k` skipping zero weights.
pub(crate) fn lincomb<'a, T: Real + 'a>(terms: impl IntoIterator<Item = (&'a SparseDual<T>, f64)>) -> SparseDual<T> {
    let mut acc = c(0.0);
    for (x, w) in terms {
        if w != 0.0 {
            acc = &acc + &(x * w);
        }
    }
    acc
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 1.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub(crate) fn diffs(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Catalog metadata for one built-in model.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Coordinate layout of q.
    pub q_layout: &'static str,
    pub variants: &'static [&'static str],
    /// Hyperparameters and their defaults.
    pub params: &'static [(&'static str, f64)],
    pub storage: Storage,
    /// Whether the model reads a data table.
    pub needs_data: bool,
    /// Default series length of the synthetic generator.
    pub default_length: usize,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "funnel",
        summary: "q1 ~ N(0,1), q2 | q1 ~ N(0, exp(-3 q1))",
        q_layout: "(q1, q2)",
        variants: &["factored", "joint"],
        params: &[],
        storage: Storage::Dense,
        needs_data: false,
        default_length: 0,
    },
    CatalogEntry {
        name: "bc",
        summary: "y_i ~ N(theta1 + theta2^2, 1), theta ~ N(0, 100 I)",
        q_layout: "(theta1, theta2)",
        variants: &[],
        params: &[],
        storage: Storage::Dense,
        needs_data: true,
        default_length: 20,
    },
    CatalogEntry {
        name: "hierarchical",
        summary: "lambda ~ N(0, 9), z | lambda ~ N(0, exp(-lambda)), y | z ~ N(z, 1)",
        q_layout: "(lambda, z)",
        variants: &[],
        params: &[("y", 0.0)],
        storage: Storage::Dense,
        needs_data: false,
        default_length: 0,
    },
    CatalogEntry {
        name: "intrinsic",
        summary: "pairwise differences of q in R^3 ~ N(0, 1/kappa), optional N(0, 1/tau) on each q",
        q_layout: "(q1, q2, q3)",
        variants: &[],
        params: &[("kappa", 1.0), ("tau", 1.0)],
        storage: Storage::Dense,
        needs_data: false,
        default_length: 0,
    },
    CatalogEntry {
        name: "standard_normal",
        summary: "N(0, I_d)",
        q_layout: "(q1, ..., qd)",
        variants: &[],
        params: &[("d", 2.0)],
        storage: Storage::Dense,
        needs_data: false,
        default_length: 0,
    },
    CatalogEntry {
        name: "diag_gaussian",
        summary: "N((3, 3), diag(4, 1))",
        q_layout: "(q1, q2)",
        variants: &[],
        params: &[],
        storage: Storage::Dense,
        needs_data: false,
        default_length: 0,
    },
    CatalogEntry {
        name: "zip",
        summary: "zero-inflated Poisson regression with site random effects",
        q_layout: "(log_sigma2, b[1..S], beta_eta[1..K], beta_g[1..K])",
        variants: &[],
        params: &[],
        storage: Storage::Dense,
        needs_data: true,
        default_length: 150,
    },
    CatalogEntry {
        name: "sv_leverage",
        summary: "random walk stochastic volatility with leverage",
        q_layout: "(z[0..T], r, log_sigma) with rho = -1 + 2 logistic(r); noncentered uses zbar in place of z",
        variants: &["centered", "noncentered"],
        params: &[],
        storage: Storage::Sparse,
        needs_data: true,
        default_length: 100,
    },
    CatalogEntry {
        name: "cev",
        summary: "discretized CEV short rate observed with additive noise",
        q_layout: "(x[1..T], alpha, beta, log_sigma_x2, gamma, log_sigma_y2)",
        variants: &[],
        params: &[],
        storage: Storage::Sparse,
        needs_data: true,
        default_length: 200,
    },
    CatalogEntry {
        name: "stock_watson",
        summary: "unobserved components model with two stochastic volatility processes",
        q_layout: "(z[1..T-1], x[1..T], tau[1..T], log_prec); fixed: (tau[1..T])",
        variants: &["full", "fixed"],
        params: &[("z", 0.0), ("x", 0.0)],
        storage: Storage::Sparse,
        needs_data: true,
        default_length: 100,
    },
    CatalogEntry {
        name: "wishart_sv",
        summary: "Wishart random walk on precision matrices of return vectors",
        q_layout: "(omega_1, ..., omega_T, nu), omega_t of length p(p+1)/2",
        variants: &["rm-j", "rm-f"],
        params: &[("nu_mean", 250.0), ("nu_sd", 20.0)],
        storage: Storage::Sparse,
        needs_data: true,
        default_length: 50,
    },
];

pub fn entry(name: &str) -> Result<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name).ok_or_else(|| {
        let names: Vec<&str> = CATALOG.iter().map(|e| e.name).collect();
        Error::Config(format!("unknown model `{name}`; expected one of: {}", names.join(", ")))
    })
}

impl CatalogEntry {
    /// Hyperparameters with defaults filled in; unknown keys are rejected.
    pub fn resolve_params(&self, given: &BTreeMap<String, f64>) -> Result<BTreeMap<&'static str, f64>> {
        for k in given.keys() {
            if !self.params.iter().any(|(n, _)| n == k) {
                let known: Vec<&str> = self.params.iter().map(|p| p.0).collect();
                return Err(Error::Config(format!(
                    "model `{}` has no parameter `{k}` (known: {})",
                    self.name,
                    if known.is_empty() { "none".to_string() } else { known.join(", ") }
                )));
            }
        }
        Ok(self
            .params
            .iter()
            .map(|&(n, d)| (n, given.get(n).copied().unwrap_or(d)))
            .collect())
    }

    /// The variant to use; `None` picks the default for `mode`.
    pub fn resolve_variant(&self, variant: Option<&str>, mode: Mode) -> Result<Option<&'static str>> {
        match variant {
            None if self.name == "sv_leverage" && mode == Mode::Em => Ok(Some("noncentered")),
            None => Ok(self.variants.first().copied()),
            Some(v) => self
                .variants
                .iter()
                .find(|x| x.eq_ignore_ascii_case(v))
                .map(|x| Some(*x))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "model `{}` has no variant `{v}`{}",
                        self.name,
                        if self.variants.is_empty() {
                            String::new()
                        } else {
                            format!("; expected one of: {}", self.variants.join(", "))
                        }
                    ))
                }),
        }
    }
}

/// Everything needed to construct a catalog model.
#[derive(Clone, Debug, Default)]
pub struct BuildSpec<'a> {
    pub name: &'a str,
    pub variant: Option<&'a str>,
    pub params: BTreeMap<String, f64>,
    pub data: Option<&'a Table>,
    pub mode: Mode,
    pub metric: MetricOptions,
}

type Derive = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A constructed model with its interpretable derived quantities.
pub struct Built {
    pub target: Arc<dyn Target>,
    pub variant: Option<&'static str>,
    pub derived_names: Vec<String>,
    derive: Box<Derive>,
}

impl Built {
    fn new<M: ModelDef + 'static>(def: M, spec: &BuildSpec<'_>, variant: Option<&'static str>) -> Result<Self> {
        Ok(Built {
            target: Arc::new(Model::with_options(def, spec.metric)?),
            variant,
            derived_names: Vec::new(),
            derive: Box::new(|_| Vec::new()),
        })
    }

    fn with_derived(mut self, names: &[&str], f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.derived_names = names.iter().map(|s| s.to_string()).collect();
        self.derive = Box::new(f);
        self
    }

    /// Derived quantities (e.g. `rho`, `sigma`) at `q`.
    pub fn derived(&self, q: &[f64]) -> Vec<f64> {
        (self.derive)(q)
    }
}

fn need_data<'a>(spec: &BuildSpec<'a>) -> Result<&'a Table> {
    spec.data
        .ok_or_else(|| Error::Config(format!("model `{}` requires data (set `data` or a synthetic seed)", spec.name)))
}

/// Builds a catalog model.
pub fn build(spec: &BuildSpec<'_>) -> Result<Built> {
    let e = entry(spec.name)?;
    let p = e.resolve_params(&spec.params)?;
    let variant = e.resolve_variant(spec.variant, spec.mode)?;
    match e.name {
        "funnel" => Built::new(Funnel { joint: variant == Some("joint") }, spec, variant),
        "bc" => Built::new(Bc::new(need_data(spec)?.require("y")?.to_vec()), spec, variant),
        "hierarchical" => Built::new(Hierarchical { y: p["y"] }, spec, variant),
        "intrinsic" => {
            let tau = (p["tau"] > 0.0).then_some(p["tau"]);
            Built::new(Intrinsic::new(p["kappa"], tau)?, spec, variant)
        }
        "standard_normal" => {
            let d = p["d"];
            if d < 1.0 || d.fract() != 0.0 {
                return Err(Error::Config(format!("parameter `d` must be a positive integer, got {d}")));
            }
            Built::new(Gaussian::standard(d as usize), spec, variant)
        }
        "diag_gaussian" => Built::new(Gaussian::new(vec![3.0, 3.0], vec![2.0, 1.0])?, spec, variant),
        "zip" => Ok(Built::new(Zip::from_table(need_data(spec)?)?, spec, variant)?
            .with_derived(&["sigma"], |q| vec![(0.5 * q[0]).exp()])),
        "sv_leverage" => {
            let y = need_data(spec)?.require("y")?.to_vec();
            let nc = variant == Some("noncentered");
            let t = y.len();
            Ok(Built::new(SvLeverage::new(y, nc)?, spec, variant)?
                .with_derived(&["rho", "sigma"], move |q| sv::derived(q, t).to_vec()))
        }
        "cev" => {
            let y = need_data(spec)?.require("y")?.to_vec();
            let t = y.len();
            Ok(Built::new(Cev::new(y)?, spec, variant)?.with_derived(
                &["alpha", "beta", "sigma_x", "gamma", "sigma_y"],
                move |q| cev::derived(q, t).to_vec(),
            ))
        }
        "stock_watson" => {
            let y = need_data(spec)?.require("y")?.to_vec();
            if variant == Some("fixed") {
                Built::new(StockWatson::fixed(y, p["z"], p["x"])?, spec, variant)
            } else {
                Ok(Built::new(StockWatson::new(y)?, spec, variant)?
                    .with_derived(&["sigma"], |q| vec![(-0.5 * q[q.len() - 1]).exp()]))
            }
        }
        "wishart_sv" => {
            let y = wishart::returns_from_table(need_data(spec)?)?;
            let joint = variant != Some("rm-f");
            let m = WishartSv::new(y, joint, (p["nu_mean"], p["nu_sd"]))?;
            Ok(Built::new(m, spec, variant)?.with_derived(&["nu"], |q| vec![q[q.len() - 1]]))
        }
        _ => unreachable!("catalog entry without builder"),
    }
}

/// Synthetic data set with the generating values of the derived quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub data: Table,
    pub truth: Vec<(String, f64)>,
}

/// Seeded synthetic data for a catalog model. `length` overrides the
/// default series length; `params` are validated as for [`build`].
pub fn generate(name: &str, seed: u64, length: Option<usize>, params: &BTreeMap<String, f64>) -> Result<Synthetic> {
    use rand::SeedableRng;
    let e = entry(name)?;
    e.resolve_params(params)?;
    let n = length.unwrap_or(e.default_length);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    match e.name {
        "bc" => Ok(small::generate_bc(n, &mut rng)),
        "zip" => zip::generate(n, &mut rng),
        "sv_leverage" => Ok(sv::generate(n, &mut rng)),
        "cev" => cev::generate(n, &mut rng),
        "stock_watson" => Ok(stock_watson::generate(n, &mut rng)),
        "wishart_sv" => wishart::generate(2, n, 30.0, &mut rng),
        other => Err(Error::Config(format!("model `{other}` takes no data"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_model_lists_catalog() {
        let e = entry("nope").unwrap_err().to_string();
        assert!(e.contains("funnel") && e.contains("wishart_sv"));
    }

    #[test]
    fn unknown_param_is_named() {
        let mut given = BTreeMap::new();
        given.insert("kapa".to_string(), 2.0);
        let e = entry("intrinsic").unwrap().resolve_params(&given).unwrap_err().to_string();
        assert!(e.contains("`kapa`"));
    }

    #[test]
    fn sv_defaults_to_noncentered_for_em() {
        let e = entry("sv_leverage").unwrap();
        assert_eq!(e.resolve_variant(None, Mode::Em).unwrap(), Some("noncentered"));
        assert_eq!(e.resolve_variant(None, Mode::Rm).unwrap(), Some("centered"));
        assert!(e.resolve_variant(Some("x"), Mode::Rm).is_err());
    }

    #[test]
    fn generators_are_bit_stable() {
        for e in CATALOG.iter().filter(|e| e.needs_data) {
            let a = generate(e.name, 11, Some(12), &BTreeMap::new()).unwrap();
            let b = generate(e.name, 11, Some(12), &BTreeMap::new()).unwrap();
            assert_eq!(a, b, "{}", e.name);
            let c = generate(e.name, 12, Some(12), &BTreeMap::new()).unwrap();
            assert_ne!(a.data, c.data, "{}", e.name);
        }
    }

    #[test]
    fn every_catalog_model_builds_on_synthetic_data() {
        for e in CATALOG {
            let syn = e.needs_data.then(|| generate(e.name, 3, Some(12), &BTreeMap::new()).unwrap());
            for v in e.variants.iter().map(|v| Some(*v)).chain([None]) {
                let spec = BuildSpec {
                    name: e.name,
                    variant: v,
                    data: syn.as_ref().map(|s| &s.data),
                    ..Default::default()
                };
                let b = build(&spec).unwrap_or_else(|err| panic!("{} {v:?}: {err}", e.name));
                let q = b.target.init_point().unwrap_or(vec![0.1; b.target.dim()]);
                assert!(b.target.log_density(&q).unwrap().is_finite(), "{}", e.name);
                assert_eq!(b.derived(&q).len(), b.derived_names.len());
            }
        }
    }
}
