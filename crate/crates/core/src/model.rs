//! Targets written as products of factors `π_ℓ(φ_ℓ(q) | ψ_ℓ(q))`.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use smallvec::SmallVec;

use crate::ad::{Real, SparseDual, Tape, Var};
use crate::error::{Error, Result};
use crate::lgc::{self, LgcMatrix};
use crate::linalg::{DenseCholesky, Ordering};
use crate::metric::{self, HamiltonianEval, Layout, MetricTensor, SizeHints};
use crate::spd;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Base distribution of a factor. Each variant documents its argument `x`
/// and parameter vector `θ`; the LGC uses the same ordering.
#[derive(Clone, Debug)]
pub enum Dist {
    /// `x`: scalar; `θ = (μ, σ)`.
    Normal,
    /// `x`: n-vector; `θ = μ`. Fixed precision.
    MvNormalPrecision(Arc<FixedPrecision>),
    /// Log of a Gamma variate. `x`: scalar; `θ = (α, β)`, β a scale.
    ExpGamma,
    /// Logit of a Beta variate. `x`: scalar; `θ = (a, b)`.
    InverseLogitBeta,
    /// Zero-inflated Poisson count. `x`: the observed count; `θ = (η, g)`
    /// with log mean η and zero-inflation logit g. Fisher block only.
    ZeroInflatedPoisson,
    /// `x`: n-vector; `θ = (μ, α, ω)`, precision `α P(ω)`.
    MvNormalPrecisionP(usize),
    /// `x`: n-vector; `θ = (μ, α, ω)`, covariance `α P(ω)`.
    MvNormalCovarianceP(usize),
    /// `x = ω` with `P(x) ~ W(ν⁻¹ P(y), ν)`; `θ = (y, ν)`.
    WishartPScaleJoint(usize),
    /// `x = (x₁, x₂)` with `x₁ ~ N(0, 1)`, `x₂ | x₁ ~ N(0, e^{-3x₁})`; no θ.
    FunnelJoint,
}

/// Fixed SPD precision with cached log-determinant.
#[derive(Debug)]
pub struct FixedPrecision {
    p: DMatrix<f64>,
    logdet: f64,
}

impl FixedPrecision {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let logdet = DenseCholesky::from_matrix(&p)?.logdet();
        Ok(FixedPrecision { p, logdet })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }
}

impl Dist {
    /// `(d, p)`: argument and parameter dimensions.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Dist::Normal | Dist::ExpGamma | Dist::InverseLogitBeta | Dist::ZeroInflatedPoisson => (1, 2),
            Dist::MvNormalPrecision(p) => (p.p.nrows(), p.p.nrows()),
            Dist::MvNormalPrecisionP(n) | Dist::MvNormalCovarianceP(n) => (*n, n + 1 + spd::omega_len(*n)),
            Dist::WishartPScaleJoint(n) => (spd::omega_len(*n), spd::omega_len(*n) + 1),
            Dist::FunnelJoint => (2, 0),
        }
    }

    /// False when only the Fisher block is available.
    pub fn full_lgc(&self) -> bool {
        !matches!(self, Dist::ZeroInflatedPoisson)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dist::Normal => "Normal1D",
            Dist::MvNormalPrecision(_) => "MvNormalPrecision",
            Dist::ExpGamma => "ExpGamma",
            Dist::InverseLogitBeta => "InverseLogitBeta",
            Dist::ZeroInflatedPoisson => "ZeroInflatedPoisson",
            Dist::MvNormalPrecisionP(_) => "MvNormalPrecisionP",
            Dist::MvNormalCovarianceP(_) => "MvNormalCovarianceP",
            Dist::WishartPScaleJoint(_) => "WishartPScaleImpliedJoint",
            Dist::FunnelJoint => "FunnelJoint",
        }
    }

    pub fn log_density<T: Real>(&self, x: &[T], th: &[T]) -> Result<T> {
        match self {
            Dist::Normal => {
                let sigma = th[1];
                if !(sigma.value() > 0.0) {
                    return Err(Error::domain(format!("sigma must be positive, got {}", sigma.value())));
                }
                let z = (x[0] - th[0]) / sigma;
                Ok(-sigma.ln() - z.square() * 0.5 - HALF_LN_2PI)
            }
            Dist::MvNormalPrecision(fp) => {
                let n = x.len();
                let r: Vec<T> = x.iter().zip(th).map(|(&a, &b)| a - b).collect();
                let mut quad = T::zero();
                for i in 0..n {
                    let mut s = T::zero();
                    for j in 0..n {
                        let pij = fp.p[(i, j)];
                        if pij != 0.0 {
                            s += r[j] * pij;
                        }
                    }
                    quad += r[i] * s;
                }
                Ok(quad * -0.5 + (0.5 * fp.logdet - HALF_LN_2PI * n as f64))
            }
            Dist::ExpGamma => spd::logpdf_expgamma(x[0], th[0], th[1]),
            Dist::InverseLogitBeta => {
                let (a, b) = (th[0], th[1]);
                if !(a.value() > 0.0) || !(b.value() > 0.0) {
                    return Err(Error::domain(format!(
                        "InverseLogitBeta parameters must be positive, got ({}, {})",
                        a.value(),
                        b.value()
                    )));
                }
                Ok(a * x[0] - (a + b) * x[0].softplus() - a.ln_gamma() - b.ln_gamma() + (a + b).ln_gamma())
            }
            Dist::ZeroInflatedPoisson => {
                let y = x[0].value();
                if y < 0.0 || y.fract() != 0.0 {
                    return Err(Error::domain(format!("count must be a non-negative integer, got {y}")));
                }
                let (eta, g) = (th[0], th[1]);
                let s = eta.exp();
                if y == 0.0 {
                    // ln(e^g + e^{-s}) - ln(1 + e^g)
                    let ns = -s;
                    let (hi, lo) = if g.value() > ns.value() { (g, ns) } else { (ns, g) };
                    Ok(hi + (lo - hi).exp().ln_1p() - g.softplus())
                } else {
                    Ok(eta * y - s - g.softplus() - crate::special::ln_gamma(y + 1.0))
                }
            }
            Dist::MvNormalPrecisionP(n) => {
                let n = *n;
                spd::logpdf_mvnormal_precision_prep(x, &th[..n], th[n], &th[n + 1..])
            }
            Dist::MvNormalCovarianceP(n) => {
                let n = *n;
                spd::logpdf_mvnormal_covariance_prep(x, &th[..n], th[n], &th[n + 1..])
            }
            Dist::WishartPScaleJoint(n) => {
                let m = spd::omega_len(*n);
                spd::logpdf_wishart_prep(x, &th[..m], th[m])
            }
            Dist::FunnelJoint => {
                let (a, b) = (x[0], x[1]);
                Ok(a.square() * -0.5 + a * 1.5 - b.square() * (a * 3.0).exp() * 0.5 - 2.0 * HALF_LN_2PI)
            }
        }
    }

    pub fn lgc<T: Real>(&self, th: &[T]) -> Result<LgcMatrix<T>> {
        match self {
            Dist::Normal => lgc::lgc_normal1d(th[0], th[1]),
            Dist::MvNormalPrecision(fp) => {
                let n = fp.p.nrows();
                let mut m = LgcMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let v = fp.p[(i, j)];
                        if v == 0.0 {
                            continue;
                        }
                        if j <= i {
                            m.set(i, j, T::cst(v));
                            m.set(n + i, n + j, T::cst(v));
                        }
                        m.set(n + i, j, T::cst(-v));
                    }
                }
                Ok(m)
            }
            Dist::ExpGamma => lgc::lgc_expgamma(th[0], th[1]),
            Dist::InverseLogitBeta => lgc::lgc_inverselogitbeta(th[0], th[1]),
            Dist::ZeroInflatedPoisson => Ok(lgc::lgc_zip(th[0], th[1])),
            Dist::MvNormalPrecisionP(n) => spd::lgc_mvnormal_precision_prep(th[*n], &th[n + 1..]),
            Dist::MvNormalCovarianceP(n) => spd::lgc_mvnormal_covariance_prep(th[*n], &th[n + 1..]),
            Dist::WishartPScaleJoint(n) => {
                let m = spd::omega_len(*n);
                spd::lgc_wishart_prep_joint(&th[..m], th[m])
            }
            Dist::FunnelJoint => {
                let mut m = LgcMatrix::zeros(2, 0);
                m.set(0, 0, T::cst(5.5));
                m.set(1, 1, T::cst(4.5f64.exp()));
                Ok(m)
            }
        }
    }
}

/// One term of the target evaluated at a particular q.
#[derive(Clone, Debug)]
pub struct Factor<T> {
    pub label: &'static str,
    pub index: usize,
    pub dist: Dist,
    pub arg: Vec<SparseDual<T>>,
    pub param: Vec<SparseDual<T>>,
}

impl<T: Real> Factor<T> {
    pub fn name(&self) -> String {
        format!("{}[{}]", self.label, self.index)
    }

    pub fn log_density(&self) -> Result<T> {
        let x: SmallVec<[T; 8]> = self.arg.iter().map(|v| v.value()).collect();
        let th: SmallVec<[T; 8]> = self.param.iter().map(|v| v.value()).collect();
        self.dist.log_density(&x, &th).map_err(|e| e.in_factor(self.name()))
    }

    pub fn lgc(&self) -> Result<LgcMatrix<T>> {
        let th: SmallVec<[T; 8]> = self.param.iter().map(|v| v.value()).collect();
        self.dist.lgc(&th).map_err(|e| e.in_factor(self.name()))
    }

    /// Jacobian rows: argument components first, then parameters.
    pub fn rows(&self) -> impl Iterator<Item = &SparseDual<T>> {
        self.arg.iter().chain(self.param.iter())
    }
}

/// Sink for the factors of a model at one evaluation point.
pub struct Factors<T> {
    items: Vec<Factor<T>>,
}

impl<T: Real> Factors<T> {
    pub fn new() -> Self {
        Factors { items: Vec::new() }
    }

    pub fn push(
        &mut self,
        label: &'static str,
        index: usize,
        dist: Dist,
        arg: Vec<SparseDual<T>>,
        param: Vec<SparseDual<T>>,
    ) {
        self.items.push(Factor {
            label,
            index,
            dist,
            arg,
            param,
        });
    }

    /// `x ~ N(μ, σ²)`.
    pub fn normal(&mut self, label: &'static str, index: usize, x: SparseDual<T>, mu: SparseDual<T>, sigma: SparseDual<T>) {
        self.push(label, index, Dist::Normal, vec![x], vec![mu, sigma]);
    }

    /// `x ~ N(μ, σ²)` with constant μ and σ.
    pub fn normal_const(&mut self, label: &'static str, index: usize, x: SparseDual<T>, mu: f64, sigma: f64) {
        self.normal(label, index, x, SparseDual::constant(mu), SparseDual::constant(sigma));
    }

    /// `x ~ ExpGamma(α, β)`.
    pub fn expgamma(&mut self, label: &'static str, index: usize, x: SparseDual<T>, alpha: SparseDual<T>, beta: SparseDual<T>) {
        self.push(label, index, Dist::ExpGamma, vec![x], vec![alpha, beta]);
    }

    pub fn extend(&mut self, other: Vec<Factor<T>>) {
        self.items.extend(other);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Factor<T>> {
        self.items.iter()
    }

    pub fn into_vec(self) -> Vec<Factor<T>> {
        self.items
    }
}

impl<T: Real> Default for Factors<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Storage of the metric tensor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Storage {
    #[default]
    Dense,
    Sparse,
}

/// A target written against [`SparseDual`] inputs.
pub trait ModelDef: Send + Sync {
    fn dim(&self) -> usize;

    fn coord_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("q{}", i + 1)).collect()
    }

    fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()>;

    fn init_point(&self) -> Option<Vec<f64>> {
        None
    }

    fn storage(&self) -> Storage {
        Storage::Dense
    }
}

/// Metric assembly options.
#[derive(Clone, Copy, Debug, Default)]
pub struct MetricOptions {
    /// Overrides the model's storage preference.
    pub storage: Option<Storage>,
    pub ordering: Ordering,
    /// Adds `1e-8 · tr(G)/D` to the diagonal before factoring.
    pub jitter: bool,
}

/// Object-safe view of a model, used by the sampler and the CLI.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;
    fn coord_names(&self) -> Vec<String>;
    fn init_point(&self) -> Option<Vec<f64>>;
    fn log_density(&self, q: &[f64]) -> Result<f64>;
    fn log_density_gradient(&self, q: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn metric(&self, q: &[f64]) -> Result<MetricTensor>;
    /// `H(q, p)`, `∇_q H` and `G⁻¹ p` in one pass.
    fn hamiltonian_gradient(&self, q: &[f64], p: &[f64]) -> Result<HamiltonianEval>;

    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        let ld = self.log_density(q)?;
        let g = self.metric(q)?;
        let u = g.solve(p);
        let quad: f64 = u.iter().zip(p).map(|(a, b)| a * b).sum();
        Ok(-ld + 0.5 * g.logdet() + 0.5 * quad)
    }
}

/// A validated model together with its metric layout.
pub struct Model<M> {
    def: M,
    layout: Layout,
    opts: MetricOptions,
    nonlinear: Vec<&'static str>,
    hints: SizeHints,
}

impl<M: ModelDef> Model<M> {
    pub fn new(def: M) -> Result<Self> {
        Self::with_options(def, MetricOptions::default())
    }

    pub fn with_options(def: M, opts: MetricOptions) -> Result<Self> {
        let d = def.dim();
        if d == 0 {
            return Err(Error::InvalidModel("zero-dimensional model".into()));
        }
        let q0 = def.init_point().unwrap_or_else(|| vec![0.0; d]);
        if q0.len() != d {
            return Err(Error::Dimension {
                context: "init point",
                expected: d,
                got: q0.len(),
            });
        }
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = q0.iter().map(|&v| tape.input(v)).collect();
        let factors = evaluate(&def, &SparseDual::seed_from(&vars))?;
        let mut covered = vec![false; d];
        let mut entries: Vec<(usize, usize)> = Vec::new();
        let mut nonlinear = BTreeSet::new();
        let mut ld = 0.0;
        for f in &factors {
            let (dd, pp) = f.dist.dims();
            if f.arg.len() != dd || f.param.len() != pp {
                return Err(Error::InvalidModel(format!(
                    "factor {} ({}) expects {dd} argument and {pp} parameter components, got {} and {}",
                    f.name(),
                    f.dist.name(),
                    f.arg.len(),
                    f.param.len()
                )));
            }
            ld += f.log_density()?.value();
            let v = f.lgc()?;
            let rows: Vec<Vec<usize>> = f
                .rows()
                .map(|r| {
                    let mut idx = Vec::new();
                    r.grad().for_each_structural(|i, _| idx.push(i));
                    idx
                })
                .collect();
            for r in &rows {
                r.iter().for_each(|&i| covered[i] = true);
            }
            for (i, ri) in rows.iter().enumerate() {
                for (j, rj) in rows.iter().enumerate().take(i + 1) {
                    if v.is_zero(i, j) {
                        continue;
                    }
                    for &a in ri {
                        for &b in rj {
                            entries.push(if a >= b { (a, b) } else { (b, a) });
                        }
                    }
                }
            }
            let mut taped = false;
            for a in &f.arg {
                a.grad().for_each(|_, g| taped |= !g.is_constant());
            }
            if taped {
                nonlinear.insert(f.label);
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            let name = def.coord_names().get(i).cloned().unwrap_or_else(|| i.to_string());
            return Err(Error::InvalidModel(format!("coordinate {name} does not enter any factor")));
        }
        if !ld.is_finite() {
            return Err(Error::InvalidModel(format!("log density at the init point is {ld}")));
        }
        for label in &nonlinear {
            log::warn!("factor `{label}` has a non-linear argument map; its metric contribution is not the exact LGC bound");
        }
        entries.sort_unstable();
        entries.dedup();
        let storage = opts.storage.unwrap_or(def.storage());
        let layout = Layout::new(d, storage, &entries, opts.ordering);
        Ok(Model {
            def,
            layout,
            opts,
            nonlinear: nonlinear.into_iter().collect(),
            hints: SizeHints::default(),
        })
    }

    pub fn def(&self) -> &M {
        &self.def
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Labels of factors whose argument map is not linear in q.
    pub fn nonlinear_factors(&self) -> &[&'static str] {
        &self.nonlinear
    }

    /// Factors evaluated with Jacobian rows at `q`.
    pub fn factors(&self, q: &[f64]) -> Result<Vec<Factor<f64>>> {
        self.check_dim(q)?;
        evaluate(&self.def, &SparseDual::seed(q))
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.def.dim() {
            return Err(Error::Dimension {
                context: "position",
                expected: self.def.dim(),
                got: q.len(),
            });
        }
        Ok(())
    }
}

fn evaluate<M: ModelDef, T: Real>(def: &M, q: &[SparseDual<T>]) -> Result<Vec<Factor<T>>> {
    let mut out = Factors::new();
    def.factors(q, &mut out)?;
    Ok(out.into_vec())
}

impl<M: ModelDef> Target for Model<M> {
    fn dim(&self) -> usize {
        self.def.dim()
    }

    fn coord_names(&self) -> Vec<String> {
        self.def.coord_names()
    }

    fn init_point(&self) -> Option<Vec<f64>> {
        self.def.init_point()
    }

    fn log_density(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        let mut s = 0.0;
        for f in evaluate(&self.def, &SparseDual::<f64>::untracked(q))? {
            s += f.log_density()?;
        }
        Ok(s)
    }

    fn log_density_gradient(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(q)?;
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = q.iter().map(|&v| tape.input(v)).collect();
        let factors = evaluate(&self.def, &SparseDual::untracked(&vars))?;
        let mut s = Var::constant(0.0);
        for f in &factors {
            s += f.log_density()?;
        }
        let g = tape.gradient(s, &vars)?;
        Ok((s.value(), g))
    }

    fn metric(&self, q: &[f64]) -> Result<MetricTensor> {
        let factors = self.factors(q)?;
        metric::assemble(&factors, &self.layout, self.opts.jitter)
    }

    fn hamiltonian_gradient(&self, q: &[f64], p: &[f64]) -> Result<HamiltonianEval> {
        self.check_dim(q)?;
        let tape = self.hints.tape();
        let vars: Vec<Var<'_>> = q.iter().map(|&v| tape.input(v)).collect();
        let factors = evaluate(&self.def, &SparseDual::seed_from(&vars))?;
        metric::hamiltonian_taped(&tape, &self.hints, &vars, &factors, &self.layout, self.opts.jitter, p)
    }
}
