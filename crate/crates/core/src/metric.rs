//! Metric tensor `G(q) = Σ Jᵀ V J`, its factorization and the Hamiltonian
//! with its reverse-mode gradient.

use std::sync::atomic::{AtomicUsize, Ordering as MemOrdering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ad::{AdjointOp, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{DenseCholesky, Ordering, SparseCholesky, SymbolicCholesky};
use crate::model::{Factor, Storage};

/// Where each lower-triangle entry of G lives in the value vector.
#[derive(Clone, Debug)]
pub enum Layout {
    /// Column-major `n × n`; only the lower triangle is used.
    Dense { n: usize },
    Sparse(Arc<SymbolicCholesky>),
}

impl Layout {
    pub fn new(n: usize, storage: Storage, entries: &[(usize, usize)], ordering: Ordering) -> Self {
        match storage {
            Storage::Dense => Layout::Dense { n },
            Storage::Sparse => Layout::Sparse(Arc::new(SymbolicCholesky::new(n, entries, ordering))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Layout::Dense { n } => *n,
            Layout::Sparse(s) => s.n(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Layout::Dense { n } => n * n,
            Layout::Sparse(s) => s.nnz_a(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Layout::Sparse(_))
    }

    /// Value position of `G[a, b]` (either triangle).
    #[inline]
    pub fn position(&self, a: usize, b: usize) -> Option<usize> {
        match self {
            Layout::Dense { n } => {
                let (r, c) = if a >= b { (a, b) } else { (b, a) };
                Some(c * n + r)
            }
            Layout::Sparse(s) => s.position(a, b),
        }
    }

    /// Nonzeros of the Cholesky factor.
    pub fn factor_nnz(&self) -> usize {
        match self {
            Layout::Dense { n } => n * (n + 1) / 2,
            Layout::Sparse(s) => s.nnz_l(),
        }
    }

    fn factor(&self, values: &[f64]) -> Result<Factorization> {
        match self {
            Layout::Dense { n } => DenseCholesky::factor(values, *n).map(Factorization::Dense),
            Layout::Sparse(s) => s.factor(values).map(Factorization::Sparse),
        }
    }

    fn add_jitter(&self, values: &mut [f64]) {
        let n = self.dim();
        let diag: Vec<usize> = (0..n).map(|j| self.position(j, j).expect("diagonal is stored")).collect();
        let tr: f64 = diag.iter().map(|&p| values[p]).sum();
        let eps = 1e-8 * tr / n as f64;
        for p in diag {
            values[p] += eps;
        }
    }
}

#[derive(Clone, Debug)]
enum Factorization {
    Dense(DenseCholesky),
    Sparse(SparseCholesky),
}

impl Factorization {
    fn logdet(&self) -> f64 {
        match self {
            Factorization::Dense(c) => c.logdet(),
            Factorization::Sparse(c) => c.logdet(),
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(c) => c.solve(b),
            Factorization::Sparse(c) => c.solve(b),
        }
    }

    fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(c) => c.mul_lower(z),
            Factorization::Sparse(c) => c.mul_lower(z),
        }
    }

    /// `(w, u)` with `w = L⁻¹ P p` and `u = L⁻ᵀ w`, permuted coordinates.
    fn half_solves(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            Factorization::Dense(c) => {
                let mut w = p.to_vec();
                c.solve_lower(&mut w);
                let mut u = w.clone();
                c.solve_upper(&mut u);
                (w, u)
            }
            Factorization::Sparse(c) => {
                let mut w = c.permute(p);
                c.solve_lower_permuted(&mut w);
                let mut u = w.clone();
                c.solve_upper_permuted(&mut u);
                (w, u)
            }
        }
    }

    fn unpermute(&self, y: Vec<f64>) -> Vec<f64> {
        match self {
            Factorization::Dense(_) => y,
            Factorization::Sparse(c) => c.unpermute(&y),
        }
    }

    /// Adjoint of the factor values for `½ log|G| + ½ |w|²`.
    fn hamiltonian_lbar(&self, w: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(c) => {
                let n = c.n();
                let l = c.values();
                let mut lb = vec![0.0; n * n];
                for j in 0..n {
                    lb[j * n + j] = 1.0 / l[j * n + j] - u[j] * w[j];
                    for i in j + 1..n {
                        lb[j * n + i] = -u[i] * w[j];
                    }
                }
                lb
            }
            Factorization::Sparse(c) => {
                let (cp, ri) = c.symbolic().l_pattern();
                let l = c.values();
                let mut lb = vec![0.0; l.len()];
                for j in 0..cp.len() - 1 {
                    lb[cp[j]] = 1.0 / l[cp[j]] - u[j] * w[j];
                    for p in cp[j] + 1..cp[j + 1] {
                        lb[p] = -u[ri[p]] * w[j];
                    }
                }
                lb
            }
        }
    }

    fn adjoint(&self, lbar: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(c) => c.adjoint(lbar),
            Factorization::Sparse(c) => c.adjoint(lbar),
        }
    }
}

/// Factored metric tensor at one point.
#[derive(Clone, Debug)]
pub struct MetricTensor {
    layout: Layout,
    values: Vec<f64>,
    chol: Factorization,
}

impl MetricTensor {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn is_sparse(&self) -> bool {
        self.layout.is_sparse()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.layout.position(a, b).map_or(0.0, |p| self.values[p])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, b| self.get(a, b))
    }

    pub fn logdet(&self) -> f64 {
        self.chol.logdet()
    }

    /// `G⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    /// `L z` with `G = L Lᵀ` (up to the fill-reducing permutation).
    pub fn mul_factor(&self, z: &[f64]) -> Vec<f64> {
        self.chol.mul_lower(z)
    }

    /// A draw from `N(0, G)`.
    pub fn draw_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.mul_factor(&z)
    }
}

const NO_POS: usize = usize::MAX;

/// Offsets of one factor's data inside [`Blocks`].
struct BlockMeta {
    rows: usize,
    s: usize,
    support: usize,
    jac: usize,
    v: usize,
    pos: usize,
    j_inputs: (usize, usize),
    v_inputs: (usize, usize),
}

/// Per-factor data for the assembly and its reverse rule, stored flat so one
/// evaluation allocates a handful of vectors instead of several per factor.
#[derive(Default)]
struct Blocks {
    meta: Vec<BlockMeta>,
    support: Vec<usize>,
    /// `rows × s` per block, row-major.
    jac: Vec<f64>,
    /// `rows × rows` per block, full symmetric.
    v: Vec<f64>,
    /// `s × s` per block, row-major value positions (only `a ≥ b` used).
    pos: Vec<usize>,
    j_inputs: Vec<(u32, u32)>,
    v_inputs: Vec<(u32, u32)>,
    max_rs: usize,
    max_ss: usize,
}

/// Buffer sizes seen by the previous evaluation. The sparsity structure does
/// not change between evaluations, so these make later ones allocate once.
#[derive(Debug, Default)]
pub(crate) struct SizeHints {
    tape: [AtomicUsize; 2],
    blocks: [AtomicUsize; 7],
}

fn load(a: &AtomicUsize) -> usize {
    a.load(MemOrdering::Relaxed)
}

fn store(a: &AtomicUsize, v: usize) {
    a.fetch_max(v, MemOrdering::Relaxed);
}

impl SizeHints {
    pub(crate) fn tape(&self) -> Tape {
        Tape::with_capacity(load(&self.tape[0]), load(&self.tape[1]))
    }

    fn record_tape(&self, t: &Tape) {
        store(&self.tape[0], t.len());
        store(&self.tape[1], t.n_ops());
    }

    fn blocks<T>(&self, n: usize) -> (Blocks, Vec<T>) {
        let h = |k: usize| load(&self.blocks[k]);
        let b = Blocks {
            meta: Vec::with_capacity(n),
            support: Vec::with_capacity(h(0)),
            jac: Vec::with_capacity(h(1)),
            v: Vec::with_capacity(h(2)),
            pos: Vec::with_capacity(h(3)),
            j_inputs: Vec::with_capacity(h(4)),
            v_inputs: Vec::with_capacity(h(5)),
            ..Default::default()
        };
        (b, Vec::with_capacity(h(6)))
    }

    fn record_blocks(&self, b: &Blocks, inputs: usize) {
        let sizes = [b.support.len(), b.jac.len(), b.v.len(), b.pos.len(), b.j_inputs.len(), b.v_inputs.len(), inputs];
        for (a, v) in self.blocks.iter().zip(sizes) {
            store(a, v);
        }
    }
}

impl Blocks {
    fn push<T: Real>(&mut self, f: &Factor<T>, layout: &Layout, input: &mut impl FnMut(T)) -> Result<()> {
        let lgc = f.lgc()?;
        let sup0 = self.support.len();
        for row in f.rows() {
            row.grad().for_each_structural(|i, _| self.support.push(i));
        }
        self.support[sup0..].sort_unstable();
        let s = {
            let tail = &mut self.support[sup0..];
            let mut k = 0;
            for i in 0..tail.len() {
                if i == 0 || tail[i] != tail[k - 1] {
                    tail[k] = tail[i];
                    k += 1;
                }
            }
            k
        };
        self.support.truncate(sup0 + s);
        let support = &self.support[sup0..];

        let r = f.rows().count();
        let jac0 = self.jac.len();
        self.jac.resize(jac0 + r * s, 0.0);
        let ji0 = self.j_inputs.len();
        for (i, row) in f.rows().enumerate() {
            row.grad().for_each_structural(|a, v| {
                let c = support.binary_search(&a).expect("index in support");
                self.jac[jac0 + i * s + c] = v.value();
                self.j_inputs.push((i as u32, c as u32));
                input(v);
            });
        }
        let v0 = self.v.len();
        self.v.resize(v0 + r * r, 0.0);
        let vi0 = self.v_inputs.len();
        for i in 0..r {
            for j in 0..=i {
                if lgc.is_zero(i, j) {
                    continue;
                }
                let v = lgc.get(i, j);
                self.v[v0 + i * r + j] = v.value();
                self.v[v0 + j * r + i] = v.value();
                self.v_inputs.push((i as u32, j as u32));
                input(v);
            }
        }
        let pos0 = self.pos.len();
        self.pos.resize(pos0 + s * s, NO_POS);
        for a in 0..s {
            for b in 0..=a {
                if let Some(p) = layout.position(support[a], support[b]) {
                    self.pos[pos0 + a * s + b] = p;
                }
            }
        }
        self.max_rs = self.max_rs.max(r * s);
        self.max_ss = self.max_ss.max(s * s);
        self.meta.push(BlockMeta {
            rows: r,
            s,
            support: sup0,
            jac: jac0,
            v: v0,
            pos: pos0,
            j_inputs: (ji0, self.j_inputs.len()),
            v_inputs: (vi0, self.v_inputs.len()),
        });
        Ok(())
    }

    /// Adds `Jᵀ V J` of block `k` into `g`.
    fn accumulate(&self, k: usize, g: &mut [f64], m: &mut Vec<f64>, label: &dyn Fn() -> String) -> Result<()> {
        let b = &self.meta[k];
        let (r, s) = (b.rows, b.s);
        let jac = &self.jac[b.jac..b.jac + r * s];
        let vm = &self.v[b.v..b.v + r * r];
        let pos = &self.pos[b.pos..b.pos + s * s];
        m.clear();
        m.resize(r * s, 0.0);
        for i in 0..r {
            for j in 0..r {
                let vij = vm[i * r + j];
                if vij == 0.0 {
                    continue;
                }
                for c in 0..s {
                    m[i * s + c] += vij * jac[j * s + c];
                }
            }
        }
        for a in 0..s {
            for bb in 0..=a {
                let mut acc = 0.0;
                for i in 0..r {
                    acc += jac[i * s + a] * m[i * s + bb];
                }
                if acc != 0.0 {
                    let p = pos[a * s + bb];
                    if p == NO_POS {
                        return Err(Error::InvalidModel(format!(
                            "factor {} touches metric entry ({}, {}) outside the pattern fixed at construction",
                            label(),
                            self.support[b.support + a],
                            self.support[b.support + bb]
                        )));
                    }
                    g[p] += acc;
                }
            }
        }
        Ok(())
    }

    /// Input adjoints of every block given the lower-entry adjoint of G, in
    /// the order the inputs were recorded.
    fn backward(&self, gbar: &[f64], out: &mut [f64]) {
        let mut gs = vec![0.0; self.max_ss];
        let mut m2 = vec![0.0; self.max_rs];
        let mut k = 0;
        for b in &self.meta {
            let (r, s) = (b.rows, b.s);
            let jac = &self.jac[b.jac..b.jac + r * s];
            let vm = &self.v[b.v..b.v + r * r];
            let pos = &self.pos[b.pos..b.pos + s * s];
            let gs = &mut gs[..s * s];
            gs.fill(0.0);
            for a in 0..s {
                gs[a * s + a] = gbar[pos[a * s + a]];
                for c in 0..a {
                    let p = pos[a * s + c];
                    if p == NO_POS {
                        continue;
                    }
                    let h = 0.5 * gbar[p];
                    gs[a * s + c] = h;
                    gs[c * s + a] = h;
                }
            }
            // m2 = J Ḡs
            let m2 = &mut m2[..r * s];
            m2.fill(0.0);
            for i in 0..r {
                for c in 0..s {
                    let jic = jac[i * s + c];
                    if jic == 0.0 {
                        continue;
                    }
                    for bb in 0..s {
                        m2[i * s + bb] += jic * gs[c * s + bb];
                    }
                }
            }
            for &(i, c) in &self.j_inputs[b.j_inputs.0..b.j_inputs.1] {
                let (i, c) = (i as usize, c as usize);
                let mut acc = 0.0;
                for j in 0..r {
                    acc += vm[i * r + j] * m2[j * s + c];
                }
                out[k] = 2.0 * acc;
                k += 1;
            }
            for &(i, j) in &self.v_inputs[b.v_inputs.0..b.v_inputs.1] {
                let (i, j) = (i as usize, j as usize);
                let mut acc = 0.0;
                for c in 0..s {
                    acc += m2[i * s + c] * jac[j * s + c];
                }
                out[k] = if i == j { acc } else { 2.0 * acc };
                k += 1;
            }
        }
    }
}

fn build_blocks<T: Real>(
    factors: &[Factor<T>],
    layout: &Layout,
    mut blocks: Blocks,
    inputs: &mut Vec<T>,
) -> Result<(Blocks, Vec<f64>)> {
    let mut g = vec![0.0; layout.len()];
    let mut m = Vec::new();
    let mut input = |v: T| inputs.push(v);
    for (k, f) in factors.iter().enumerate() {
        blocks.push(f, layout, &mut input)?;
        blocks.accumulate(k, &mut g, &mut m, &|| f.name())?;
    }
    Ok((blocks, g))
}

fn factorize(layout: &Layout, mut g: Vec<f64>, jitter: bool) -> Result<(Vec<f64>, Factorization)> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("metric tensor has non-finite entries"));
    }
    if jitter {
        layout.add_jitter(&mut g);
    }
    let chol = layout.factor(&g)?;
    Ok((g, chol))
}

/// Assembles and factors `G(q)` from factors evaluated with f64 Jacobians.
pub fn assemble(factors: &[Factor<f64>], layout: &Layout, jitter: bool) -> Result<MetricTensor> {
    let mut sink = Vec::new();
    let (_, g) = build_blocks(factors, layout, Blocks::default(), &mut sink)?;
    let (values, chol) = factorize(layout, g, jitter)?;
    Ok(MetricTensor {
        layout: layout.clone(),
        values,
        chol,
    })
}

/// Result of one Hamiltonian evaluation.
#[derive(Clone, Debug)]
pub struct HamiltonianEval {
    pub h: f64,
    pub log_density: f64,
    /// `∇_q H`.
    pub grad_q: Vec<f64>,
    /// `G⁻¹ p`.
    pub velocity: Vec<f64>,
    pub metric: MetricTensor,
}

/// Reverse rule of `q ↦ ½ log|G(q)| + ½ pᵀ G(q)⁻¹ p` through the assembly
/// inputs (J and V entries).
struct KineticOp {
    blocks: Blocks,
    chol: Factorization,
    w: Vec<f64>,
    u: Vec<f64>,
}

impl AdjointOp for KineticOp {
    fn backward(&self, out_adj: &[f64], in_adj: &mut [f64]) {
        let mut lbar = self.chol.hamiltonian_lbar(&self.w, &self.u);
        lbar.iter_mut().for_each(|x| *x *= out_adj[0]);
        let gbar = self.chol.adjoint(&lbar);
        self.blocks.backward(&gbar, in_adj);
    }
}

/// `H(q, p) = -log π(q) + ½ log|G(q)| + ½ pᵀ G(q)⁻¹ p` and its q-gradient.
/// `factors` must be evaluated from duals seeded with `vars`.
pub(crate) fn hamiltonian_taped<'t>(
    tape: &'t Tape,
    hints: &SizeHints,
    vars: &[Var<'t>],
    factors: &[Factor<Var<'t>>],
    layout: &Layout,
    jitter: bool,
    p: &[f64],
) -> Result<HamiltonianEval> {
    if p.len() != layout.dim() {
        return Err(Error::Dimension {
            context: "momentum",
            expected: layout.dim(),
            got: p.len(),
        });
    }
    let mut ld = Var::constant(0.0);
    for f in factors {
        ld += f.log_density()?;
    }
    let (blocks, mut inputs) = hints.blocks(factors.len());
    let (blocks, g) = build_blocks(factors, layout, blocks, &mut inputs)?;
    hints.record_blocks(&blocks, inputs.len());
    let (values, chol) = factorize(layout, g, jitter)?;
    let (w, u) = chol.half_solves(p);
    let quad: f64 = w.iter().map(|x| x * x).sum();
    let kinetic = 0.5 * chol.logdet() + 0.5 * quad;
    let velocity = chol.unpermute(u.clone());
    let op = KineticOp {
        blocks,
        chol: chol.clone(),
        w,
        u,
    };
    let k = tape.push_op(&inputs, &[kinetic], Box::new(op))[0];
    let h = k - ld;
    hints.record_tape(tape);
    let grad_q = tape.gradient(h, vars)?;
    Ok(HamiltonianEval {
        h: h.value(),
        log_density: ld.value(),
        grad_q,
        velocity,
        metric: MetricTensor {
            layout: layout.clone(),
            values,
            chol,
        },
    })
}
