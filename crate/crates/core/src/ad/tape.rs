use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use super::real::{logistic_f64, softplus_f64, Real};
use crate::error::{Error, Result};
use crate::special;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
enum Node {
    Input,
    Unary { a: u32, da: f64 },
    Binary { a: u32, b: u32, da: f64, db: f64 },
    OpOutput { op: u32 },
}

/// Reverse rule of a structured tape operation.
///
/// `out_adj` holds the adjoints of the operation's outputs; the rule adds
/// the corresponding input adjoints into `in_adj` (same order as the inputs
/// passed to [`Tape::push_op`]).
pub trait AdjointOp {
    fn backward(&self, out_adj: &[f64], in_adj: &mut [f64]);
}

struct OpRecord {
    inputs: Vec<u32>,
    first_out: u32,
    n_out: u32,
    op: Box<dyn AdjointOp>,
}

/// Append-only record of scalar operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    ops: RefCell<Vec<OpRecord>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("ops", &self.ops.borrow().len())
            .finish()
    }
}

/// Scalar on a tape. Constants carry no tape reference and are never
/// recorded.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var({}#{})", self.val, self.idx),
            None => write!(f, "Const({})", self.val),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty tape with room for `nodes` scalar nodes and `ops` structured ops.
    pub fn with_capacity(nodes: usize, ops: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            ops: RefCell::new(Vec::with_capacity(ops)),
        }
    }

    pub fn n_ops(&self) -> usize {
        self.ops.borrow().len()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all recorded nodes, keeping allocations.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.ops.get_mut().clear();
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(node);
        idx
    }

    pub fn input(&self, val: f64) -> Var<'_> {
        let idx = self.push(Node::Input);
        Var {
            tape: Some(self),
            idx,
            val,
        }
    }

    /// Records a structured operation with the given output values. The
    /// returned vars are contiguous on the tape. Constant inputs receive no
    /// adjoint; if every input is constant the outputs are constants.
    pub fn push_op<'t>(
        &'t self,
        inputs: &[Var<'t>],
        outputs: &[f64],
        op: Box<dyn AdjointOp>,
    ) -> Vec<Var<'t>> {
        if inputs.iter().all(|v| v.tape.is_none()) || outputs.is_empty() {
            return outputs.iter().map(|&v| Var::constant(v)).collect();
        }
        let op_idx = self.ops.borrow().len() as u32;
        let first_out;
        {
            let mut nodes = self.nodes.borrow_mut();
            first_out = nodes.len() as u32;
            nodes.extend(std::iter::repeat_n(Node::OpOutput { op: op_idx }, outputs.len()));
        }
        self.ops.borrow_mut().push(OpRecord {
            inputs: inputs
                .iter()
                .map(|v| if v.tape.is_some() { v.idx } else { NONE })
                .collect(),
            first_out,
            n_out: outputs.len() as u32,
            op,
        });
        outputs
            .iter()
            .enumerate()
            .map(|(k, &val)| Var {
                tape: Some(self),
                idx: first_out + k as u32,
                val,
            })
            .collect()
    }

    /// Reverse sweep from `out`; returns d out / d wrt.
    pub fn gradient(&self, out: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<f64>> {
        let Some(_) = out.tape else {
            return Ok(vec![0.0; wrt.len()]);
        };
        let nodes = self.nodes.borrow();
        let ops = self.ops.borrow();
        let mut adj: Vec<f64> = vec![0.0; nodes.len()];
        adj[out.idx as usize] = 1.0;
        let mut out_buf: Vec<f64> = Vec::new();
        let mut in_buf: Vec<f64> = Vec::new();
        for i in (0..=out.idx as usize).rev() {
            let a = adj[i];
            if !a.is_finite() {
                return Err(Error::NonFiniteAdjoint { node: i });
            }
            match nodes[i] {
                Node::Input => {}
                Node::Unary { a: p, da } => {
                    if a != 0.0 {
                        adj[p as usize] += a * da;
                    }
                }
                Node::Binary { a: p, b: r, da, db } => {
                    if a != 0.0 {
                        adj[p as usize] += a * da;
                        adj[r as usize] += a * db;
                    }
                }
                Node::OpOutput { op } => {
                    let rec = &ops[op as usize];
                    if rec.first_out as usize != i {
                        continue;
                    }
                    let lo = rec.first_out as usize;
                    let hi = lo + rec.n_out as usize;
                    out_buf.clear();
                    out_buf.extend_from_slice(&adj[lo..hi]);
                    if let Some(k) = out_buf.iter().position(|x| !x.is_finite()) {
                        return Err(Error::NonFiniteAdjoint { node: lo + k });
                    }
                    if out_buf.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    in_buf.clear();
                    in_buf.resize(rec.inputs.len(), 0.0);
                    rec.op.backward(&out_buf, &mut in_buf);
                    for (&inp, &g) in rec.inputs.iter().zip(&in_buf) {
                        if inp != NONE {
                            adj[inp as usize] += g;
                        }
                    }
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|v| if v.tape.is_some() { adj[v.idx as usize] } else { 0.0 })
            .collect())
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: NONE,
            val,
        }
    }

    pub fn tape(&self) -> Option<&'t Tape> {
        self.tape
    }

    #[inline]
    fn unary(self, val: f64, da: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(Node::Unary { a: self.idx, da }),
                val,
            },
        }
    }

    #[inline]
    fn binary(self, other: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => Var {
                tape: Some(t),
                idx: t.push(Node::Unary { a: self.idx, da }),
                val,
            },
            (None, Some(t)) => Var {
                tape: Some(t),
                idx: t.push(Node::Unary { a: other.idx, da: db }),
                val,
            },
            (Some(t), Some(_)) => Var {
                tape: Some(t),
                idx: t.push(Node::Binary {
                    a: self.idx,
                    b: other.idx,
                    da,
                    db,
                }),
                val,
            },
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.val;
        let val = self.val * inv;
        self.binary(o, val, inv, -val * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        self.unary(self.val + c, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        self.unary(self.val - c, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl AddAssign for Var<'_> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Real for Var<'_> {
    #[inline]
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    #[inline]
    fn is_constant(&self) -> bool {
        self.tape.is_none()
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn powf(self, e: f64) -> Self {
        self.unary(self.val.powf(e), e * self.val.powf(e - 1.0))
    }
    fn powi(self, n: i32) -> Self {
        self.unary(self.val.powi(n), n as f64 * self.val.powi(n - 1))
    }
    fn ln_1p(self) -> Self {
        self.unary(self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }
    fn exp_m1(self) -> Self {
        self.unary(self.val.exp_m1(), self.val.exp())
    }
    fn logistic(self) -> Self {
        let s = logistic_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }
    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.val), logistic_f64(self.val))
    }
    fn ln_gamma(self) -> Self {
        self.unary(special::ln_gamma(self.val), special::digamma(self.val))
    }
    fn digamma(self) -> Self {
        self.unary(special::digamma(self.val), special::trigamma(self.val))
    }
    fn trigamma(self) -> Self {
        self.unary(special::trigamma(self.val), special::tetragamma(self.val))
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.unary(r, -r * r)
    }
    fn square(self) -> Self {
        self.unary(self.val * self.val, 2.0 * self.val)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Double;
    impl AdjointOp for Double {
        fn backward(&self, out_adj: &[f64], in_adj: &mut [f64]) {
            in_adj[0] += 2.0 * out_adj[0] + out_adj[1];
            in_adj[1] += out_adj[1];
        }
    }

    #[test]
    fn structured_op_adjoint() {
        let tape = Tape::new();
        let x = tape.input(3.0);
        let y = tape.input(4.0);
        // outputs (2x, x + y)
        let outs = tape.push_op(&[x, y], &[6.0, 7.0], Box::new(Double));
        let f = outs[0] * outs[1];
        let g = tape.gradient(f, &[x, y]).unwrap();
        // f = 2x(x+y): df/dx = 4x + 2y, df/dy = 2x
        assert_eq!(g, vec![20.0, 6.0]);
    }

    #[test]
    fn constant_inputs_skip_recording() {
        let tape = Tape::new();
        let c = Var::constant(2.0);
        let outs = tape.push_op(&[c], &[4.0], Box::new(Double));
        assert!(outs[0].is_constant());
        assert_eq!(tape.len(), 0);
        let x = tape.input(1.0);
        let z = x * c + c;
        assert_eq!(tape.len(), 3);
        assert_eq!(tape.gradient(z, &[x]).unwrap(), vec![2.0]);
    }

    #[test]
    fn special_function_partials() {
        let tape = Tape::new();
        let x = tape.input(2.5);
        let f = x.ln_gamma() + x.digamma() + x.trigamma() + x.softplus() + x.logistic();
        let g = tape.gradient(f, &[x]).unwrap()[0];
        let h = 1e-6;
        let ff = |x: f64| {
            special::ln_gamma(x)
                + special::digamma(x)
                + special::trigamma(x)
                + softplus_f64(x)
                + logistic_f64(x)
        };
        let fd = (ff(2.5 + h) - ff(2.5 - h)) / (2.0 * h);
        assert!((g - fd).abs() < 1e-7);
    }
}
