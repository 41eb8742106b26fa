//! Forward sparse duals layered over a reverse-mode tape.
//!
//! Model code is written once against [`SparseDual<T>`] with `T: Real`.
//! With `T = f64` it yields values and Jacobian rows; with `T = Var` every
//! value and every Jacobian entry is itself recorded on a [`Tape`], so
//! quantities built from them (the metric tensor, the Hamiltonian) can be
//! differentiated in reverse.

mod dual;
mod real;
mod tape;

pub use dual::{Grad, SparseDual};
pub use real::Real;
pub use tape::{AdjointOp, Tape, Var};

use crate::error::Result;

/// Jacobian rows of `funcs` at `q`. Row `i` lists the nonzero partials of
/// the `i`-th output as sorted `(index, value)` pairs.
pub fn jacobian_rows<F>(funcs: F, q: &[f64]) -> Result<Vec<Vec<(usize, f64)>>>
where
    F: FnOnce(&[SparseDual<f64>]) -> Result<Vec<SparseDual<f64>>>,
{
    let inputs = SparseDual::seed(q);
    let outputs = funcs(&inputs)?;
    Ok(outputs.iter().map(|o| o.grad().to_pairs()).collect())
}

/// Gradient of a scalar recorded on a fresh tape, scaled by `seed`.
pub fn reverse_gradient<F>(f: F, q: &[f64], seed: f64) -> Result<Vec<f64>>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = q.iter().map(|&v| tape.input(v)).collect();
    let out = f(&vars)?;
    let mut g = tape.gradient(out, &vars)?;
    if seed != 1.0 {
        g.iter_mut().for_each(|x| *x *= seed);
    }
    Ok(g)
}
