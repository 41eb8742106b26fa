//! Randomized Hamiltonian dynamics driven by an adaptive Runge–Kutta
//! integrator with Poisson momentum refreshes.

pub mod dopri;
mod grhmc;

pub use dopri::{dp54_step, integrate, DenseOutput, IntegratorStats, PiController, StepOutcome};
pub use grhmc::{
    energy, hamiltonian_flow, km_median, simulate_trajectory, warmup_adapt, Aborted, Checkpoint, Mode,
    SamplerConfig, Segment, Standardization, Trajectory,
};
