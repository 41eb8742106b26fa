//! Dormand–Prince 5(4) with a PI step-size controller and the 4th-order
//! dense output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// 5th minus embedded 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

pub const H0: f64 = 1e-3;

/// PI step-size controller.
#[derive(Clone, Copy, Debug)]
pub struct PiController {
    err_prev: f64,
}

impl Default for PiController {
    fn default() -> Self {
        PiController { err_prev: 1e-4 }
    }
}

impl PiController {
    /// Step-size factor after an accepted step with error norm `err`.
    pub fn accept(&mut self, err: f64) -> f64 {
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.7 / 5.0) * self.err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0)
        };
        self.err_prev = err.max(1e-4);
        fac
    }

    /// Step-size factor after a rejected step.
    pub fn reject(&self, err: f64) -> f64 {
        if err.is_finite() {
            (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
        } else {
            0.2
        }
    }
}

/// Interpolant over one accepted step.
#[derive(Clone, Debug)]
pub struct DenseOutput {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl DenseOutput {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.r[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Result of one attempted step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub accepted: bool,
    pub error_norm: f64,
    pub h_next: f64,
    pub new_state: Vec<f64>,
    /// Derivative at `new_state` (first stage of the next step).
    pub k_new: Vec<f64>,
    pub dense: Option<DenseOutput>,
}

/// One Dormand–Prince step of size `h` from `(t, y)` with `k1 = f(t, y)`.
/// An evaluation error in any stage is returned as `Err`.
pub fn dp54_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    atol: f64,
    rtol: f64,
    ctrl: &mut PiController,
) -> Result<StepOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    debug_assert!(h > 0.0);
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(k1.to_vec());
    let mut tmp = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj[i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let mut ks = vec![0.0; n];
        f(t + C[s] * h, &tmp, &mut ks)?;
        k.push(ks);
    }
    // stage 7 is evaluated at the 5th order solution
    let y_new = tmp;
    let mut sum = 0.0;
    for i in 0..n {
        let mut delta = 0.0;
        for s in 0..7 {
            delta += E[s] * k[s][i];
        }
        let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
        let r = h * delta / sc;
        sum += r * r;
    }
    let err = (sum / n.max(1) as f64).sqrt();
    if !(err <= 1.0) {
        return Ok(StepOutcome {
            accepted: false,
            error_norm: err,
            h_next: h * ctrl.reject(err),
            new_state: y.to_vec(),
            k_new: k1.to_vec(),
            dense: None,
        });
    }
    let h_next = h * ctrl.accept(err);
    let mut r2 = vec![0.0; n];
    let mut r3 = vec![0.0; n];
    let mut r4 = vec![0.0; n];
    let mut r5 = vec![0.0; n];
    for i in 0..n {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        r2[i] = ydiff;
        r3[i] = bspl;
        r4[i] = ydiff - h * k[6][i] - bspl;
        let mut acc = 0.0;
        for s in 0..7 {
            acc += D[s] * k[s][i];
        }
        r5[i] = h * acc;
    }
    let k_new = k.pop().expect("seven stages");
    Ok(StepOutcome {
        accepted: true,
        error_norm: err,
        h_next,
        new_state: y_new,
        k_new,
        dense: Some(DenseOutput {
            t0: t,
            h,
            r: [y.to_vec(), r2, r3, r4, r5],
        }),
    })
}

/// Counters of an integration run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejections: usize,
    pub evaluations: usize,
    pub min_step: f64,
    pub max_step: f64,
}

impl IntegratorStats {
    pub fn record_step(&mut self, h: f64) {
        if self.steps == 0 {
            self.min_step = h;
            self.max_step = h;
        } else {
            self.min_step = self.min_step.min(h);
            self.max_step = self.max_step.max(h);
        }
        self.steps += 1;
    }

    pub fn merge(&mut self, o: &IntegratorStats) {
        if o.steps > 0 {
            if self.steps == 0 {
                self.min_step = o.min_step;
                self.max_step = o.max_step;
            } else {
                self.min_step = self.min_step.min(o.min_step);
                self.max_step = self.max_step.max(o.max_step);
            }
        }
        self.steps += o.steps;
        self.rejections += o.rejections;
        self.evaluations += o.evaluations;
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` and returns `y(t1)`.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], atol: f64, rtol: f64) -> Result<(Vec<f64>, IntegratorStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let span = t1 - t0;
    let h_min = 1e-12 * span.abs();
    let mut stats = IntegratorStats::default();
    let mut ctrl = PiController::default();
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; y.len()];
    f(t0, &y, &mut k1)?;
    stats.evaluations += 1;
    let mut t = t0;
    let mut h = H0.min(span);
    while t < t1 {
        let last = t + h >= t1;
        let hs = if last { t1 - t } else { h };
        let out = dp54_step(&mut f, t, &y, &k1, hs, atol, rtol, &mut ctrl)?;
        stats.evaluations += 6;
        if out.accepted {
            stats.record_step(hs);
            t = if last { t1 } else { t + hs };
            y = out.new_state;
            k1 = out.k_new;
            h = if last { h } else { out.h_next };
        } else {
            stats.rejections += 1;
            h = out.h_next;
            if h < h_min {
                return Err(Error::Stiffness { t, h, cause: None });
            }
        }
    }
    Ok((y, stats))
}
