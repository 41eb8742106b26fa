use rand::Rng;
use rand_distr::{Exp, StandardNormal};

use super::dopri::{dp54_step, DenseOutput, IntegratorStats, PiController, H0};
use crate::error::{Error, Result};
use crate::model::Target;

/// Metric used by the dynamics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Position-dependent metric `G(q)`.
    #[default]
    Rm,
    /// Identity metric in standardized coordinates.
    Em,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rm" => Ok(Mode::Rm),
            "em" => Ok(Mode::Em),
            other => Err(Error::Config(format!("unknown metric `{other}`; expected one of: rm, em"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Rm => "rm",
            Mode::Em => "em",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub t_max: f64,
    pub warmup_fraction: f64,
    pub n_samples: usize,
    /// Fixed event rate; adapted during warmup when `None`.
    pub lambda: Option<f64>,
    pub atol: f64,
    pub rtol: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Budget of attempted integrator steps.
    pub max_steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            t_max: 2000.0,
            warmup_fraction: 0.5,
            n_samples: 1000,
            lambda: None,
            atol: 1e-4,
            rtol: 1e-4,
            seed: 1,
            mode: Mode::Rm,
            max_steps: 5_000_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction must lie in [0, 1), got {}", self.warmup_fraction));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return bad(format!("tolerances must be positive, got atol={} rtol={}", self.atol, self.rtol));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be finite and non-negative, got {l}"));
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }

    pub fn warmup_time(&self) -> f64 {
        self.warmup_fraction * self.t_max
    }
}

/// `q = m + S q′` with diagonal `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub m: Vec<f64>,
    pub s: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Standardization {
            m: vec![0.0; d],
            s: vec![1.0; d],
        }
    }

    pub fn to_q(&self, qs: &[f64]) -> Vec<f64> {
        qs.iter().zip(&self.m).zip(&self.s).map(|((x, m), s)| m + s * x).collect()
    }

    pub fn to_std(&self, q: &[f64]) -> Vec<f64> {
        q.iter().zip(&self.m).zip(&self.s).map(|((x, m), s)| (x - m) / s).collect()
    }
}

/// Event-free stretch of the trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    pub h_start: f64,
    pub h_end: f64,
}

impl Segment {
    pub fn drift(&self) -> f64 {
        (self.h_end - self.h_start).abs()
    }
}

/// State of the adaptation at a warmup checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub lambda: f64,
    pub standardization: Standardization,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    /// Positions at the equidistant sample times, one row per sample.
    pub samples: Vec<Vec<f64>>,
    pub sample_times: Vec<f64>,
    pub event_times: Vec<f64>,
    pub stats: IntegratorStats,
    pub segments: Vec<Segment>,
    pub checkpoints: Vec<Checkpoint>,
    pub lambda: f64,
    pub standardization: Option<Standardization>,
}

impl Trajectory {
    pub fn max_energy_drift(&self) -> f64 {
        self.segments.iter().map(Segment::drift).fold(0.0, f64::max)
    }
}

/// Trajectory that stopped early; `partial` holds what was produced.
#[derive(Debug, thiserror::Error)]
#[error("trajectory aborted at t = {t}: {error}")]
pub struct Aborted {
    #[source]
    pub error: Error,
    pub t: f64,
    pub q: Vec<f64>,
    pub partial: Trajectory,
}

/// Evaluates the standardized vector field at `y = (q′, p′)`; returns H.
fn field(target: &dyn Target, st: &Standardization, mode: Mode, y: &[f64], dy: &mut [f64]) -> Result<f64> {
    let d = st.m.len();
    let q = st.to_q(&y[..d]);
    match mode {
        Mode::Rm => {
            let p: Vec<f64> = y[d..].iter().zip(&st.s).map(|(p, s)| p / s).collect();
            let ev = target.hamiltonian_gradient(&q, &p)?;
            for i in 0..d {
                dy[i] = ev.velocity[i] / st.s[i];
                dy[d + i] = -st.s[i] * ev.grad_q[i];
            }
            if !ev.h.is_finite() || dy.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite Hamiltonian vector field"));
            }
            Ok(ev.h)
        }
        Mode::Em => {
            let (ld, g) = target.log_density_gradient(&q)?;
            let mut kin = 0.0;
            for i in 0..d {
                dy[i] = y[d + i];
                dy[d + i] = st.s[i] * g[i];
                kin += y[d + i] * y[d + i];
            }
            if !ld.is_finite() || dy.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite gradient"));
            }
            Ok(-ld + 0.5 * kin)
        }
    }
}

/// Momentum `p′ ~ N(0, S G S)` (RM) or `N(0, I)` (EM) at `q′`.
fn draw_momentum<R: Rng + ?Sized>(
    target: &dyn Target,
    st: &Standardization,
    mode: Mode,
    qs: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    match mode {
        Mode::Rm => {
            let q = st.to_q(qs);
            let g = target.metric(&q)?;
            let p = g.draw_momentum(rng);
            Ok(p.iter().zip(&st.s).map(|(p, s)| p * s).collect())
        }
        Mode::Em => Ok((0..qs.len()).map(|_| rng.sample(StandardNormal)).collect()),
    }
}

/// Kaplan–Meier median of right-censored times `(τ, observed)`.
pub fn km_median(obs: &[(f64, bool)]) -> Option<f64> {
    if !obs.iter().any(|o| o.1) {
        return None;
    }
    let mut v = obs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut at_risk = v.len() as f64;
    let mut surv = 1.0;
    let mut i = 0;
    while i < v.len() {
        let t = v[i].0;
        let mut died = 0.0;
        let mut gone = 0.0;
        while i < v.len() && v[i].0 == t {
            if v[i].1 {
                died += 1.0;
            }
            gone += 1.0;
            i += 1;
        }
        if died > 0.0 {
            surv *= 1.0 - died / at_risk;
            if surv <= 0.5 {
                return Some(t);
            }
        }
        at_risk -= gone;
    }
    v.last().map(|o| o.0)
}

struct UTurn {
    anchor: Vec<f64>,
    t_anchor: f64,
    g_prev: f64,
    active: bool,
    obs: Vec<(f64, bool)>,
}

impl UTurn {
    fn new() -> Self {
        UTurn {
            anchor: Vec::new(),
            t_anchor: 0.0,
            g_prev: 0.0,
            active: false,
            obs: Vec::new(),
        }
    }

    fn restart(&mut self, t: f64, qs: &[f64]) {
        if self.active {
            self.obs.push((t - self.t_anchor, false));
        }
        self.anchor = qs.to_vec();
        self.t_anchor = t;
        self.g_prev = 0.0;
        self.active = true;
    }

    fn step(&mut self, t0: f64, h: f64, qs: &[f64], qdot: &[f64]) {
        if !self.active {
            return;
        }
        let g: f64 = qs.iter().zip(&self.anchor).zip(qdot).map(|((q, a), v)| (q - a) * v).sum();
        if g < 0.0 && self.g_prev >= 0.0 {
            let frac = if self.g_prev > 0.0 { self.g_prev / (self.g_prev - g) } else { 0.0 };
            self.obs.push((t0 + frac * h - self.t_anchor, true));
            self.active = false;
        }
        self.g_prev = g;
    }
}

struct Engine<'a, R: Rng + ?Sized> {
    target: &'a dyn Target,
    cfg: &'a SamplerConfig,
    rng: &'a mut R,
    d: usize,
    st: Standardization,
    lambda: f64,
    t: f64,
    y: Vec<f64>,
    k: Vec<f64>,
    h_value: f64,
    seg: Segment,
    traj: Trajectory,
    last_error: Option<String>,
}

impl<'a, R: Rng + ?Sized> Engine<'a, R> {
    fn q(&self) -> Vec<f64> {
        self.st.to_q(&self.y[..self.d])
    }

    fn abort(self, error: Error) -> Box<Aborted> {
        let q = self.q();
        let mut partial = self.traj;
        partial.lambda = self.lambda;
        partial.standardization = Some(self.st);
        Box::new(Aborted {
            error,
            t: self.t,
            q,
            partial,
        })
    }

    fn eval(&mut self) -> Result<()> {
        let mut k = vec![0.0; 2 * self.d];
        self.h_value = field(self.target, &self.st, self.cfg.mode, &self.y, &mut k)?;
        self.traj.stats.evaluations += 1;
        self.k = k;
        Ok(())
    }

    fn close_segment(&mut self) {
        self.seg.t_end = self.t;
        self.seg.h_end = self.h_value;
        self.traj.segments.push(self.seg);
    }

    /// New momentum at the current position and a fresh segment.
    fn refresh(&mut self) -> Result<()> {
        let d = self.d;
        let p = draw_momentum(self.target, &self.st, self.cfg.mode, &self.y[..d], self.rng)?;
        self.y[d..].copy_from_slice(&p);
        self.eval()?;
        self.seg = Segment {
            t_start: self.t,
            t_end: self.t,
            steps: 0,
            h_start: self.h_value,
            h_end: self.h_value,
        };
        Ok(())
    }

    fn next_event(&mut self) -> f64 {
        if self.lambda > 0.0 {
            self.t + self.rng.sample(Exp::new(self.lambda).expect("positive rate"))
        } else {
            f64::INFINITY
        }
    }
}

struct Accumulator {
    t0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Accumulator {
    fn new(t0: f64, d: usize) -> Self {
        Accumulator {
            t0,
            s1: vec![0.0; d],
            s2: vec![0.0; d],
        }
    }

    fn add(&mut self, h: f64, qa: &[f64], qb: &[f64]) {
        for i in 0..qa.len() {
            self.s1[i] += 0.5 * h * (qa[i] + qb[i]);
            self.s2[i] += 0.5 * h * (qa[i] * qa[i] + qb[i] * qb[i]);
        }
    }

    fn estimate(&self, t1: f64) -> Option<Standardization> {
        let w = t1 - self.t0;
        if !(w > 0.0) {
            return None;
        }
        let m: Vec<f64> = self.s1.iter().map(|s| s / w).collect();
        let s = self
            .s2
            .iter()
            .zip(&m)
            .enumerate()
            .map(|(i, (s2, m))| {
                let var = s2 / w - m * m;
                let sd = var.max(0.0).sqrt();
                if sd < 1e-8 || !sd.is_finite() {
                    log::warn!("coordinate {i} has near-zero warmup variance; scale floored at 1e-8");
                    1e-8
                } else {
                    sd
                }
            })
            .collect();
        Some(Standardization { m, s })
    }
}

/// Warmup checkpoints as fractions of the warmup time.
const CHECKPOINTS: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

fn initial_point<R: Rng + ?Sized>(target: &dyn Target, rng: &mut R) -> Vec<f64> {
    match target.init_point() {
        Some(q) => q,
        None => (0..target.dim())
            .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    }
}

fn run<R: Rng + ?Sized>(
    target: &dyn Target,
    cfg: &SamplerConfig,
    rng: &mut R,
    warmup_only: bool,
) -> std::result::Result<Trajectory, Box<Aborted>> {
    let d = target.dim();
    let q0 = initial_point(target, rng);
    let t_w = cfg.warmup_time();
    let t_end = if warmup_only { t_w } else { cfg.t_max };
    let adapt_lambda = cfg.lambda.is_none();
    let mut eng = Engine {
        target,
        cfg,
        rng,
        d,
        st: Standardization::identity(d),
        lambda: cfg.lambda.unwrap_or(1.0),
        t: 0.0,
        y: [q0, vec![0.0; d]].concat(),
        k: vec![0.0; 2 * d],
        h_value: 0.0,
        seg: Segment {
            t_start: 0.0,
            t_end: 0.0,
            steps: 0,
            h_start: 0.0,
            h_end: 0.0,
        },
        traj: Trajectory::default(),
        last_error: None,
    };
    if let Err(e) = cfg.validate().and_then(|_| eng.refresh()) {
        return Err(eng.abort(e));
    }

    let mut hard: Vec<f64> = if t_w > 0.0 {
        CHECKPOINTS.iter().map(|f| f * t_w).collect()
    } else {
        Vec::new()
    };
    if !warmup_only {
        hard.push(cfg.t_max);
    }
    hard.dedup();
    let mut hard_idx = 0;

    let n = cfg.n_samples;
    let dt = (cfg.t_max - t_w) / n as f64;
    let grid: Vec<f64> = if warmup_only {
        Vec::new()
    } else {
        (0..n).map(|i| if i + 1 == n { cfg.t_max } else { t_w + (i + 1) as f64 * dt }).collect()
    };
    let mut grid_idx = 0;

    let mut acc = Accumulator::new(0.0, d);
    let mut uturn = UTurn::new();
    if adapt_lambda && t_w > 0.0 {
        uturn.restart(0.0, &eng.y[..d]);
    }
    let h_min = 1e-12 * cfg.t_max;
    let mut ctrl = PiController::default();
    let mut h = H0;
    let mut next_event = eng.next_event();
    let mut attempts = 0usize;
    let mut buf = vec![0.0; 2 * d];

    while eng.t < t_end {
        let stop_hard = hard.get(hard_idx).copied().unwrap_or(t_end);
        let t_stop = stop_hard.min(next_event);
        let clipped = eng.t + h >= t_stop;
        let hs = if clipped { t_stop - eng.t } else { h };
        attempts += 1;
        if attempts > cfg.max_steps {
            let e = Error::StepBudget {
                t: eng.t,
                max_steps: cfg.max_steps,
            };
            return Err(eng.abort(e));
        }
        let mut last_h = eng.h_value;
        let outcome = {
            let (st, mode) = (&eng.st, cfg.mode);
            let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                last_h = field(target, st, mode, y, dy)?;
                Ok(())
            };
            dp54_step(&mut f, eng.t, &eng.y, &eng.k, hs, cfg.atol, cfg.rtol, &mut ctrl)
        };
        eng.traj.stats.evaluations += 6;
        let out = match outcome {
            Ok(o) if o.accepted => o,
            Ok(o) => {
                eng.traj.stats.rejections += 1;
                h = o.h_next;
                if h < h_min {
                    let e = Error::Stiffness {
                        t: eng.t,
                        h,
                        cause: eng.last_error.clone(),
                    };
                    return Err(eng.abort(e));
                }
                continue;
            }
            Err(e) => {
                eng.traj.stats.rejections += 1;
                eng.last_error = Some(e.to_string());
                h = hs * ctrl.reject(f64::INFINITY);
                if h < h_min {
                    let e = Error::Stiffness {
                        t: eng.t,
                        h,
                        cause: eng.last_error.clone(),
                    };
                    return Err(eng.abort(e));
                }
                continue;
            }
        };
        let t0 = eng.t;
        let t1 = if clipped { t_stop } else { t0 + hs };
        eng.traj.stats.record_step(hs);
        eng.seg.steps += 1;
        let dense: DenseOutput = out.dense.expect("accepted step has dense output");

        // samples on the grid inside (t0, t1]
        while grid_idx < grid.len() && grid[grid_idx] <= t1 {
            let tg = grid[grid_idx];
            if tg >= t0 {
                dense.eval_into(tg.min(dense.t1()), &mut buf);
                let q = eng.st.to_q(&buf[..d]);
                eng.traj.samples.push(q);
                eng.traj.sample_times.push(tg);
            }
            grid_idx += 1;
        }
        if t0 < t_w {
            let qa = eng.st.to_q(&eng.y[..d]);
            let qb = eng.st.to_q(&out.new_state[..d]);
            acc.add(t1 - t0, &qa, &qb);
            if adapt_lambda {
                uturn.step(t0, t1 - t0, &out.new_state[..d], &out.k_new[..d]);
            }
        }
        eng.t = t1;
        eng.y = out.new_state;
        eng.k = out.k_new;
        eng.h_value = last_h;
        h = if clipped { h.max(out.h_next) } else { out.h_next };

        let at_hard = hard_idx < hard.len() && eng.t >= hard[hard_idx];
        let at_event = eng.t >= next_event;
        if at_hard {
            hard_idx += 1;
            eng.close_segment();
            if eng.t <= t_w && t_w > 0.0 {
                // warmup checkpoint
                if let Some(new_st) = acc.estimate(eng.t) {
                    let q = eng.q();
                    eng.y[..d].copy_from_slice(&new_st.to_std(&q));
                    eng.st = new_st;
                }
                acc = Accumulator::new(eng.t, d);
                if adapt_lambda {
                    uturn.restart(eng.t, &eng.y[..d]);
                    if let Some(med) = km_median(&uturn.obs) {
                        if med > 0.0 {
                            eng.lambda = 1.0 / med;
                        }
                    }
                    uturn.obs.clear();
                    uturn.active = eng.t < t_w;
                }
                eng.traj.checkpoints.push(Checkpoint {
                    t: eng.t,
                    lambda: eng.lambda,
                    standardization: eng.st.clone(),
                });
            }
            if eng.t < t_end {
                if let Err(e) = eng.refresh() {
                    return Err(eng.abort(e));
                }
                next_event = eng.next_event();
            }
        } else if at_event {
            eng.close_segment();
            eng.traj.event_times.push(eng.t);
            if eng.t < t_end {
                if let Err(e) = eng.refresh() {
                    return Err(eng.abort(e));
                }
                if adapt_lambda && eng.t < t_w {
                    uturn.restart(eng.t, &eng.y[..d]);
                }
            }
            next_event = eng.next_event();
        }
    }
    if eng.seg.steps > 0 && eng.traj.segments.last().map(|s| s.t_end) != Some(eng.t) {
        eng.close_segment();
    }
    let mut traj = eng.traj;
    traj.lambda = eng.lambda;
    traj.standardization = Some(eng.st);
    Ok(traj)
}

/// Simulates one trajectory: warmup adaptation on `[0, warmup_fraction·t_max]`
/// followed by `n_samples` equidistant positions on the remaining window.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    target: &dyn Target,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> std::result::Result<Trajectory, Box<Aborted>> {
    run(target, cfg, rng, false)
}

/// Runs only the warmup window; returns the adapted standardization and
/// event rate.
pub fn warmup_adapt<R: Rng + ?Sized>(
    target: &dyn Target,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> std::result::Result<(Standardization, f64), Box<Aborted>> {
    let tr = run(target, cfg, rng, true)?;
    let st = tr.standardization.unwrap_or_else(|| Standardization::identity(target.dim()));
    Ok((st, tr.lambda))
}

/// Deterministic standardized flow for `duration` from `(q, p)` (original
/// coordinates); returns the end point in original coordinates.
pub fn hamiltonian_flow(
    target: &dyn Target,
    mode: Mode,
    st: &Standardization,
    q: &[f64],
    p: &[f64],
    duration: f64,
    atol: f64,
    rtol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = q.len();
    let mut y = st.to_std(q);
    y.extend(p.iter().zip(&st.s).map(|(p, s)| p * s));
    let (yt, _) = super::dopri::integrate(
        |_, y, dy| field(target, st, mode, y, dy).map(|_| ()),
        0.0,
        duration,
        &y,
        atol,
        rtol,
    )?;
    let qt = st.to_q(&yt[..d]);
    let pt = yt[d..].iter().zip(&st.s).map(|(p, s)| p / s).collect();
    Ok((qt, pt))
}

/// Hamiltonian in standardized coordinates for the given mode, at original
/// `(q, p)`.
pub fn energy(target: &dyn Target, mode: Mode, st: &Standardization, q: &[f64], p: &[f64]) -> Result<f64> {
    let mut y = st.to_std(q);
    y.extend(p.iter().zip(&st.s).map(|(p, s)| p * s));
    let mut dy = vec![0.0; y.len()];
    field(target, st, mode, &y, &mut dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{Real, SparseDual};
    use crate::model::{Factors, Model, ModelDef};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Gauss {
        mu: Vec<f64>,
        sd: Vec<f64>,
    }

    impl ModelDef for Gauss {
        fn dim(&self) -> usize {
            self.mu.len()
        }

        fn factors<T: Real>(&self, q: &[SparseDual<T>], out: &mut Factors<T>) -> Result<()> {
            for i in 0..self.mu.len() {
                out.normal_const("q", i, q[i].clone(), self.mu[i], self.sd[i]);
            }
            Ok(())
        }
    }

    fn std_normal(d: usize) -> Model<Gauss> {
        Model::new(Gauss {
            mu: vec![0.0; d],
            sd: vec![1.0; d],
        })
        .unwrap()
    }

    #[test]
    fn km_median_uncensored_and_censored() {
        let obs: Vec<(f64, bool)> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&t| (t, true)).collect();
        assert_eq!(km_median(&obs), Some(3.0));
        // censoring at 1.5 shifts the estimate upward
        let obs = vec![(1.0, true), (1.5, false), (2.0, true), (3.0, true), (4.0, true)];
        assert_eq!(km_median(&obs), Some(3.0));
        assert_eq!(km_median(&[(1.0, false)]), None);
    }

    #[test]
    fn harmonic_oscillator_energy_is_conserved() {
        let m = std_normal(1);
        let st = Standardization::identity(1);
        let (q0, p0) = (vec![1.0], vec![0.5]);
        let h0 = energy(&m, Mode::Em, &st, &q0, &p0).unwrap();
        let (q, p) = hamiltonian_flow(&m, Mode::Em, &st, &q0, &p0, 10.0, 1e-6, 1e-6).unwrap();
        let h1 = energy(&m, Mode::Em, &st, &q, &p).unwrap();
        assert!((h1 - h0).abs() < 1e-5, "{}", (h1 - h0).abs());
        let (q, p) = hamiltonian_flow(&m, Mode::Em, &st, &q0, &p0, 10.0, 1e-4, 1e-4).unwrap();
        let h1 = energy(&m, Mode::Em, &st, &q, &p).unwrap();
        assert!((h1 - h0).abs() < 1e-4, "{}", (h1 - h0).abs());
        // exact solution q(t) = cos t + 0.5 sin t
        assert!((q[0] - (10f64.cos() + 0.5 * 10f64.sin())).abs() < 1e-3);
    }

    #[test]
    fn reversed_momentum_returns_to_start() {
        let m = Model::new(Gauss {
            mu: vec![1.0, -2.0],
            sd: vec![0.5, 2.0],
        })
        .unwrap();
        let st = Standardization {
            m: vec![1.0, -2.0],
            s: vec![0.5, 2.0],
        };
        for mode in [Mode::Rm, Mode::Em] {
            let (q0, p0) = (vec![1.3, -1.0], vec![0.4, -0.2]);
            let (q1, p1) = hamiltonian_flow(&m, mode, &st, &q0, &p0, 3.0, 1e-4, 1e-4).unwrap();
            let back: Vec<f64> = p1.iter().map(|v| -v).collect();
            let (q2, _) = hamiltonian_flow(&m, mode, &st, &q1, &back, 3.0, 1e-4, 1e-4).unwrap();
            for i in 0..2 {
                assert!((q2[i] - q0[i]).abs() < 1e-4, "{mode}: {q2:?} vs {q0:?}");
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = std_normal(2);
        let cfg = SamplerConfig {
            t_max: 100.0,
            n_samples: 50,
            ..Default::default()
        };
        let a = simulate_trajectory(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = simulate_trajectory(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 50);
        assert_eq!(*a.sample_times.last().unwrap(), 100.0);
        assert_eq!(a.checkpoints.len(), 4);
    }

    #[test]
    fn zero_warmup_keeps_identity() {
        let m = std_normal(2);
        let cfg = SamplerConfig {
            t_max: 10.0,
            warmup_fraction: 0.0,
            n_samples: 10,
            lambda: Some(1.0),
            ..Default::default()
        };
        let (st, lambda) = warmup_adapt(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(st, Standardization::identity(2));
        assert_eq!(lambda, 1.0);
    }

    #[test]
    fn warmup_recovers_location_and_scale() {
        let m = Model::new(Gauss {
            mu: vec![3.0],
            sd: vec![2.0],
        })
        .unwrap();
        for mode in [Mode::Rm, Mode::Em] {
            let cfg = SamplerConfig {
                t_max: 2000.0,
                mode,
                ..Default::default()
            };
            let (st, lambda) = warmup_adapt(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            assert!((st.m[0] - 3.0).abs() < 0.3, "{mode}: {st:?}");
            assert!((st.s[0] / 2.0 - 1.0).abs() < 0.3, "{mode}: {st:?}");
            assert!(lambda > 0.0 && lambda.is_finite());
        }
    }

    #[test]
    fn step_budget_aborts_with_partial_output() {
        let m = std_normal(1);
        let cfg = SamplerConfig {
            t_max: 100.0,
            max_steps: 50,
            ..Default::default()
        };
        let err = simulate_trajectory(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err.error, Error::StepBudget { .. }));
        assert!(err.t > 0.0 && err.t < 100.0);
        assert_eq!(err.q.len(), 1);
    }
}
