//! Convergence and efficiency diagnostics on rank-normalized split chains.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Draws from several chains; `chains[c][i][j]` is coordinate `j` of
/// draw `i` in chain `c`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainSet {
    pub chains: Vec<Vec<Vec<f64>>>,
    pub names: Vec<String>,
    pub cpu_seconds: Vec<f64>,
}

impl ChainSet {
    pub fn new(chains: Vec<Vec<Vec<f64>>>, names: Vec<String>, cpu_seconds: Vec<f64>) -> Result<Self> {
        let d = names.len();
        let n = chains.first().map_or(0, |c| c.len());
        for (k, c) in chains.iter().enumerate() {
            if c.len() != n {
                return Err(Error::Dimension {
                    context: "chain length",
                    expected: n,
                    got: c.len(),
                });
            }
            if let Some(row) = c.iter().find(|r| r.len() != d) {
                let _ = k;
                return Err(Error::Dimension {
                    context: "chain dimension",
                    expected: d,
                    got: row.len(),
                });
            }
        }
        Ok(ChainSet {
            chains,
            names,
            cpu_seconds,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Per-chain draws of coordinate `j`.
    pub fn coord(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|r| r[j]).collect()).collect()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        out.push(c[..h].to_vec());
        out.push(c[c.len() - h..].to_vec());
    }
    out
}

/// Normal scores of the pooled ranks, `Φ⁻¹((r − 3/8)/(S + 1/4))`, with
/// average ranks for ties.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<(f64, usize, usize)> = Vec::new();
    for (c, ch) in chains.iter().enumerate() {
        for (i, &v) in ch.iter().enumerate() {
            pooled.push((v, c, i));
        }
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = pooled.len() as f64;
    let norm = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        let z = norm.inverse_cdf((r - 0.375) / (s + 0.25));
        for p in &pooled[i..=j] {
            out[p.1][p.2] = z;
        }
        i = j + 1;
    }
    out
}

fn check(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 && chains.first().is_none_or(|c| c.len() < 4) {
        return Err(Error::Config("diagnostics need at least 4 draws".into()));
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Config("chains must have equal length of at least 4".into()));
    }
    Ok(())
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&v| v == first))
}

/// Within-chain mean variance and `var⁺` of split chains.
fn variances(chains: &[Vec<f64>]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_n = if chains.len() > 1 { var(&means) } else { 0.0 };
    (w, (n - 1.0) / n * w + b_over_n)
}

/// Rank-normalized split R̂ (clamped at 1). NaN for a constant coordinate.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains)?;
    if is_constant(chains) {
        log::warn!("R-hat is undefined for a constant coordinate");
        return Ok(f64::NAN);
    }
    let z = rank_normalize(&split(chains));
    let (w, vp) = variances(&z);
    Ok((vp / w).sqrt().max(1.0))
}

/// Biased autocovariances `(1/n) Σ (x_i − x̄)(x_{i+t} − x̄)` via FFT.
pub fn autocovariance(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (len as f64 * n as f64)).collect()
}

/// Effective sample size of rank-normalized split chains with Geyer's
/// initial monotone sequence; capped at `10·N·M`.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains)?;
    if is_constant(chains) {
        log::warn!("ESS is undefined for a constant coordinate");
        return Ok(f64::NAN);
    }
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let z = rank_normalize(&split(chains));
    let n = z[0].len();
    let m = z.len() as f64;
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = z.iter().map(|c| autocovariance(c, &mut planner)).collect();
    let (w, vp) = variances(&z);
    let acov_t = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / m;
    let mut rho = vec![0.0; n + 2];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = 1.0 - (w - acov_t(1)) / vp;
    rho[1] = odd;
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = 1.0 - (w - acov_t(s + 1)) / vp;
        odd = 1.0 - (w - acov_t(s + 2)) / vp;
        if even + odd >= 0.0 {
            rho[s + 1] = even;
            rho[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 {
        rho[max_s + 1] = even;
    }
    let mut t = 1;
    while t + 3 <= max_s {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    let nm = (n * z.len()) as f64;
    let _ = total;
    Ok((nm / tau).min(10.0 * nm))
}

/// One row of the posterior summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess: f64,
    /// ESS per summed CPU second; `+inf` when no CPU time was recorded.
    pub ess_per_second: f64,
}

/// Mean, SD, R̂, ESS and ESS/s for every coordinate.
pub fn summarize(set: &ChainSet) -> Result<Vec<SummaryRow>> {
    let cpu: f64 = set.cpu_seconds.iter().sum();
    (0..set.dim())
        .map(|j| {
            let c = set.coord(j);
            let pooled: Vec<f64> = c.iter().flatten().copied().collect();
            let m = mean(&pooled);
            let sd = if pooled.len() > 1 { var(&pooled).max(0.0).sqrt() } else { 0.0 };
            let rhat = split_rhat(&c)?;
            let e = ess(&c)?;
            let eps = if cpu > 0.0 { e / cpu } else { f64::INFINITY };
            Ok(SummaryRow {
                name: set.names[j].clone(),
                mean: m,
                sd,
                rhat,
                ess: e,
                ess_per_second: eps,
            })
        })
        .collect()
}
