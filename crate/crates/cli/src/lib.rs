//! Batch driver: resolves a run configuration, samples independent chains
//! and writes samples, diagnostics and a run record.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use lgc_core::diagnostics::{summarize, ChainSet};
use lgc_core::io::{self, Table};
use lgc_core::models::{self, BuildSpec, Built};
use lgc_core::sampler::{simulate_trajectory, Aborted, IntegratorStats, SamplerConfig, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

pub use config::{Args, DataSource, RunConfig};

pub const META_FILE: &str = "meta.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DATA_FILE: &str = "data.csv";

pub fn samples_file(k: usize, partial: bool) -> String {
    if partial {
        format!("samples_chain{k}.partial.csv")
    } else {
        format!("samples_chain{k}.csv")
    }
}

/// Outcome of one chain.
pub struct ChainRun {
    pub index: usize,
    pub seed: u64,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub result: std::result::Result<Trajectory, Box<Aborted>>,
}

impl ChainRun {
    pub fn trajectory(&self) -> &Trajectory {
        match &self.result {
            Ok(t) => t,
            Err(a) => &a.partial,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub out: PathBuf,
    /// One message per aborted chain.
    pub aborts: Vec<String>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.aborts.is_empty()
    }
}

/// CPU time consumed by the calling thread.
fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: ts is a valid out-pointer for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return f64::NAN;
    }
    ts.tv_sec as f64 + 1e-9 * ts.tv_nsec as f64
}

fn run_chain(built: &Built, cfg: &SamplerConfig, index: usize, seed: u64) -> ChainRun {
    let cfg = SamplerConfig { seed, ..cfg.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, w0) = (thread_cpu_seconds(), Instant::now());
    let result = simulate_trajectory(built.target.as_ref(), &cfg, &mut rng);
    let cpu_seconds = thread_cpu_seconds() - c0;
    let wall_seconds = w0.elapsed().as_secs_f64();
    match &result {
        Ok(t) => log::info!("chain {index}: {} steps, {:.2}s cpu", t.stats.steps, cpu_seconds),
        Err(a) => log::warn!("chain {index}: {a}"),
    }
    ChainRun { index, seed, cpu_seconds, wall_seconds, result }
}

/// Runs every chain, in parallel unless `serial`. Results are in chain order.
pub fn sample_chains(built: &Built, cfg: &RunConfig) -> Vec<ChainRun> {
    let go = |k: usize| run_chain(built, &cfg.sampler, k, cfg.chain_seed(k));
    if cfg.serial {
        (0..cfg.chains).map(go).collect()
    } else {
        (0..cfg.chains).into_par_iter().map(go).collect()
    }
}

/// Generating values of synthetic data, by parameter name.
type Truth = Vec<(String, f64)>;

/// Loads or generates the data set; generated data is written to `out`.
fn load_data(cfg: &RunConfig, out: &Path) -> Result<(Option<Table>, Truth)> {
    match &cfg.data {
        DataSource::None => Ok((None, Vec::new())),
        DataSource::File(p) => Ok((Some(io::read_csv(p)?), Vec::new())),
        DataSource::Synthetic { seed, length } => {
            let s = models::generate(&cfg.model, *seed, *length, &cfg.params)?;
            io::write_csv(&out.join(DATA_FILE), &s.data)?;
            Ok((Some(s.data), s.truth))
        }
    }
}

fn remove_stale_outputs(out: &Path) -> Result<()> {
    for e in std::fs::read_dir(out)? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        let ours = (name.starts_with("samples_chain") && name.ends_with(".csv"))
            || name.starts_with("summary")
            || name == META_FILE;
        if ours && e.file_type()?.is_file() {
            std::fs::remove_file(e.path())?;
        }
    }
    Ok(())
}

fn stats_json(s: &IntegratorStats) -> Value {
    json!({
        "steps": s.steps,
        "rejections": s.rejections,
        "evaluations": s.evaluations,
        "min_step": finite_or_null(s.min_step),
        "max_step": finite_or_null(s.max_step),
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn config_json(cfg: &RunConfig, variant: Option<&str>) -> Value {
    let s = &cfg.sampler;
    json!({
        "model": cfg.model,
        "variant": variant,
        "params": cfg.params,
        "data": cfg.data,
        "tmax": s.t_max,
        "warmup_fraction": s.warmup_fraction,
        "samples": s.n_samples,
        "chains": cfg.chains,
        "seed": s.seed,
        "metric": s.mode.to_string(),
        "lambda": s.lambda,
        "atol": s.atol,
        "rtol": s.rtol,
        "max_steps": s.max_steps,
        "jitter": cfg.metric.jitter,
        "storage": cfg.metric.storage.map(config::storage_name),
        "ordering": config::ordering_name(cfg.metric.ordering),
        "serial": cfg.serial,
    })
}

fn chain_json(c: &ChainRun) -> Value {
    let t = c.trajectory();
    let mut v = json!({
        "chain": c.index,
        "seed": c.seed,
        "status": if c.result.is_ok() { "ok" } else { "aborted" },
        "cpu_seconds": c.cpu_seconds,
        "wall_seconds": c.wall_seconds,
        "samples": t.samples.len(),
        "events": t.event_times.len(),
        "lambda": t.lambda,
        "max_energy_drift": t.max_energy_drift(),
        "integrator": stats_json(&t.stats),
    });
    if let Err(a) = &c.result {
        v["error"] = json!(a.error.to_string());
        v["abort_time"] = json!(a.t);
    }
    v
}

/// Executes a validated configuration and writes all outputs to `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    remove_stale_outputs(&out)?;
    let (data, truth) = load_data(cfg, &out)?;
    let spec = BuildSpec {
        name: &cfg.model,
        variant: cfg.variant.as_deref(),
        params: cfg.params.clone(),
        data: data.as_ref(),
        mode: cfg.sampler.mode,
        metric: cfg.metric,
    };
    let built = models::build(&spec)?;
    let names = built.target.coord_names();

    let runs = sample_chains(&built, cfg);

    let mut aborts = Vec::new();
    for c in &runs {
        let t = c.trajectory();
        io::write_rows(&out.join(samples_file(c.index, c.result.is_err())), &names, &t.samples)?;
        if let Err(a) = &c.result {
            aborts.push(format!("chain {} (seed {}): {a}", c.index, c.seed));
        }
    }

    let complete: Vec<&ChainRun> = runs.iter().filter(|c| c.result.is_ok()).collect();
    let mut summary_name = None;
    let mut summary_error = None;
    if !complete.is_empty() {
        let mut all_names = names.clone();
        all_names.extend(built.derived_names.iter().cloned());
        let chains: Vec<Vec<Vec<f64>>> = complete
            .iter()
            .map(|c| {
                c.trajectory()
                    .samples
                    .iter()
                    .map(|q| {
                        let mut row = q.clone();
                        row.extend(built.derived(q));
                        row
                    })
                    .collect()
            })
            .collect();
        let cpu = complete.iter().map(|c| c.cpu_seconds).collect();
        let file = if aborts.is_empty() { SUMMARY_FILE.to_string() } else { "summary.partial.csv".to_string() };
        match ChainSet::new(chains, all_names, cpu).and_then(|set| summarize(&set)) {
            Ok(rows) => {
                io::write_summary(&out.join(&file), &rows)?;
                summary_name = Some(file);
            }
            Err(e) => summary_error = Some(e.to_string()),
        }
    }

    let meta = json!({
        "status": if aborts.is_empty() { "ok" } else { "aborted" },
        "config": config_json(cfg, built.variant),
        "coordinates": names,
        "derived": built.derived_names,
        "truth": truth.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "summary_file": summary_name,
        "summary_error": summary_error,
        "chains": runs.iter().map(chain_json).collect::<Vec<_>>(),
        "total_cpu_seconds": runs.iter().map(|c| c.cpu_seconds).sum::<f64>(),
        "max_energy_drift": runs.iter().map(|c| c.trajectory().max_energy_drift()).fold(0.0, f64::max),
    });
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(out.join(META_FILE), text + "\n")?;
    Ok(RunReport { out, aborts })
}

/// Human-readable model catalog.
pub fn catalog_text() -> String {
    let mut s = String::new();
    for e in models::CATALOG {
        s.push_str(&format!("{:<16} {}\n", e.name, e.summary));
        s.push_str(&format!("{:<16} q = {}\n", "", e.q_layout));
        if !e.variants.is_empty() {
            s.push_str(&format!("{:<16} variants: {}\n", "", e.variants.join(", ")));
        }
        if !e.params.is_empty() {
            let p: Vec<String> = e.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            s.push_str(&format!("{:<16} params: {}\n", "", p.join(", ")));
        }
        if e.needs_data {
            s.push_str(&format!("{:<16} data: required (synthetic length {})\n", "", e.default_length));
        }
    }
    s
}
