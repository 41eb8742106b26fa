use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use lgc_core::linalg::Ordering;
use lgc_core::model::{MetricOptions, Storage};
use lgc_core::models;
use lgc_core::sampler::{Mode, SamplerConfig};
use serde::{Deserialize, Serialize};

/// Samples a built-in model with randomized Riemann-manifold Hamiltonian dynamics.
#[derive(Parser, Debug, Default, Clone)]
#[command(name = "lgc", version)]
pub struct Args {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Model hyperparameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_kv)]
    pub params: Vec<(String, f64)>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Seed for synthetic data when no data file is given.
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
    /// Length of the synthetic series.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// rm or em.
    #[arg(long)]
    pub metric: Option<String>,
    /// Fixed momentum refresh rate; disables adaptation.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Adds a small multiple of the identity to the metric.
    #[arg(long)]
    pub jitter: bool,
    /// dense or sparse; defaults to the model's choice.
    #[arg(long)]
    pub storage: Option<String>,
    /// natural or min-degree.
    #[arg(long)]
    pub ordering: Option<String>,
    /// Run chains one after another on the calling thread.
    #[arg(long)]
    pub serial: bool,
    /// Print the model catalog and exit.
    #[arg(long)]
    pub list_models: bool,
}

fn parse_kv(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("parameter `{k}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Schema of the TOML configuration file.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub variant: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub data: Option<PathBuf>,
    pub synthetic_seed: Option<u64>,
    pub length: Option<usize>,
    pub tmax: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub samples: Option<usize>,
    pub chains: Option<usize>,
    pub seed: Option<u64>,
    pub metric: Option<String>,
    pub lambda: Option<f64>,
    pub atol: Option<f64>,
    pub rtol: Option<f64>,
    pub max_steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub jitter: Option<bool>,
    pub storage: Option<String>,
    pub ordering: Option<String>,
    pub serial: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    None,
    File(PathBuf),
    Synthetic { seed: u64, length: Option<usize> },
}

/// Fully resolved and validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: String,
    pub variant: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub data: DataSource,
    pub sampler: SamplerConfig,
    pub chains: usize,
    pub out: PathBuf,
    pub metric: MetricOptions,
    pub serial: bool,
}

fn parse_storage(s: &str) -> Result<Storage> {
    match s.to_ascii_lowercase().as_str() {
        "dense" => Ok(Storage::Dense),
        "sparse" => Ok(Storage::Sparse),
        _ => bail!("unknown storage `{s}`; expected one of: dense, sparse"),
    }
}

fn parse_ordering(s: &str) -> Result<Ordering> {
    match s.to_ascii_lowercase().as_str() {
        "natural" => Ok(Ordering::Natural),
        "min-degree" | "amd" => Ok(Ordering::MinimumDegree),
        _ => bail!("unknown ordering `{s}`; expected one of: natural, min-degree"),
    }
}

pub fn storage_name(s: Storage) -> &'static str {
    match s {
        Storage::Dense => "dense",
        Storage::Sparse => "sparse",
    }
}

pub fn ordering_name(o: Ordering) -> &'static str {
    match o {
        Ordering::Natural => "natural",
        Ordering::MinimumDegree => "min-degree",
    }
}

impl RunConfig {
    /// Merges the config file (if any) with flags and validates the result.
    pub fn from_args(args: &Args) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let base_dir = args.config.as_deref().and_then(Path::parent).map(Path::to_path_buf);

        let model = args.model.clone().or(file.model).context("missing required key `model`")?;
        let entry = models::entry(&model)?;
        let mut params = file.params;
        params.extend(args.params.iter().cloned());
        entry.resolve_params(&params)?;

        let metric_name = args.metric.clone().or(file.metric);
        let mode: Mode = match metric_name {
            Some(m) => m.parse().context("key `metric`")?,
            None => Mode::default(),
        };
        let variant = args.variant.clone().or(file.variant);
        entry.resolve_variant(variant.as_deref(), mode).context("key `variant`")?;

        let data = match (args.data.clone(), file.data) {
            (Some(p), _) => Some(p),
            // paths in a config file are relative to the file
            (None, Some(p)) => Some(match (&base_dir, p.is_relative()) {
                (Some(d), true) => d.join(p),
                _ => p,
            }),
            (None, None) => None,
        };
        let synthetic_seed = args.synthetic_seed.or(file.synthetic_seed);
        let length = args.length.or(file.length);
        let data = match data {
            Some(p) => {
                if !p.is_file() {
                    bail!("key `data`: file {} does not exist", p.display());
                }
                DataSource::File(p)
            }
            None if entry.needs_data || synthetic_seed.is_some() => DataSource::Synthetic {
                seed: synthetic_seed.unwrap_or(1),
                length,
            },
            None => DataSource::None,
        };

        let d = SamplerConfig::default();
        let sampler = SamplerConfig {
            t_max: args.tmax.or(file.tmax).unwrap_or(d.t_max),
            warmup_fraction: args.warmup_fraction.or(file.warmup_fraction).unwrap_or(d.warmup_fraction),
            n_samples: args.samples.or(file.samples).unwrap_or(d.n_samples),
            lambda: args.lambda.or(file.lambda),
            atol: args.atol.or(file.atol).unwrap_or(d.atol),
            rtol: args.rtol.or(file.rtol).unwrap_or(d.rtol),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
            mode,
            max_steps: args.max_steps.or(file.max_steps).unwrap_or(d.max_steps),
        };
        sampler.validate()?;
        let chains = args.chains.or(file.chains).unwrap_or(4);
        if chains == 0 {
            bail!("key `chains` must be positive");
        }
        if sampler.seed.checked_add(chains as u64 - 1).is_none() {
            bail!("key `seed`: seed + chain index overflows");
        }

        let storage = args.storage.clone().or(file.storage).map(|s| parse_storage(&s)).transpose().context("key `storage`")?;
        let ordering = args
            .ordering
            .clone()
            .or(file.ordering)
            .map(|s| parse_ordering(&s))
            .transpose()
            .context("key `ordering`")?
            .unwrap_or_default();
        let metric = MetricOptions {
            storage,
            ordering,
            jitter: args.jitter || file.jitter.unwrap_or(false),
        };

        Ok(RunConfig {
            model: entry.name.to_string(),
            variant,
            params,
            data,
            sampler,
            chains,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("lgc-out")),
            metric,
            serial: args.serial || file.serial.unwrap_or(false),
        })
    }

    /// Seed of chain `k`.
    pub fn chain_seed(&self, k: usize) -> u64 {
        self.sampler.seed + k as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Args {
        Args::try_parse_from(std::iter::once("lgc").chain(v.iter().copied())).unwrap()
    }

    #[test]
    fn funnel_flags_resolve() {
        let c = RunConfig::from_args(&args(&["--model", "funnel", "--tmax", "2000", "--chains", "4", "--seed", "7", "--metric", "rm"]))
            .unwrap();
        assert_eq!(c.sampler.t_max, 2000.0);
        assert_eq!(c.chains, 4);
        assert_eq!(c.sampler.mode, Mode::Rm);
        assert_eq!(c.chain_seed(3), 10);
        assert_eq!(c.data, DataSource::None);
    }

    #[test]
    fn bad_metric_lists_choices() {
        let e = RunConfig::from_args(&args(&["--model", "funnel", "--metric", "xy"])).unwrap_err();
        let msg = format!("{e:#}");
        assert!(msg.contains("rm") && msg.contains("em") && msg.contains("metric"), "{msg}");
    }

    #[test]
    fn unknown_model_is_rejected() {
        let e = RunConfig::from_args(&args(&["--model", "nope"])).unwrap_err();
        assert!(format!("{e:#}").contains("funnel"));
    }

    #[test]
    fn missing_model_names_key() {
        let e = RunConfig::from_args(&args(&[])).unwrap_err();
        assert!(format!("{e:#}").contains("`model`"));
    }

    #[test]
    fn missing_data_file_names_key() {
        let e = RunConfig::from_args(&args(&["--model", "bc", "--data", "/nonexistent/x.csv"])).unwrap_err();
        assert!(format!("{e:#}").contains("`data`"));
    }

    #[test]
    fn data_models_default_to_synthetic() {
        let c = RunConfig::from_args(&args(&["--model", "sv_leverage"])).unwrap();
        assert_eq!(c.data, DataSource::Synthetic { seed: 1, length: None });
    }

    #[test]
    fn param_flag_parses() {
        let c = RunConfig::from_args(&args(&["--model", "standard_normal", "--param", "d=5"])).unwrap();
        assert_eq!(c.params["d"], 5.0);
        assert!(Args::try_parse_from(["lgc", "--param", "d"]).is_err());
    }

    #[test]
    fn file_rejects_unknown_keys_and_bad_types() {
        assert!(toml::from_str::<FileConfig>("modle = \"funnel\"").is_err());
        assert!(toml::from_str::<FileConfig>("tmax = \"long\"").is_err());
        assert!(toml::from_str::<FileConfig>("model = \"funnel\"\ntmax = 10.0").is_ok());
    }

    #[test]
    fn file_then_flag_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "model = \"funnel\"\nlambda = 2.0\nchains = 2\n").unwrap();
        let mut a = args(&["--lambda", "0.5"]);
        a.config = Some(p);
        let c = RunConfig::from_args(&a).unwrap();
        assert_eq!(c.sampler.lambda, Some(0.5));
        assert_eq!(c.chains, 2);
    }
}
