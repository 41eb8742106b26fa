//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use lgc_core::model::{MetricOptions, Storage};
use lgc_core::models::{self, BuildSpec, Built};

/// A catalog model on seeded synthetic data, with its start point.
pub fn fixture(name: &str, variant: Option<&str>, length: usize, storage: Option<Storage>) -> (Built, Vec<f64>) {
    let e = models::entry(name).expect("catalog model");
    let data = e
        .needs_data
        .then(|| models::generate(name, 1, Some(length), &BTreeMap::new()).expect("synthetic data").data);
    let built = models::build(&BuildSpec {
        name,
        variant,
        data: data.as_ref(),
        metric: MetricOptions { storage, ..Default::default() },
        ..Default::default()
    })
    .expect("model builds");
    let q = built.target.init_point().unwrap_or_else(|| vec![0.0; built.target.dim()]);
    (built, q)
}
