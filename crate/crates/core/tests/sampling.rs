//! Gaussian targets whose posterior moments are known in closed form.

use lgc_core::diagnostics::{ess, split_rhat};
use lgc_core::model::{Model, Target};
use lgc_core::models::{local_level_smoother, Intrinsic, StockWatson, STOCK_WATSON_INIT_SD};
use lgc_core::sampler::{simulate_trajectory, SamplerConfig};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Moments {
    mean: Vec<f64>,
    var: Vec<f64>,
    ess: Vec<f64>,
    /// ESS of the squared deviations, which governs the variance estimate.
    ess_sq: Vec<f64>,
    rhat: Vec<f64>,
}

fn sample(t: &dyn Target, chains: usize, t_max: f64, seed: u64) -> Moments {
    let runs: Vec<Vec<Vec<f64>>> = (0..chains)
        .map(|k| {
            let cfg = SamplerConfig { t_max, seed: seed + k as u64, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            simulate_trajectory(t, &cfg, &mut rng).unwrap().samples
        })
        .collect();
    let d = t.dim();
    let mut m = Moments { mean: vec![], var: vec![], ess: vec![], ess_sq: vec![], rhat: vec![] };
    for j in 0..d {
        let coord: Vec<Vec<f64>> = runs.iter().map(|c| c.iter().map(|q| q[j]).collect()).collect();
        let all: Vec<f64> = coord.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mu = all.iter().sum::<f64>() / n;
        m.mean.push(mu);
        m.var.push(all.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0));
        m.ess.push(ess(&coord).unwrap());
        let sq: Vec<Vec<f64>> = coord.iter().map(|c| c.iter().map(|v| (v - mu).powi(2)).collect()).collect();
        m.ess_sq.push(ess(&sq).unwrap());
        m.rhat.push(split_rhat(&coord).unwrap());
    }
    m
}

fn check(m: &Moments, mean: &[f64], var: &[f64]) {
    for j in 0..mean.len() {
        let se = (var[j] / m.ess[j]).sqrt();
        assert!((m.mean[j] - mean[j]).abs() < 4.0 * se, "coord {j}: mean {} vs {} (se {se})", m.mean[j], mean[j]);
        // Var of the sample variance of a Gaussian is about 2σ⁴/ESS
        let vse = var[j] * (2.0 / m.ess_sq[j]).sqrt();
        assert!((m.var[j] - var[j]).abs() < 4.0 * vse, "coord {j}: var {} vs {}", m.var[j], var[j]);
        assert!(m.rhat[j] < 1.02, "coord {j}: rhat {}", m.rhat[j]);
    }
}

#[test]
fn fixed_volatility_local_level_matches_kalman_smoother() {
    let y: Vec<f64> = (0..20).map(|i| (0.4 * i as f64).sin() + 0.1 * i as f64).collect();
    let (z, x) = (0.5f64.ln(), 1.3f64.ln());
    let model = Model::new(StockWatson::fixed(y.clone(), z, x).unwrap()).unwrap();
    let (mean, var) = local_level_smoother(&y, z.exp(), x.exp(), STOCK_WATSON_INIT_SD.powi(2));
    let m = sample(&model, 4, 1000.0, 100);
    check(&m, &mean, &var);
}

#[test]
fn proper_intrinsic_gmrf_variances() {
    let (kappa, tau) = (2.0, 0.5);
    let model = Model::new(Intrinsic::new(kappa, Some(tau)).unwrap()).unwrap();
    let lap = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
    let cov = (lap * kappa + DMatrix::identity(3, 3) * tau).try_inverse().unwrap();
    let m = sample(&model, 4, 1000.0, 200);
    check(&m, &[0.0; 3], &[cov[(0, 0)], cov[(1, 1)], cov[(2, 2)]]);
}
