//! Joint-distribution check of the sampler: forward simulation from the
//! prior against chains that alternate a sweep with regenerating the data.
//!
//! Each successive chain starts from its own prior draw, so chain means are
//! independent and their spread gives the standard error directly, however
//! slowly a single chain mixes.

use crate::error::{param_err, Result};
use crate::families::EmissionParams;
use crate::gibbs::Chain;
use crate::model::{prior_generate, ModelConfig, ModelState};
use crate::path::LatentPath;
use crate::prob::RngStream;
use crate::real::Real;
use crate::stats::{mean_and_var, two_sided_normal_p};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GewekeOptions {
    pub len: usize,
    /// Independent draws from the prior.
    pub marginal: usize,
    /// Independent alternating chains.
    pub chains: usize,
    /// Sweeps per chain, each recorded.
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: &'static str,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
    pub p: f64,
}

/// Label-free summaries of parameters, path and data. Per-state values are
/// read at the states occupying the first and last time steps.
pub fn statistics<T: Real>(state: &ModelState<T>, path: &LatentPath, y: &[f64]) -> Vec<(&'static str, f64)> {
    let len = path.len();
    let first = path.z[0];
    let last = path.z[len - 1];
    let segs = path.segments();
    let w = &state.weights.sticks.w.tracked;
    let g = &state.weights.ln_masses;
    let total_mass: f64 = g.flat().iter().map(|x| x.exp()).sum();
    let pi_next = segs.get(1).map_or(0.0, |s| state.pi.rows[first.s].tracked[s.state].f64());
    let (mean0, lnvar0) = emission_summary(&state.theta[first.s]);
    let (mean1, _) = emission_summary(&state.theta[last.s]);
    let (ym, _) = mean_and_var(y);
    vec![
        ("w[z_first]", w[first.s].f64()),
        ("gamma[z_first]", g.tracked[first.s].exp()),
        ("gamma total", total_mass),
        ("beta_root[z_first]", state.initial_prob(first.s).f64()),
        ("pi[z_first][next]", pi_next),
        ("theta mean[z_first]", mean0),
        ("theta ln spread[z_first]", lnvar0),
        ("lambda mean[z_first]", state.lambda[first.s].mean()),
        ("r_first", first.r as f64),
        ("segments", segs.len() as f64),
        ("occupied", path.occupied_states().len() as f64),
        ("y mean", ym),
        ("y square mean", y.iter().map(|v| v * v).sum::<f64>() / len as f64),
        ("y_first", y[0]),
        ("y_last", y[len - 1]),
        ("same state first and last", (first.s == last.s) as u8 as f64),
        ("theta mean[z_last]", mean1),
        ("lambda mean[z_last]", state.lambda[last.s].mean()),
        ("w[z_last]", w[last.s].f64()),
        ("gamma[z_last]", g.tracked[last.s].exp()),
    ]
}

fn emission_summary(p: &EmissionParams) -> (f64, f64) {
    match *p {
        EmissionParams::Gaussian { mean, var } => (mean, var.ln()),
        EmissionParams::Poisson { rate } => (rate, rate.ln()),
    }
}

/// Runs both simulators and compares every statistic's mean with a
/// two-sample z test. Concentrations are held at their configured values.
pub fn geweke_test<T: Real>(config: &ModelConfig, opts: &GewekeOptions) -> Result<Vec<GewekeStat>> {
    if opts.len == 0 || opts.marginal < 2 || opts.chains < 2 || opts.steps == 0 {
        return Err(param_err!("geweke test needs len >= 1, marginal >= 2, chains >= 2 and steps >= 1"));
    }
    let mut config = config.clone();
    config.alpha0.resample = false;
    config.alpha1.resample = false;
    if let Some(m) = config.duration.max() {
        if m > opts.len {
            return Err(param_err!("duration cap {m} exceeds the sequence length {}", opts.len));
        }
    } else {
        return Err(param_err!("geweke test needs a truncated duration family"));
    }

    let mut rng = RngStream::new(opts.seed);
    let mut marginal: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for _ in 0..opts.marginal {
        let (state, path, y) = prior_generate::<T>(&config, opts.len, 0, &mut rng)?;
        let stats = statistics(&state, &path, &y);
        names = stats.iter().map(|s| s.0).collect();
        record(&mut marginal, &stats);
    }

    // Per-chain means of every statistic.
    let mut successive: Vec<Vec<f64>> = Vec::new();
    for c in 0..opts.chains {
        let (state, path, y) = prior_generate::<T>(&config, opts.len, 0, &mut rng)?;
        let mut chain = Chain::from_state(config.clone(), y, state, path, RngStream::substream(opts.seed, c as u64 + 1));
        let mut sums = vec![0.0; names.len()];
        for _ in 0..opts.steps {
            chain.sweep()?;
            chain.resample_data()?;
            for (s, x) in sums.iter_mut().zip(statistics(&chain.state, &chain.path, &chain.y)) {
                *s += x.1;
            }
        }
        let means: Vec<(&'static str, f64)> = names.iter().zip(&sums).map(|(n, s)| (*n, s / opts.steps as f64)).collect();
        record(&mut successive, &means);
    }

    Ok(names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let (m1, v1) = mean_and_var(&marginal[k]);
            let (m2, v2) = mean_and_var(&successive[k]);
            let se = (v1 / marginal[k].len() as f64 + v2 / successive[k].len() as f64).sqrt();
            let z = if se > 0.0 { (m1 - m2) / se } else if m1 == m2 { 0.0 } else { f64::INFINITY };
            GewekeStat { name, marginal_mean: m1, successive_mean: m2, z, p: two_sided_normal_p(z) }
        })
        .collect())
}

fn record(into: &mut Vec<Vec<f64>>, stats: &[(&'static str, f64)]) {
    if into.is_empty() {
        into.resize(stats.len(), Vec::new());
    }
    for (k, s) in stats.iter().enumerate() {
        into[k].push(s.1);
    }
}
