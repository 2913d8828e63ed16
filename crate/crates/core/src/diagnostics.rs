//! Posterior summaries computed from a list of retained samples: traces,
//! autocorrelations, state-count and change-point histograms, and
//! per-state parameter summaries.
//!
//! Everything here is a pure function of the sample list, so summaries can
//! be recomputed from persisted output.

use crate::error::{param_err, Result};
use crate::gibbs::ChainSample;
use crate::model::{ModelConfig, ModelState};
use crate::path::LatentPath;
use crate::real::Real;
use crate::stats::{mean_and_var, quantile};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Biased-normalized sample autocorrelation for lags `0..=max_lag`.
///
/// A constant series has `rho(0) = 1` and zero at every other lag.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(param_err!("series of length {n} is too short for lag {max_lag}"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    let mut rho = Vec::with_capacity(max_lag + 1);
    rho.push(1.0);
    for lag in 1..=max_lag {
        if c0 == 0.0 {
            rho.push(0.0);
            continue;
        }
        let c: f64 = dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum();
        rho.push(c / c0);
    }
    Ok(rho)
}

/// Number of samples using each count of occupied states.
pub fn state_count_hist(samples: &[ChainSample]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in samples {
        *hist.entry(s.occupied_states()).or_insert(0) += 1;
    }
    hist
}

/// Number of samples with each count of change-points.
pub fn changepoint_count_hist(samples: &[ChainSample]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in samples {
        *hist.entry(s.n_changepoints()).or_insert(0) += 1;
    }
    hist
}

/// Start times of every segment after the first.
pub fn changepoints(path: &LatentPath) -> Vec<usize> {
    path.changepoints()
}

/// `log p(y, z | pi, theta, lambda)`; the first step uses the initial
/// distribution over states times the duration probability.
pub fn joint_loglik<T: Real>(state: &ModelState<T>, config: &ModelConfig, path: &LatentPath, y: &[f64]) -> f64 {
    state.ln_joint(config, path, y)
}

/// Most frequent key and its share of the total. Ties go to the smaller key.
pub fn mode(hist: &BTreeMap<usize, usize>) -> Option<(usize, f64)> {
    let total: usize = hist.values().sum();
    let (k, n) = hist.iter().fold(None, |best: Option<(usize, usize)>, (&k, &n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((k, n)),
    })?;
    Some((k, n as f64 / total as f64))
}

/// Mean and central 95% interval of a scalar posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub var: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, var) = mean_and_var(xs);
        Self { mean, var, lo: quantile(xs, 0.025), hi: quantile(xs, 0.975) }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Posterior summary of one state, followed through the samples by its
/// birth id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub id: u64,
    /// Samples in which the state is occupied.
    pub samples: usize,
    pub emission_mean: Interval,
    pub duration_mean: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub loglik: Vec<f64>,
    pub t_star: usize,
    /// Emission mean and mean duration of the state occupying `t_star`.
    pub mean_trace: Vec<f64>,
    pub duration_trace: Vec<f64>,
    pub state_counts: BTreeMap<usize, usize>,
    pub changepoint_counts: BTreeMap<usize, usize>,
    /// Samples with a change-point at each time step.
    pub changepoint_locations: Vec<usize>,
    pub states: Vec<StateSummary>,
}

impl Diagnostics {
    /// Summaries of `samples` for a series of length `len`. `t_star`
    /// defaults to `len / 2`.
    pub fn compute(samples: &[ChainSample], len: usize, t_star: Option<usize>) -> Result<Self> {
        if samples.is_empty() {
            return Err(param_err!("no samples to summarize"));
        }
        let t_star = t_star.unwrap_or(len / 2);
        if t_star >= len {
            return Err(param_err!("fixed time {t_star} is outside a series of length {len}"));
        }
        let mut mean_trace = Vec::with_capacity(samples.len());
        let mut duration_trace = Vec::with_capacity(samples.len());
        let mut locations = vec![0; len];
        let mut per_id: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for s in samples {
            let end = s.segments.last().map_or(0, |g| g.start + g.len);
            if end != len {
                return Err(param_err!("sample at sweep {} covers {end} steps, expected {len}", s.sweep));
            }
            let k = s.state_at(t_star).expect("path covers the series");
            mean_trace.push(s.theta[k].mean());
            duration_trace.push(s.lambda[k].mean());
            for g in &s.segments[1..] {
                locations[g.start] += 1;
            }
            let mut occupied: Vec<usize> = s.segments.iter().map(|g| g.state).collect();
            occupied.sort_unstable();
            occupied.dedup();
            for k in occupied {
                let e = per_id.entry(s.ids[k]).or_default();
                e.0.push(s.theta[k].mean());
                e.1.push(s.lambda[k].mean());
            }
        }
        let states = per_id
            .into_iter()
            .map(|(id, (m, d))| StateSummary { id, samples: m.len(), emission_mean: Interval::of(&m), duration_mean: Interval::of(&d) })
            .collect();
        Ok(Self {
            loglik: samples.iter().map(|s| s.loglik).collect(),
            t_star,
            mean_trace,
            duration_trace,
            state_counts: state_count_hist(samples),
            changepoint_counts: changepoint_count_hist(samples),
            changepoint_locations: locations,
            states,
        })
    }
}
