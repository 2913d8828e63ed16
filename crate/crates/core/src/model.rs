//! Model configuration, the full parameter state of one chain, and
//! ancestral generation.

use crate::error::{consistency_err, param_err, Result};
use crate::families::{DurationFamily, DurationParams, EmissionFamily, EmissionParams};
use crate::path::{FullState, LatentPath};
use crate::prob::{sample_categorical, GammaPrior, RngStream};
use crate::real::Real;
use crate::sngp::{instantiate_state, prune_state, SngpState};
use crate::topology::{Layout, Topology};
use crate::transition::{sample_pi, CellRow, CountMatrix, TransitionMatrix};
use serde::{Deserialize, Serialize};

/// A concentration parameter, optionally resampled by Metropolis-Hastings
/// under a gamma hyperprior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Concentration {
    pub value: f64,
    pub resample: bool,
    pub prior: GammaPrior,
    /// Standard deviation of the log-scale random walk.
    pub step: f64,
}

impl Default for Concentration {
    fn default() -> Self {
        Self { value: 1.0, resample: true, prior: GammaPrior { shape: 1.0, scale: 1.0 }, step: 0.5 }
    }
}

impl Concentration {
    pub fn fixed(value: f64) -> Self {
        Self { value, resample: false, ..Self::default() }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.value > 0.0) || !self.value.is_finite() {
            return Err(param_err!("{name} must be positive, got {}", self.value));
        }
        if !(self.step > 0.0) {
            return Err(param_err!("{name} step must be positive, got {}", self.step));
        }
        GammaPrior::new(self.prior.shape, self.prior.scale)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub topology: Topology,
    pub emission: EmissionFamily,
    pub duration: DurationFamily,
    /// Stick-breaking concentration and discount.
    pub c: f64,
    pub d: f64,
    pub alpha0: Concentration,
    pub alpha1: Concentration,
    /// Slice temperature: `u_t = p_t * B_t`, `B_t ~ Beta(1/K, K)`.
    pub temperature: f64,
    /// Logit-scale step of the stick-weight random walk.
    pub stick_step: f64,
}

impl ModelConfig {
    pub fn new(topology: Topology, emission: EmissionFamily, duration: DurationFamily) -> Self {
        Self {
            topology,
            emission,
            duration,
            c: 1.0,
            d: 0.0,
            alpha0: Concentration::default(),
            alpha1: Concentration::default(),
            temperature: 1.0,
            stick_step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.emission.validate()?;
        self.duration.validate()?;
        crate::prob::sticks::validate_py(self.c, self.d)?;
        self.alpha0.validate("alpha0")?;
        self.alpha1.validate("alpha1")?;
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(param_err!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.stick_step > 0.0) {
            return Err(param_err!("stick step must be positive, got {}", self.stick_step));
        }
        Ok(())
    }
}

/// Every parameter of one chain except the latent path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState<T> {
    pub weights: SngpState<T>,
    pub pi: TransitionMatrix<T>,
    pub theta: Vec<EmissionParams>,
    pub lambda: Vec<DurationParams>,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Birth-order id of each tracked state, stable across pruning.
    pub ids: Vec<u64>,
    pub next_id: u64,
}

impl<T: Real> ModelState<T> {
    /// Ancestral draw of all parameters with `n_tracked` explicit states
    /// (ignored for finite topologies).
    pub fn sample_prior(config: &ModelConfig, n_tracked: usize, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let alpha0 = config.alpha0.value;
        let alpha1 = config.alpha1.value;
        let weights = SngpState::sample_prior(config.topology, n_tracked, config.c, config.d, alpha0, rng)?;
        let n = weights.layout().n_tracked;
        let pi = sample_pi(&weights.beta.rows, alpha1, &CountMatrix::zeros(n), rng)?;
        let theta = (0..n).map(|_| config.emission.sample_prior(rng)).collect::<Result<_>>()?;
        let lambda = (0..n).map(|_| config.duration.sample_prior(rng)).collect::<Result<_>>()?;
        Ok(Self { weights, pi, theta, lambda, alpha0, alpha1, ids: (0..n as u64).collect(), next_id: n as u64 })
    }

    pub fn layout(&self) -> Layout {
        self.weights.layout()
    }

    pub fn n_tracked(&self) -> usize {
        self.theta.len()
    }

    /// Splits a new state off residual `cell`, drawing its emission and
    /// duration parameters from their priors. Returns its index.
    pub fn instantiate(&mut self, config: &ModelConfig, cell: usize, rng: &mut RngStream) -> Result<usize> {
        let at = instantiate_state(&mut self.weights, &mut self.pi, self.alpha0, self.alpha1, cell, rng)?;
        self.theta.insert(at, config.emission.sample_prior(rng)?);
        self.lambda.insert(at, config.duration.sample_prior(rng)?);
        self.ids.insert(at, self.next_id);
        self.next_id += 1;
        Ok(at)
    }

    pub fn prune(&mut self, j: usize) -> Result<()> {
        prune_state(&mut self.weights, &mut self.pi, j)?;
        self.theta.remove(j);
        self.lambda.remove(j);
        self.ids.remove(j);
        Ok(())
    }

    /// Prunes every tracked state the path does not visit and relabels the
    /// path. Left-to-right models keep every state below the last visited
    /// one, so the tracked states stay a prefix of the stick order; finite
    /// topologies are left untouched.
    pub fn prune_unused(&mut self, path: &mut LatentPath) -> Result<usize> {
        let topology = self.layout().topology;
        if topology.is_finite() {
            return Ok(0);
        }
        let n = self.n_tracked();
        let mut used = vec![false; n];
        for z in &path.z {
            used[z.s] = true;
        }
        if topology == Topology::LeftToRight {
            let keep = used.iter().rposition(|&u| u).map_or(0, |j| j + 1);
            for j in (keep..n).rev() {
                self.prune(j)?;
            }
            return Ok(n - keep);
        }
        let mut removed = 0;
        for j in (0..n).rev() {
            if !used[j] {
                self.prune(j)?;
                removed += 1;
            }
        }
        if removed > 0 {
            let mut map = vec![usize::MAX; n];
            let mut next = 0;
            for (j, &u) in used.iter().enumerate() {
                if u {
                    map[j] = next;
                    next += 1;
                }
            }
            path.relabel(|s| map[s]);
        }
        Ok(removed)
    }

    /// Initial-state probability of tracked state `s`.
    pub fn initial_prob(&self, s: usize) -> T {
        self.weights.beta.root.tracked[s]
    }

    /// `p(z | z_prev)` under countdown dynamics.
    pub fn transition_prob(&self, config: &ModelConfig, prev: FullState, z: FullState) -> T {
        if prev.r > 0 {
            return if z.s == prev.s && z.r + 1 == prev.r { T::one() } else { T::zero() };
        }
        self.pi.rows[prev.s].tracked[z.s] * config.duration.ln_pmf::<T>(&self.lambda[z.s], z.r).exp()
    }

    /// `p(z_1)`: initial state times its duration.
    pub fn start_prob(&self, config: &ModelConfig, z: FullState) -> T {
        self.initial_prob(z.s) * config.duration.ln_pmf::<T>(&self.lambda[z.s], z.r).exp()
    }

    /// `log p(y, z | pi, beta, theta, lambda)`.
    pub fn ln_joint(&self, config: &ModelConfig, path: &LatentPath, y: &[f64]) -> f64 {
        if path.is_empty() {
            return 0.0;
        }
        let mut total = self.start_prob(config, path.z[0]).f64().ln();
        for t in 1..path.len() {
            if path.z[t - 1].r > 0 {
                // Deterministic countdown: log 1, or impossible.
                if path.z[t].s != path.z[t - 1].s || path.z[t].r + 1 != path.z[t - 1].r {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            total += self.transition_prob(config, path.z[t - 1], path.z[t]).f64().ln();
        }
        for (z, &v) in path.z.iter().zip(y) {
            total += self.theta[z.s].ln_lik::<f64>(v);
        }
        total
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let layout = self.layout();
        self.weights.check(tol)?;
        self.pi.check(&layout, tol)?;
        let n = layout.n_tracked;
        if self.theta.len() != n || self.lambda.len() != n || self.ids.len() != n {
            return Err(consistency_err!("per-state parameter vectors do not match {n} tracked states"));
        }
        Ok(())
    }

    /// Draws a target from the initial distribution (`from = None`) or
    /// from row `from`, instantiating states when the draw lands in a
    /// residual cell. The position inside the residual is drawn once and
    /// the cell is split until the position falls in a tracked state, so
    /// the result is an exact draw from the infinite row.
    pub fn draw_target(&mut self, config: &ModelConfig, from: Option<usize>, rng: &mut RngStream) -> Result<usize> {
        let row = |state: &Self| -> CellRow<T> {
            match from {
                None => state.weights.beta.root.clone(),
                Some(m) => state.pi.rows[m].clone(),
            }
        };
        let r0 = row(self);
        let flat = r0.flat();
        let k = sample_categorical(&flat, rng)?;
        if k < r0.tracked.len() {
            return Ok(k);
        }
        let mut cell = k - r0.tracked.len();
        let mut x = rng.uniform_open() * r0.residual[cell].f64();
        let layout_is_lr = self.layout().topology == Topology::LeftToRight;
        loop {
            let at = self.instantiate(config, cell, rng)?;
            let new_mass = row(self).tracked[at].f64();
            if x < new_mass {
                return Ok(at);
            }
            x -= new_mass;
            if layout_is_lr {
                cell += 1;
            }
            if row(self).residual[cell].f64() <= 0.0 {
                // Rounding left nothing beyond the split; take the new state.
                return Ok(at);
            }
        }
    }
}

/// Ancestral draw of parameters, path and observations. States are
/// instantiated as the trajectory first visits them; states split off but
/// never entered are pruned as in a sweep.
pub fn prior_generate<T: Real>(
    config: &ModelConfig,
    len: usize,
    n_tracked_init: usize,
    rng: &mut RngStream,
) -> Result<(ModelState<T>, LatentPath, Vec<f64>)> {
    if len == 0 {
        return Err(param_err!("sequence length must be at least 1"));
    }
    let mut state = ModelState::<T>::sample_prior(config, n_tracked_init, rng)?;
    let mut z: Vec<FullState> = Vec::with_capacity(len);
    for _ in 0..len {
        let next = match z.last() {
            Some(prev) if prev.r > 0 => FullState { s: prev.s, r: prev.r - 1 },
            prev => {
                let from = prev.map(|p| p.s);
                let before = state.n_tracked();
                let s = state.draw_target(config, from, rng)?;
                if state.n_tracked() != before && state.layout().topology == Topology::LeftToRight {
                    // Insertions land above every state visited so far.
                    debug_assert!(z.iter().all(|p| p.s < s));
                }
                let r = config.duration.sample(&state.lambda[s], rng)?;
                FullState { s, r }
            }
        };
        z.push(next);
    }
    let mut path = LatentPath::new(z);
    // States split off while drawing a target but never entered.
    state.prune_unused(&mut path)?;
    let y = path.z.iter().map(|z| state.theta[z.s].sample(rng)).collect::<Result<Vec<_>>>()?;
    Ok((state, path, y))
}

/// A finite model with fixed parameters, used to synthesize data with a
/// known ground truth. A transition row of zeros marks an absorbing state,
/// which lasts until the end of the series once entered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedModel {
    pub initial: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub theta: Vec<EmissionParams>,
    pub lambda: Vec<DurationParams>,
    pub duration: DurationFamily,
}

impl FixedModel {
    pub fn validate(&self) -> Result<()> {
        let k = self.initial.len();
        if k == 0 || self.pi.len() != k || self.theta.len() != k || self.lambda.len() != k {
            return Err(param_err!("fixed model needs matching per-state vectors"));
        }
        for (i, row) in self.pi.iter().chain(std::iter::once(&self.initial)).enumerate() {
            let s: f64 = row.iter().sum();
            let absorbing = i < k && s == 0.0;
            if row.len() != k || row.iter().any(|&p| p < 0.0) || ((s - 1.0).abs() > 1e-9 && !absorbing) {
                return Err(param_err!("fixed model rows must be probability vectors of length {k}"));
            }
        }
        Ok(())
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        self.pi[s].iter().all(|&p| p == 0.0)
    }

    pub fn generate(&self, len: usize, rng: &mut RngStream) -> Result<(LatentPath, Vec<f64>)> {
        self.validate()?;
        if len == 0 {
            return Err(param_err!("sequence length must be at least 1"));
        }
        let mut z: Vec<FullState> = Vec::with_capacity(len);
        for t in 0..len {
            let next = match z.last() {
                Some(prev) if prev.r > 0 => FullState { s: prev.s, r: prev.r - 1 },
                Some(prev) if self.is_absorbing(prev.s) => FullState { s: prev.s, r: 0 },
                prev => {
                    let row = prev.map_or(&self.initial, |p| &self.pi[p.s]);
                    let s = sample_categorical(row, rng)?;
                    let r = if self.is_absorbing(s) { len - t - 1 } else { self.duration.sample(&self.lambda[s], rng)? };
                    FullState { s, r }
                }
            };
            z.push(next);
        }
        let path = LatentPath::new(z);
        let y = path.z.iter().map(|z| self.theta[z.s].sample(rng)).collect::<Result<Vec<_>>>()?;
        Ok((path, y))
    }
}
