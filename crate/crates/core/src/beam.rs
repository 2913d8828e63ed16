//! Slice variables, the truncated forward recursion over full states
//! `(s, r)`, and backward sampling of a new path.
//!
//! With `u_t = p_t * B_t`, `B_t ~ Beta(1/K, K)`, the joint weight of an
//! edge is `I(u_t < p_t) p_beta(u_t / p_t)`. The beta normalizer is the same
//! for every edge and is dropped.

use crate::error::{consistency_err, Error, Result};
use crate::families::DurationTable;
use crate::model::{ModelConfig, ModelState};
use crate::path::{FullState, LatentPath};
use crate::prob::{sample_beta, sample_categorical, RngStream};
use crate::real::Real;
use crate::topology::Topology;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceVars<T> {
    pub u: Vec<T>,
    pub temperature: f64,
}

/// Unnormalized `Beta(1/K, K)` density at `x`; constant 1 when `K = 1`.
pub fn slice_weight<T: Real>(x: T, temperature: f64) -> T {
    if temperature == 1.0 {
        return T::one();
    }
    let a = T::of(1.0 / temperature);
    let b = T::of(temperature);
    ((a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p()).exp()
}

/// Draws `u_t = p_t * B_t` along the conditioning path.
pub fn sample_slices<T: Real>(
    path: &LatentPath,
    state: &ModelState<T>,
    config: &ModelConfig,
    rng: &mut RngStream,
) -> Result<SliceVars<T>> {
    let k = config.temperature;
    let mut u = Vec::with_capacity(path.len());
    for t in 0..path.len() {
        let p = if t == 0 { state.start_prob(config, path.z[0]) } else { state.transition_prob(config, path.z[t - 1], path.z[t]) };
        if !(p > T::zero()) {
            return Err(consistency_err!("conditioning path has zero probability at t={t}"));
        }
        let b = T::of(sample_beta(1.0 / k, k, rng)?);
        let mut v = p * b;
        if !(v < p) {
            v = p * (T::one() - T::epsilon());
        }
        if !(v > T::zero()) {
            v = T::min_positive_value();
        }
        u.push(v);
    }
    Ok(SliceVars { u, temperature: k })
}

/// Normalized forward weights per time step, sorted by `(s, r)`, with the
/// caches the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardTable<T> {
    pub steps: Vec<Vec<(FullState, T)>>,
    /// Positions of the `r = 0` entries in each step.
    zeros: Vec<Vec<usize>>,
    durations: Vec<DurationTable<T>>,
}

impl<T: Real> ForwardTable<T> {
    pub fn support_size(&self, t: usize) -> usize {
        self.steps[t].len()
    }

    pub fn weight(&self, t: usize, z: FullState) -> T {
        self.steps[t].binary_search_by(|(x, _)| x.cmp(&z)).map_or(T::zero(), |i| self.steps[t][i].1)
    }
}

/// Largest remaining duration the forward pass considers.
pub fn duration_cap(config: &ModelConfig, len: usize) -> usize {
    config.duration.max().map_or(len, |m| m.min(len))
}

struct Workspace<T> {
    loglik: Vec<Vec<T>>,
    durations: Vec<DurationTable<T>>,
    scratch: Vec<Vec<T>>,
    touched: Vec<Vec<usize>>,
}

impl<T: Real> Workspace<T> {
    fn new_state_row(state: &ModelState<T>, config: &ModelConfig, s: usize, y: &[f64], cap: usize) -> (Vec<T>, DurationTable<T>) {
        let ll = y.iter().map(|&v| state.theta[s].ln_lik::<T>(v)).collect();
        (ll, config.duration.table(&state.lambda[s], cap))
    }

    fn insert(&mut self, at: usize, row: (Vec<T>, DurationTable<T>), cap: usize) {
        self.loglik.insert(at, row.0);
        self.durations.insert(at, row.1);
        self.scratch.insert(at, vec![T::zero(); cap + 1]);
        self.touched.insert(at, Vec::new());
    }
}

fn max_residual<T: Real>(row: &crate::transition::CellRow<T>) -> Option<(usize, T)> {
    row.residual.iter().copied().enumerate().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
}

/// Instantiates states from `row` (`None` = initial distribution) until
/// every residual entry is below `u`. Returns insertion indices.
fn comply<T: Real>(
    state: &mut ModelState<T>,
    config: &ModelConfig,
    from: Option<usize>,
    u: T,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let mut inserted = Vec::new();
    let mut m = from;
    loop {
        let row = match m {
            None => &state.weights.beta.root,
            Some(i) => &state.pi.rows[i],
        };
        let Some((cell, mass)) = max_residual(row) else { break };
        if mass < u {
            break;
        }
        let at = state.instantiate(config, cell, rng)?;
        if let Some(i) = m.as_mut() {
            if *i >= at && state.layout().topology == Topology::LeftToRight {
                *i += 1;
            }
        }
        inserted.push(at);
    }
    Ok(inserted)
}

/// Forward filtering under the slice constraints. Rows that can be left
/// at a given step are made to satisfy `max residual < u_t` by
/// instantiating states first, so no untracked state is ever admissible.
pub fn forward_pass<T: Real>(
    y: &[f64],
    slices: &SliceVars<T>,
    state: &mut ModelState<T>,
    config: &ModelConfig,
    rng: &mut RngStream,
) -> Result<ForwardTable<T>> {
    let len = y.len();
    if slices.u.len() != len || len == 0 {
        return Err(consistency_err!("slice vector length {} does not match {len} observations", slices.u.len()));
    }
    let cap = duration_cap(config, len);
    let k = slices.temperature;
    let lr = state.layout().topology == Topology::LeftToRight;
    let n = state.n_tracked();
    let mut ws = Workspace { loglik: Vec::with_capacity(n), durations: Vec::with_capacity(n), scratch: Vec::new(), touched: Vec::new() };
    for s in 0..n {
        let row = Workspace::new_state_row(state, config, s, y, cap);
        ws.insert(s, row, cap);
    }
    let mut steps: Vec<Vec<(FullState, T)>> = Vec::with_capacity(len);
    let mut zeros: Vec<Vec<usize>> = Vec::with_capacity(len);

    for t in 0..len {
        let u = slices.u[t];
        // Rows that may be left at this step. Splitting a residual cell only
        // shrinks residual entries, so rows checked earlier stay compliant.
        let mut parents: Vec<Option<usize>> =
            if t == 0 { vec![None] } else { zeros[t - 1].iter().map(|&i| Some(steps[t - 1][i].0.s)).collect() };
        for i in 0..parents.len() {
            for at in comply(state, config, parents[i], u, rng)? {
                let row = Workspace::new_state_row(state, config, at, y, cap);
                ws.insert(at, row, cap);
                if lr {
                    for step in &mut steps {
                        step.iter_mut().filter(|(z, _)| z.s >= at).for_each(|(z, _)| z.s += 1);
                    }
                    parents.iter_mut().flatten().filter(|m| **m >= at).for_each(|m| *m += 1);
                }
            }
        }

        let n = state.n_tracked();
        let add = |ws: &mut Workspace<T>, s: usize, r: usize, w: T| {
            if ws.scratch[s][r] == T::zero() {
                ws.touched[s].push(r);
            }
            ws.scratch[s][r] = ws.scratch[s][r] + w;
        };
        if t == 0 {
            for s in 0..n {
                let b = state.initial_prob(s);
                if !(b > u) {
                    continue;
                }
                let thr = u / b;
                let rs: Vec<usize> = ws.durations[s].above(thr).collect();
                for r in rs {
                    let p = b * ws.durations[s].get(r);
                    if u < p {
                        add(&mut ws, s, r, slice_weight(u / p, k));
                    }
                }
            }
        } else {
            let prev = &steps[t - 1];
            let countdown = slice_weight(u, k);
            for &(z, a) in prev.iter() {
                if z.r > 0 {
                    add(&mut ws, z.s, z.r - 1, a * countdown);
                }
            }
            for &i in &zeros[t - 1] {
                let (zp, a) = prev[i];
                let row = &state.pi.rows[zp.s];
                for s in 0..n {
                    let pi = row.tracked[s];
                    if !(pi > u) {
                        continue;
                    }
                    let thr = u / pi;
                    let rs: Vec<usize> = ws.durations[s].above(thr).collect();
                    for r in rs {
                        let p = pi * ws.durations[s].get(r);
                        if u < p {
                            add(&mut ws, s, r, a * slice_weight(u / p, k));
                        }
                    }
                }
            }
        }

        // Emissions, scaled by the largest log-likelihood present.
        let mut max_ll = T::neg_infinity();
        for s in 0..n {
            if !ws.touched[s].is_empty() {
                max_ll = max_ll.max(ws.loglik[s][t]);
            }
        }
        let mut step = Vec::new();
        let mut total = T::zero();
        for s in 0..n {
            if ws.touched[s].is_empty() {
                continue;
            }
            let e = (ws.loglik[s][t] - max_ll).exp();
            let mut rs = std::mem::take(&mut ws.touched[s]);
            rs.sort_unstable();
            for &r in &rs {
                let w = ws.scratch[s][r] * e;
                ws.scratch[s][r] = T::zero();
                if w > T::zero() {
                    step.push((FullState { s, r }, w));
                    total = total + w;
                }
            }
            rs.clear();
            ws.touched[s] = rs;
        }
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::Invariant(format!("forward pass has no admissible state at t={t}")));
        }
        let inv = T::one() / total;
        step.iter_mut().for_each(|(_, w)| *w = *w * inv);
        zeros.push(step.iter().enumerate().filter(|(_, (z, _))| z.r == 0).map(|(i, _)| i).collect());
        steps.push(step);
    }
    Ok(ForwardTable { steps, zeros, durations: ws.durations })
}

/// Samples `z_T` from the last filter, then each `z_t` given `z_{t+1}`.
pub fn backward_sample<T: Real>(
    table: &ForwardTable<T>,
    slices: &SliceVars<T>,
    state: &ModelState<T>,
    rng: &mut RngStream,
) -> Result<LatentPath> {
    let len = table.steps.len();
    let k = slices.temperature;
    let mut z = vec![FullState::new(0, 0); len];
    let last = &table.steps[len - 1];
    let weights: Vec<T> = last.iter().map(|e| e.1).collect();
    z[len - 1] = last[sample_categorical(&weights, rng)?].0;
    let mut cand: Vec<FullState> = Vec::new();
    let mut w: Vec<T> = Vec::new();
    for t in (0..len - 1).rev() {
        let next = z[t + 1];
        let u = slices.u[t + 1];
        cand.clear();
        w.clear();
        let step = &table.steps[t];
        let up = FullState { s: next.s, r: next.r + 1 };
        if let Ok(i) = step.binary_search_by(|(x, _)| x.cmp(&up)) {
            cand.push(up);
            w.push(step[i].1 * slice_weight(u, k));
        }
        let f = table.durations[next.s].get(next.r);
        for &i in &table.zeros[t] {
            let (zp, a) = step[i];
            let p = state.pi.rows[zp.s].tracked[next.s] * f;
            if u < p {
                cand.push(zp);
                w.push(a * slice_weight(u / p, k));
            }
        }
        if cand.is_empty() {
            return Err(Error::Invariant(format!("backward pass has no predecessor at t={t}")));
        }
        z[t] = cand[sample_categorical(&w, rng)?];
    }
    Ok(LatentPath::new(z))
}
