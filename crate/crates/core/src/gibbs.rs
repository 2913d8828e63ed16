//! Blocked Gibbs sweeps, concentration updates, chain management and MAP
//! selection.

use crate::beam::{backward_sample, forward_pass, sample_slices};
use crate::error::{consistency_err, param_err, Error, Result};
use crate::families::{DurationFamily, DurationParams, EmissionParams};
use crate::model::{ModelConfig, ModelState};
use crate::path::{FullState, LatentPath, Segment};
use crate::prob::density::ln_gamma_fn;
use crate::prob::{standard_normal, GammaPrior, RngStream};
use crate::real::Real;
use crate::sngp::{compute_beta, ln_sticks_given_tables, mh_sticks, sample_masses, sample_rates, sample_table_counts, TableCounts};
use crate::topology::Topology;
use crate::transition::{count_transitions, sample_pi, CountMatrix};
use serde::{Deserialize, Serialize};

/// One log-scale random-walk Metropolis-Hastings step for a positive
/// parameter under a gamma prior. Returns the new value and whether the
/// proposal was accepted.
pub fn mh_concentration(
    alpha: f64,
    loglik: impl Fn(f64) -> f64,
    prior: &GammaPrior,
    step: f64,
    rng: &mut RngStream,
) -> (f64, bool) {
    let proposal = alpha * (step * standard_normal(rng)).exp();
    if !(proposal > 0.0) || !proposal.is_finite() {
        return (alpha, false);
    }
    let target = |a: f64| loglik(a) + prior.ln_pdf(a) + a.ln();
    let log_ratio = target(proposal) - target(alpha);
    if log_ratio.is_finite() && rng.uniform_open().ln() < log_ratio {
        (proposal, true)
    } else {
        (alpha, false)
    }
}

/// `log p(C, l | alpha1)` up to terms free of `alpha1`, with the rows'
/// transition probabilities integrated out.
pub fn ln_crf_alpha1(counts: &CountMatrix, tables: &TableCounts, alpha1: f64) -> f64 {
    let mut total = 0.0;
    for (m, row) in counts.counts.iter().enumerate() {
        let n: u64 = row.iter().sum();
        if n == 0 {
            continue;
        }
        total += ln_gamma_fn(alpha1) - ln_gamma_fn(alpha1 + n as f64) + tables.row_total(m) as f64 * alpha1.ln();
    }
    total
}

/// Acceptance counters accumulated over a chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub alpha0_accepted: u64,
    pub alpha1_accepted: u64,
    pub alpha_proposed: u64,
    pub sticks_accepted: u64,
    pub sticks_proposed: u64,
    pub instantiated: u64,
    pub pruned: u64,
}

/// Complete state of one chain.
#[derive(Debug, Clone)]
pub struct Chain<T> {
    pub config: ModelConfig,
    pub y: Vec<f64>,
    pub state: ModelState<T>,
    pub path: LatentPath,
    pub sweep: usize,
    pub rng: RngStream,
    pub stats: MoveStats,
}

/// Cuts `len` observations into `n` roughly equal segments, splitting any
/// longer than the duration cap, and labels them in a way the topology
/// allows. Returns the path and the number of states it uses.
pub fn initial_path(config: &ModelConfig, len: usize, n: usize) -> (LatentPath, usize) {
    let n = n.max(1);
    let cap = config.duration.max();
    let chunk = len.div_ceil(n).max(1);
    let piece = cap.map_or(chunk, |m| chunk.min(m + 1));
    let mut lens = Vec::new();
    let mut left = len;
    while left > 0 {
        let l = piece.min(left);
        lens.push(l);
        left -= l;
    }
    let k = match config.topology {
        Topology::Finite(k) => k,
        Topology::LeftToRight => lens.len(),
        Topology::Ied => n.max(2).min(lens.len().max(2)),
        Topology::Full => n.min(lens.len()),
    };
    if config.duration == DurationFamily::DeltaZero {
        // Every step is its own segment.
        let (k, label): (usize, Box<dyn Fn(usize) -> usize>) = match config.topology {
            Topology::LeftToRight => (len, Box::new(|t| t)),
            Topology::Ied => (k, Box::new(move |t| t % k)),
            _ => {
                let lens = lens.clone();
                (k, Box::new(move |t| segment_of(&lens, t) % k))
            }
        };
        return (LatentPath::new((0..len).map(|t| FullState::new(label(t), 0)).collect()), k);
    }
    let mut segs = Vec::with_capacity(lens.len());
    let mut start = 0;
    for (i, &l) in lens.iter().enumerate() {
        segs.push(Segment { state: i % k, start, len: l, duration: l - 1 });
        start += l;
    }
    (LatentPath::from_segments(&segs), k)
}

fn segment_of(lens: &[usize], t: usize) -> usize {
    let mut end = 0;
    for (i, &l) in lens.iter().enumerate() {
        end += l;
        if t < end {
            return i;
        }
    }
    lens.len() - 1
}

impl<T: Real> Chain<T> {
    /// Starts a chain from a chunked path with `n_init` segments, with
    /// parameters drawn from their conditional given that path.
    pub fn new(config: ModelConfig, y: Vec<f64>, n_init: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if y.is_empty() {
            return Err(param_err!("no observations"));
        }
        config.emission.validate_data(&y)?;
        let mut rng = RngStream::new(seed);
        let (path, k) = initial_path(&config, y.len(), n_init);
        let state = ModelState::<T>::sample_prior(&config, k, &mut rng)?;
        let mut chain = Self { config, y, state, path, sweep: 0, rng, stats: MoveStats::default() };
        for _ in 0..3 {
            chain.update_parameters()?;
        }
        Ok(chain)
    }

    /// Resumes from an explicit state and path.
    pub fn from_state(config: ModelConfig, y: Vec<f64>, state: ModelState<T>, path: LatentPath, rng: RngStream) -> Self {
        Self { config, y, state, path, sweep: 0, rng, stats: MoveStats::default() }
    }

    /// One full sweep: path block, then every parameter given the path.
    pub fn sweep(&mut self) -> Result<()> {
        let n = self.sweep;
        self.update_path().map_err(|e| self.annotate(n, e))?;
        self.update_parameters().map_err(|e| self.annotate(n, e))?;
        self.sweep += 1;
        if cfg!(debug_assertions) {
            self.state.check(T::check_tol()).map_err(|e| self.annotate(n, e))?;
            self.path.validate().map_err(|e| self.annotate(n, e))?;
        }
        Ok(())
    }

    fn annotate(&self, sweep: usize, e: Error) -> Error {
        let dump = format!(
            "sweep {sweep}: {e} [tracked={}, occupied={}, alpha0={:.4}, alpha1={:.4}]",
            self.state.n_tracked(),
            self.path.occupied_states().len(),
            self.state.alpha0,
            self.state.alpha1
        );
        match e {
            Error::Parameter(_) => Error::Parameter(dump),
            Error::Consistency(_) => Error::Consistency(dump),
            Error::Invariant(_) => Error::Invariant(dump),
        }
    }

    /// Slices, forward filtering with on-demand instantiation, backward
    /// sampling, then pruning of states the new path leaves empty.
    pub fn update_path(&mut self) -> Result<()> {
        let before = self.state.n_tracked();
        let slices = sample_slices(&self.path, &self.state, &self.config, &mut self.rng)?;
        let table = forward_pass(&self.y, &slices, &mut self.state, &self.config, &mut self.rng)?;
        self.stats.instantiated += (self.state.n_tracked() - before) as u64;
        self.path = backward_sample(&table, &slices, &self.state, &mut self.rng)?;
        self.stats.pruned += self.state.prune_unused(&mut self.path)? as u64;
        Ok(())
    }

    /// Every parameter block given the current path: table counts, `alpha1`
    /// (with the rows integrated out), auxiliary rates, sticks and `alpha0`
    /// (with the masses integrated out), masses, base rows, transition rows,
    /// then emission and duration parameters.
    pub fn update_parameters(&mut self) -> Result<()> {
        let layout = self.state.layout();
        let counts = count_transitions(&self.path, layout.n_tracked)?;
        let rng = &mut self.rng;
        let st = &mut self.state;
        let tables = sample_table_counts(&counts, st.alpha1, &st.weights.beta, rng)?;

        if self.config.alpha1.resample {
            let (a, ok) = mh_concentration(
                st.alpha1,
                |a| ln_crf_alpha1(&counts, &tables, a),
                &self.config.alpha1.prior,
                self.config.alpha1.step,
                rng,
            );
            st.alpha1 = a;
            self.stats.alpha1_accepted += ok as u64;
        }

        // Sticks and alpha0 are updated with the masses integrated out, then
        // the masses are drawn given both.
        let rates = sample_rates(&tables, &st.weights.ln_masses, &layout, rng);
        let steps = match layout.topology {
            Topology::Finite(_) => layout.n_tracked.saturating_sub(1),
            _ => layout.n_tracked,
        };
        self.stats.sticks_proposed += steps as u64;
        let alpha0 = st.alpha0;
        self.stats.sticks_accepted += mh_sticks(&mut st.weights.sticks, &layout, self.config.stick_step, rng, |s| {
            ln_sticks_given_tables(s, &tables, &rates, &layout, alpha0)
        }) as u64;
        let total = st.weights.sticks.total();
        if total > T::zero() {
            st.weights.sticks.w.scale(T::one() / total);
        }

        if self.config.alpha0.resample {
            let sticks = &st.weights.sticks;
            let (a, ok) = mh_concentration(
                st.alpha0,
                |a| ln_sticks_given_tables(sticks, &tables, &rates, &layout, a),
                &self.config.alpha0.prior,
                self.config.alpha0.step,
                rng,
            );
            st.alpha0 = a;
            self.stats.alpha0_accepted += ok as u64;
        }
        if self.config.alpha0.resample || self.config.alpha1.resample {
            self.stats.alpha_proposed += 1;
        }
        st.weights.ln_masses = sample_masses(&tables, &st.weights.sticks, &rates, &layout, st.alpha0, rng);

        st.weights.beta = compute_beta(&st.weights.ln_masses, &layout);
        st.pi = sample_pi(&st.weights.beta.rows, st.alpha1, &counts, rng)?;

        let (emissions, durations) = assignments(&self.path, &self.y, layout.n_tracked);
        for m in 0..layout.n_tracked {
            st.theta[m] = self.config.emission.sample_posterior(&emissions[m], rng)?;
            st.lambda[m] = self.config.duration.sample_posterior(&st.lambda[m], &durations[m], rng)?;
        }
        Ok(())
    }

    /// Redraws the observations given the path and emission parameters.
    pub fn resample_data(&mut self) -> Result<()> {
        for (t, z) in self.path.z.iter().enumerate() {
            self.y[t] = self.state.theta[z.s].sample(&mut self.rng)?;
        }
        Ok(())
    }

    pub fn ln_joint(&self) -> f64 {
        self.state.ln_joint(&self.config, &self.path, &self.y)
    }

    pub fn snapshot(&self) -> ChainSample {
        ChainSample {
            sweep: self.sweep,
            segments: self.path.segments(),
            theta: self.state.theta.clone(),
            lambda: self.state.lambda.clone(),
            ids: self.state.ids.clone(),
            weights: self.state.weights.sticks.w.tracked.iter().map(|x| x.f64()).collect(),
            masses: self.state.weights.ln_masses.tracked.iter().map(|x| x.exp()).collect(),
            pi: self.state.pi.rows.iter().map(|r| r.tracked.iter().map(|x| x.f64()).collect()).collect(),
            alpha0: self.state.alpha0,
            alpha1: self.state.alpha1,
            loglik: self.ln_joint(),
        }
    }
}

/// Observations and remaining-duration data grouped by state. Every
/// segment contributes its drawn duration, including the last one, whose
/// draw is part of the sampled path.
pub fn assignments(path: &LatentPath, y: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let mut emissions = vec![Vec::new(); n];
    let mut durations = vec![Vec::new(); n];
    for (t, z) in path.z.iter().enumerate() {
        emissions[z.s].push(y[t]);
        if path.is_boundary(t) {
            durations[z.s].push(z.r);
        }
    }
    (emissions, durations)
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub sweep: usize,
    pub segments: Vec<Segment>,
    pub theta: Vec<EmissionParams>,
    pub lambda: Vec<DurationParams>,
    pub ids: Vec<u64>,
    pub weights: Vec<f64>,
    pub masses: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub loglik: f64,
}

impl ChainSample {
    pub fn path(&self) -> LatentPath {
        LatentPath::from_segments(&self.segments)
    }

    pub fn state_at(&self, t: usize) -> Option<usize> {
        self.segments.iter().find(|s| t >= s.start && t < s.start + s.len).map(|s| s.state)
    }

    pub fn occupied_states(&self) -> usize {
        let mut s: Vec<usize> = self.segments.iter().map(|g| g.state).collect();
        s.sort_unstable();
        s.dedup();
        s.len()
    }

    pub fn n_changepoints(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub burn: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    /// Segments in the initial path.
    pub n_init: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { burn: 100, samples: 1000, thin: 1, seed: 0, n_init: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub samples: Vec<ChainSample>,
    /// Joint log-likelihood after every sweep, burn-in included.
    pub trace: Vec<f64>,
    pub stats: MoveStats,
}

/// Runs burn-in, then keeps every `thin`-th sweep until `samples` are
/// collected. `progress` is called after every sweep.
pub fn run_chain<T: Real>(
    config: &ModelConfig,
    y: &[f64],
    opts: &RunOptions,
    mut progress: impl FnMut(usize, &Chain<T>),
) -> Result<RunOutput> {
    if opts.thin == 0 {
        return Err(param_err!("thin must be at least 1"));
    }
    let mut chain = Chain::<T>::new(config.clone(), y.to_vec(), opts.n_init, opts.seed)?;
    let total = opts.burn + opts.samples * opts.thin;
    let mut samples = Vec::with_capacity(opts.samples);
    let mut trace = Vec::with_capacity(total);
    for i in 0..total {
        chain.sweep()?;
        let ll = chain.ln_joint();
        if !ll.is_finite() {
            return Err(consistency_err!("non-finite joint log-likelihood after sweep {i}"));
        }
        trace.push(ll);
        if i >= opts.burn && (i + 1 - opts.burn) % opts.thin == 0 {
            samples.push(chain.snapshot());
        }
        progress(i, &chain);
    }
    Ok(RunOutput { samples, trace, stats: chain.stats })
}

/// Highest joint log-likelihood; ties go to the earliest sweep.
pub fn map_sample(samples: &[ChainSample]) -> Result<&ChainSample> {
    let mut best: Option<&ChainSample> = None;
    for s in samples {
        if best.is_none_or(|b| s.loglik > b.loglik || (s.loglik == b.loglik && s.sweep < b.sweep)) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| param_err!("no samples to choose from"))
}
