//! Emission and duration families: per-state parameters, likelihoods,
//! prior draws and posterior updates.
//!
//! Durations are always the *remaining* count drawn on entering a state, so
//! a segment of `n` observations contributes the datum `n - 1`.

use crate::error::{param_err, Result};
use crate::prob::density::{ln_beta_fn, ln_beta_pdf, ln_delayed_geometric, ln_normal, ln_poisson};
use crate::prob::{sample_beta, sample_geometric, sample_log_categorical, sample_poisson, standard_normal, GammaPrior, NigParams, RngStream};
use crate::real::{log_sum_exp, Real};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionFamily {
    /// Normal likelihood with a normal-inverse-gamma prior. With
    /// `fixed_variance` set only the mean is sampled.
    Gaussian { prior: NigParams, fixed_variance: Option<f64> },
    /// Poisson counts with a gamma prior on the rate.
    Poisson { prior: GammaPrior },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionParams {
    Gaussian { mean: f64, var: f64 },
    Poisson { rate: f64 },
}

impl EmissionParams {
    /// Location summary used for matching states across samples.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Gaussian { mean, .. } => mean,
            Self::Poisson { rate } => rate,
        }
    }

    pub fn ln_lik<T: Real>(&self, y: f64) -> T {
        match *self {
            Self::Gaussian { mean, var } => ln_normal(T::of(y), T::of(mean), T::of(var)),
            Self::Poisson { rate } => {
                if y < 0.0 || y.fract() != 0.0 {
                    T::neg_infinity()
                } else {
                    ln_poisson(y as u64, T::of(rate))
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        Ok(match *self {
            Self::Gaussian { mean, var } => mean + var.sqrt() * standard_normal(rng),
            Self::Poisson { rate } => sample_poisson(rate, rng)? as f64,
        })
    }
}

impl EmissionFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { prior, fixed_variance } => {
                prior.validate()?;
                if let Some(v) = fixed_variance {
                    if !(*v > 0.0) || !v.is_finite() {
                        return Err(param_err!("fixed emission variance must be positive, got {v}"));
                    }
                }
            }
            Self::Poisson { prior } => {
                GammaPrior::new(prior.shape, prior.scale)?;
            }
        }
        Ok(())
    }

    /// Rejects observations outside the family's support.
    pub fn validate_data(&self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                Self::Gaussian { .. } => v.is_finite(),
                Self::Poisson { .. } => v >= 0.0 && v.fract() == 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(param_err!("observation {i} ({v}) is outside the emission support"));
            }
        }
        Ok(())
    }

    pub fn sample_prior(&self, rng: &mut RngStream) -> Result<EmissionParams> {
        self.sample_posterior(&[], rng)
    }

    /// Conjugate draw given the observations assigned to one state.
    pub fn sample_posterior(&self, data: &[f64], rng: &mut RngStream) -> Result<EmissionParams> {
        Ok(match self {
            Self::Gaussian { prior, fixed_variance: Some(var) } => {
                EmissionParams::Gaussian { mean: prior.sample_mean_known_var(data, *var, rng), var: *var }
            }
            Self::Gaussian { prior, fixed_variance: None } => {
                let (mean, var) = prior.update(data).sample(rng)?;
                EmissionParams::Gaussian { mean, var }
            }
            Self::Poisson { prior } => {
                let counts: Vec<i64> = data.iter().map(|&y| y as i64).collect();
                EmissionParams::Poisson { rate: prior.poisson_update(&counts)?.sample(rng)? }
            }
        })
    }
}

/// `Beta(a, b)` prior on a success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationFamily {
    /// Poisson remaining duration, gamma prior on the rate.
    Poisson {
        prior: GammaPrior,
        #[serde(default)]
        max: Option<usize>,
    },
    /// Geometric failures shifted by a delay `d` uniform on `0..=dmax`.
    DelayedGeometric {
        dmax: usize,
        #[serde(default)]
        q_prior: BetaPrior,
        #[serde(default)]
        max: Option<usize>,
    },
    Geometric {
        #[serde(default)]
        q_prior: BetaPrior,
        #[serde(default)]
        max: Option<usize>,
    },
    /// Every remaining duration is zero: a plain Markov chain.
    DeltaZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationParams {
    Poisson { rate: f64 },
    Geometric { q: f64, delay: usize },
    DeltaZero,
}

impl DurationParams {
    /// Untruncated log mass of remaining duration `r`.
    fn ln_pmf_raw<T: Real>(&self, r: usize) -> T {
        match *self {
            Self::Poisson { rate } => ln_poisson(r as u64, T::of(rate)),
            Self::Geometric { q, delay } => ln_delayed_geometric(r as u64, delay as u64, T::of(q)),
            Self::DeltaZero => {
                if r == 0 {
                    T::zero()
                } else {
                    T::neg_infinity()
                }
            }
        }
    }

    /// Summary used in traces: the mean remaining duration.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Poisson { rate } => rate,
            Self::Geometric { q, delay } => delay as f64 + (1.0 - q) / q,
            Self::DeltaZero => 0.0,
        }
    }
}

impl DurationFamily {
    pub fn validate(&self) -> Result<()> {
        let check_beta = |p: &BetaPrior| {
            if p.a > 0.0 && p.b > 0.0 {
                Ok(())
            } else {
                Err(param_err!("q prior requires a, b > 0, got {p:?}"))
            }
        };
        match self {
            Self::Poisson { prior, .. } => GammaPrior::new(prior.shape, prior.scale).map(|_| ()),
            Self::DelayedGeometric { dmax, q_prior, max } => {
                if let Some(m) = max {
                    if m < dmax {
                        return Err(param_err!("duration cap {m} is below the largest delay {dmax}"));
                    }
                }
                check_beta(q_prior)
            }
            Self::Geometric { q_prior, .. } => check_beta(q_prior),
            Self::DeltaZero => Ok(()),
        }
    }

    /// Largest remaining duration with positive mass, if bounded.
    pub fn max(&self) -> Option<usize> {
        match *self {
            Self::Poisson { max, .. } | Self::DelayedGeometric { max, .. } | Self::Geometric { max, .. } => max,
            Self::DeltaZero => Some(0),
        }
    }

    /// Log normalizer over the truncated support (zero when untruncated).
    fn ln_norm<T: Real>(&self, p: &DurationParams) -> T {
        match self.max() {
            Some(m) if !matches!(self, Self::DeltaZero) => log_sum_exp(&(0..=m).map(|r| p.ln_pmf_raw::<T>(r)).collect::<Vec<_>>()),
            _ => T::zero(),
        }
    }

    pub fn ln_pmf<T: Real>(&self, p: &DurationParams, r: usize) -> T {
        if self.max().is_some_and(|m| r > m) {
            return T::neg_infinity();
        }
        p.ln_pmf_raw::<T>(r) - self.ln_norm::<T>(p)
    }

    /// Probability table for `r = 0..=cap`, where `cap` is the family
    /// maximum if smaller.
    pub fn table<T: Real>(&self, p: &DurationParams, cap: usize) -> DurationTable<T> {
        let n = self.max().map_or(cap, |m| m.min(cap));
        let norm = self.ln_norm::<T>(p);
        let pmf: Vec<T> = (0..=n).map(|r| (p.ln_pmf_raw::<T>(r) - norm).exp()).collect();
        DurationTable::new(pmf)
    }

    pub fn sample(&self, p: &DurationParams, rng: &mut RngStream) -> Result<usize> {
        if let (Some(m), false) = (self.max(), matches!(self, Self::DeltaZero)) {
            let logw: Vec<f64> = (0..=m).map(|r| p.ln_pmf_raw::<f64>(r)).collect();
            return sample_log_categorical(&logw, rng);
        }
        Ok(match *p {
            DurationParams::Poisson { rate } => sample_poisson(rate, rng)? as usize,
            DurationParams::Geometric { q, delay } => delay + sample_geometric(q, rng)? as usize,
            DurationParams::DeltaZero => 0,
        })
    }

    pub fn sample_prior(&self, rng: &mut RngStream) -> Result<DurationParams> {
        self.draw_untruncated(&[], rng)
    }

    /// Posterior draw given remaining-duration data. Untruncated families
    /// are conjugate. With a cap the conjugate draw is used as an
    /// independence proposal corrected for the normalizer, followed by a few
    /// random-walk moves on the log rate (logit q) to escape the region the
    /// proposal rarely visits.
    pub fn sample_posterior(&self, current: &DurationParams, data: &[usize], rng: &mut RngStream) -> Result<DurationParams> {
        if let Some(m) = self.max() {
            if let Some(&r) = data.iter().find(|&&r| r > m) {
                return Err(param_err!("duration {r} exceeds the cap {m}"));
            }
        }
        let proposal = self.draw_untruncated(data, rng)?;
        if self.max().is_none() || matches!(self, Self::DeltaZero) || data.is_empty() {
            return Ok(proposal);
        }
        let n = data.len() as f64;
        let log_ratio = n * (self.ln_norm::<f64>(current) - self.ln_norm::<f64>(&proposal));
        let mut p = if rng.uniform_open().ln() < log_ratio { proposal } else { *current };
        let mut lp = self.ln_truncated_posterior(&p, data);
        for _ in 0..TRUNCATED_RW_STEPS {
            let step = 0.5 * standard_normal(rng);
            let (cand, log_jac) = match p {
                DurationParams::Poisson { rate } => (DurationParams::Poisson { rate: rate * step.exp() }, step),
                DurationParams::Geometric { q, delay } => {
                    let x = (q / (1.0 - q)).ln() + step;
                    let nq = (1.0 / (1.0 + (-x).exp())).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
                    (DurationParams::Geometric { q: nq, delay }, (nq * (1.0 - nq)).ln() - (q * (1.0 - q)).ln())
                }
                DurationParams::DeltaZero => break,
            };
            let lc = self.ln_truncated_posterior(&cand, data);
            if (lc - lp + log_jac).is_finite() && rng.uniform_open().ln() < lc - lp + log_jac {
                p = cand;
                lp = lc;
            }
        }
        Ok(p)
    }

    /// Unnormalized log posterior of the continuous parameter with the delay
    /// held fixed.
    fn ln_truncated_posterior(&self, p: &DurationParams, data: &[usize]) -> f64 {
        let prior = match (self, p) {
            (Self::Poisson { prior, .. }, DurationParams::Poisson { rate }) => prior.ln_pdf(*rate),
            (Self::Geometric { q_prior, .. } | Self::DelayedGeometric { q_prior, .. }, DurationParams::Geometric { q, .. }) => {
                ln_beta_pdf(*q, q_prior.a, q_prior.b)
            }
            _ => 0.0,
        };
        prior + data.iter().map(|&r| self.ln_pmf::<f64>(p, r)).sum::<f64>()
    }

    fn draw_untruncated(&self, data: &[usize], rng: &mut RngStream) -> Result<DurationParams> {
        Ok(match self {
            Self::Poisson { prior, .. } => {
                let counts: Vec<i64> = data.iter().map(|&r| r as i64).collect();
                DurationParams::Poisson { rate: prior.poisson_update(&counts)?.sample(rng)? }
            }
            Self::Geometric { q_prior, .. } => DurationParams::Geometric { q: draw_q(q_prior, data, 0, rng)?, delay: 0 },
            Self::DelayedGeometric { dmax, q_prior, .. } => {
                let lo = data.iter().copied().min().unwrap_or(usize::MAX);
                let n = data.len() as f64;
                let total: usize = data.iter().sum();
                let options: Vec<usize> = (0..=*dmax).filter(|&d| d <= lo).collect();
                if options.is_empty() {
                    return Err(param_err!("no delay in 0..={dmax} is consistent with a duration of {lo}"));
                }
                // q integrated out under its beta prior.
                let logw: Vec<f64> = options
                    .iter()
                    .map(|&d| ln_beta_fn(q_prior.a + n, q_prior.b + (total - d * data.len()) as f64))
                    .collect();
                let delay = options[sample_log_categorical(&logw, rng)?];
                DurationParams::Geometric { q: draw_q(q_prior, data, delay, rng)?, delay }
            }
            Self::DeltaZero => DurationParams::DeltaZero,
        })
    }
}

const TRUNCATED_RW_STEPS: usize = 5;

fn draw_q(prior: &BetaPrior, data: &[usize], delay: usize, rng: &mut RngStream) -> Result<f64> {
    let excess: usize = data.iter().map(|&r| r - delay).sum();
    // Keep q strictly inside (0, 1).
    let q = sample_beta(prior.a + data.len() as f64, prior.b + excess as f64, rng)?;
    Ok(q.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
}

/// Duration probabilities for one state, with an index sorted by
/// decreasing mass so that every `r` above a threshold is found without
/// scanning the tail.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationTable<T> {
    pub pmf: Vec<T>,
    order: Vec<usize>,
}

impl<T: Real> DurationTable<T> {
    pub fn new(pmf: Vec<T>) -> Self {
        let mut order: Vec<usize> = (0..pmf.len()).filter(|&r| pmf[r] > T::zero()).collect();
        order.sort_by(|&a, &b| pmf[b].partial_cmp(&pmf[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        Self { pmf, order }
    }

    pub fn get(&self, r: usize) -> T {
        self.pmf.get(r).copied().unwrap_or(T::zero())
    }

    pub fn max_prob(&self) -> T {
        self.order.first().map_or(T::zero(), |&r| self.pmf[r])
    }

    /// Remaining durations with `pmf(r) > threshold`, most probable first.
    pub fn above(&self, threshold: T) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied().take_while(move |&r| self.pmf[r] > threshold)
    }
}
