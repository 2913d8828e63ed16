use super::rng::RngStream;
use super::sample::{sample_gamma, standard_normal};
use crate::error::{param_err, Result};
use serde::{Deserialize, Serialize};

/// Normal-scaled inverse gamma prior: `var ~ InvGamma(alpha, beta)`,
/// `mean | var ~ N(mu0, var / nu0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub mu0: f64,
    pub nu0: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    pub fn new(mu0: f64, nu0: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { mu0, nu0, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu0 > 0.0 && self.alpha > 0.0 && self.beta > 0.0) || !self.mu0.is_finite() {
            return Err(param_err!("NIG prior requires nu0, alpha, beta > 0: {self:?}"));
        }
        Ok(())
    }

    /// Exact conjugate posterior after observing `data`.
    pub fn update(&self, data: &[f64]) -> Self {
        if data.is_empty() {
            return *self;
        }
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let ss: f64 = data.iter().map(|y| (y - mean) * (y - mean)).sum();
        let nu_n = self.nu0 + n;
        Self {
            mu0: (self.nu0 * self.mu0 + n * mean) / nu_n,
            nu0: nu_n,
            alpha: self.alpha + n / 2.0,
            beta: self.beta + 0.5 * ss + self.nu0 * n * (mean - self.mu0).powi(2) / (2.0 * nu_n),
        }
    }

    /// Draws `(mean, variance)`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<(f64, f64)> {
        let var = 1.0 / sample_gamma(self.alpha, 1.0 / self.beta, rng)?;
        let mean = self.mu0 + (var / self.nu0).sqrt() * standard_normal(rng);
        Ok((mean, var))
    }

    /// Draws a mean with the variance held fixed at `var`.
    pub fn sample_mean_known_var(&self, data: &[f64], var: f64, rng: &mut RngStream) -> f64 {
        // Prior on the mean is N(mu0, var / nu0) under the fixed-variance reading.
        let n = data.len() as f64;
        let prec = self.nu0 + n;
        let m = (self.nu0 * self.mu0 + data.iter().sum::<f64>()) / prec;
        m + (var / prec).sqrt() * standard_normal(rng)
    }
}

pub fn nig_update(prior: NigParams, data: &[f64]) -> NigParams {
    prior.update(data)
}

/// Gamma prior stored as `(shape, scale)`; mean `shape * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
            return Err(param_err!("gamma prior requires shape > 0 and scale > 0, got ({shape}, {scale})"));
        }
        Ok(Self { shape, scale })
    }

    pub fn from_shape_rate(shape: f64, rate: f64) -> Result<Self> {
        Self::new(shape, 1.0 / rate)
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        sample_gamma(self.shape, self.scale, rng)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        super::density::ln_gamma_pdf(x, self.shape, self.scale)
    }

    /// Conjugate update for Poisson observations: shape gains the total,
    /// rate gains the count.
    pub fn poisson_update(&self, counts: &[i64]) -> Result<Self> {
        if let Some(bad) = counts.iter().find(|&&c| c < 0) {
            return Err(param_err!("negative count {bad} in poisson update"));
        }
        let total: i64 = counts.iter().sum();
        Self::from_shape_rate(self.shape + total as f64, self.rate() + counts.len() as f64)
    }
}

pub fn gamma_poisson_update(prior: GammaPrior, durations: &[i64]) -> Result<GammaPrior> {
    prior.poisson_update(durations)
}
