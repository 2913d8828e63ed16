//! Random variate generation.
//!
//! Gamma variates use Marsaglia and Tsang's squeeze method for shape >= 1.
//! Shapes below one use the boost `G(a) = G(a + 1) * U^(1/a)`, evaluated in
//! log space: at shape 1e-3 the linear-scale value underflows `f64` about a
//! third of the time, while its logarithm is always finite. Beta and
//! Dirichlet variates are built from log-gamma draws and normalized with a
//! log-sum-exp, so tiny concentrations never produce `0/0`.

use super::rng::RngStream;
use crate::error::{param_err, Result};
use crate::real::{log_sum_exp, Real};
use rand_distr::{Distribution, StandardNormal};

pub fn standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Log of a `Gamma(shape, 1)` draw. Always finite for `shape > 0`.
pub fn ln_gamma_unit(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        let boost = rng.uniform_open().ln() / shape;
        return ln_gamma_unit(shape + 1.0, rng) + boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Draw from `Gamma(shape, scale)` (mean `shape * scale`).
///
/// The result is clamped to the smallest positive normal `f64`, so it is
/// strictly positive even when the exact value underflows.
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(param_err!("gamma requires shape > 0 and scale > 0, got ({shape}, {scale})"));
    }
    let x = (ln_gamma_unit(shape, rng) + scale.ln()).exp();
    Ok(x.clamp(f64::MIN_POSITIVE, f64::MAX))
}

/// Draw from `Beta(a, b)`; strictly inside (0, 1) up to rounding.
pub fn sample_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(param_err!("beta requires a > 0 and b > 0, got ({a}, {b})"));
    }
    let la = ln_gamma_unit(a, rng);
    let lb = ln_gamma_unit(b, rng);
    // a / (a + b) as a logistic of the log ratio.
    Ok(1.0 / (1.0 + (lb - la).exp()))
}

/// Draws `x ~ Beta(a, b)` and returns `(x, 1 - x)`, each computed without
/// cancellation so that neither side rounds to zero when the other is near one.
pub fn sample_beta_split(a: f64, b: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(param_err!("beta requires a > 0 and b > 0, got ({a}, {b})"));
    }
    let diff = ln_gamma_unit(b, rng) - ln_gamma_unit(a, rng);
    Ok((1.0 / (1.0 + diff.exp()), 1.0 / (1.0 + (-diff).exp())))
}

/// Logs of `(x, 1 - x)` for `x ~ Beta(a, b)`, finite even when either side
/// underflows.
pub fn ln_beta_split(a: f64, b: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(param_err!("beta requires a > 0 and b > 0, got ({a}, {b})"));
    }
    let diff = ln_gamma_unit(b, rng) - ln_gamma_unit(a, rng);
    Ok((-softplus(diff), -softplus(-diff)))
}

/// `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Concentrations at or below this are treated as negligible next to a
/// dominant entry when deciding whether a row is degenerate.
const DEGENERATE_ALPHA: f64 = 1e-300;

/// Draw from `Dirichlet(alpha)`. Zero concentrations produce exact zeros.
pub fn sample_dirichlet<T: Real>(alpha: &[T], rng: &mut RngStream) -> Result<Vec<T>> {
    let a: Vec<f64> = alpha.iter().map(|x| x.f64()).collect();
    if a.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(param_err!("dirichlet concentrations must be finite and nonnegative"));
    }
    let positive: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    if positive.is_empty() {
        return Err(param_err!("dirichlet requires at least one positive concentration"));
    }
    let mut out = vec![T::zero(); a.len()];
    let big: Vec<usize> = positive.iter().copied().filter(|&i| a[i] > DEGENERATE_ALPHA).collect();
    if big.len() == 1 {
        out[big[0]] = T::one();
        return Ok(out);
    }
    let logs: Vec<f64> = positive.iter().map(|&i| ln_gamma_unit(a[i], rng)).collect();
    let norm = log_sum_exp(&logs);
    let mut total = 0.0;
    let probs: Vec<f64> = logs
        .iter()
        .map(|&l| {
            let p = (l - norm).exp();
            total += p;
            p
        })
        .collect();
    for (&i, p) in positive.iter().zip(probs) {
        out[i] = T::of(p / total);
    }
    Ok(out)
}

/// Index drawn proportionally to nonnegative `weights`.
pub fn sample_categorical<T: Real>(weights: &[T], rng: &mut RngStream) -> Result<usize> {
    let total: f64 = weights.iter().map(|w| w.f64()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(param_err!("categorical weights must have a positive finite sum"));
    }
    let target = rng.uniform_open() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.f64();
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Index drawn proportionally to `exp(log_weights)`.
pub fn sample_log_categorical(log_weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let norm = log_sum_exp(log_weights);
    if !norm.is_finite() {
        return Err(param_err!("log-categorical weights are all -inf or invalid"));
    }
    let w: Vec<f64> = log_weights.iter().map(|&l| (l - norm).exp()).collect();
    sample_categorical(&w, rng)
}

pub fn sample_poisson(rate: f64, rng: &mut RngStream) -> Result<u64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(param_err!("poisson rate must be finite and nonnegative, got {rate}"));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let d = rand_distr::Poisson::new(rate).map_err(|e| param_err!("poisson: {e}"))?;
    Ok(d.sample(rng) as u64)
}

/// Number of failures before the first success, success probability `q`.
pub fn sample_geometric(q: f64, rng: &mut RngStream) -> Result<u64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(param_err!("geometric success probability must lie in (0, 1], got {q}"));
    }
    if q == 1.0 {
        return Ok(0);
    }
    Ok((rng.uniform_open().ln() / (-q).ln_1p()).floor() as u64)
}
