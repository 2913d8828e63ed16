use super::density::ln_beta_pdf;
use super::rng::RngStream;
use super::sample::sample_beta;
use crate::error::{param_err, Result};

pub fn validate_py(c: f64, d: f64) -> Result<()> {
    if !(0.0..1.0).contains(&d) || !(c > -d) || !c.is_finite() {
        return Err(param_err!("Pitman-Yor requires 0 <= d < 1 and c > -d, got c={c}, d={d}"));
    }
    Ok(())
}

/// Beta parameters of the `k`-th (1-based) stick fraction of `SB(c, d)`.
pub fn py_fraction_params(c: f64, d: f64, k: usize) -> (f64, f64) {
    (1.0 - d, c + k as f64 * d)
}

/// First `n` weights of the two-parameter stick-breaking prior.
pub fn stick_breaking_py(c: f64, d: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    validate_py(c, d)?;
    if n == 0 {
        return Err(param_err!("stick breaking needs n >= 1"));
    }
    let mut remaining = 1.0;
    let mut w = Vec::with_capacity(n);
    for k in 1..=n {
        let (a, b) = py_fraction_params(c, d, k);
        let v = sample_beta(a, b, rng)?;
        w.push(v * remaining);
        remaining *= 1.0 - v;
    }
    Ok(w)
}

/// Log prior density of stick fractions `v` (1-based positions).
pub fn ln_py_fractions(c: f64, d: f64, v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let (a, b) = py_fraction_params(c, d, i + 1);
            ln_beta_pdf(x, a, b)
        })
        .sum()
}
