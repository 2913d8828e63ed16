//! Log densities and mass functions. All evaluated in log space.

use crate::real::Real;
use statrs::function::gamma::ln_gamma as ln_gamma_f64;

pub fn ln_gamma_fn<T: Real>(x: T) -> T {
    T::of(ln_gamma_f64(x.f64()))
}

pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma_f64(k as f64 + 1.0)
}

pub fn ln_normal<T: Real>(y: T, mean: T, var: T) -> T {
    let d = y - mean;
    let two = T::of(2.0);
    -(d * d) / (two * var) - (two * T::PI() * var).ln() / two
}

pub fn ln_poisson<T: Real>(k: u64, rate: T) -> T {
    if rate <= T::zero() {
        return if k == 0 { T::zero() } else { T::neg_infinity() };
    }
    T::of_usize(k as usize) * rate.ln() - rate - T::of(ln_factorial(k))
}

/// `Gamma(shape, scale)` log density.
pub fn ln_gamma_pdf<T: Real>(x: T, shape: T, scale: T) -> T {
    if x <= T::zero() {
        return T::neg_infinity();
    }
    (shape - T::one()) * x.ln() - x / scale - ln_gamma_fn(shape) - shape * scale.ln()
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma_f64(a) + ln_gamma_f64(b) - ln_gamma_f64(a + b)
}

pub fn ln_beta_pdf<T: Real>(x: T, a: T, b: T) -> T {
    if x <= T::zero() || x >= T::one() {
        return T::neg_infinity();
    }
    (a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p() - T::of(ln_beta_fn(a.f64(), b.f64()))
}

/// Failures before first success, shifted by `delay`: mass `q (1-q)^(r - delay)` for `r >= delay`.
pub fn ln_delayed_geometric<T: Real>(r: u64, delay: u64, q: T) -> T {
    if r < delay {
        return T::neg_infinity();
    }
    let k = T::of_usize((r - delay) as usize);
    if k == T::zero() {
        return q.ln();
    }
    q.ln() + k * (-q).ln_1p()
}
