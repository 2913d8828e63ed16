//! Primitive distributions: seeded streams, variate generators, log
//! densities and conjugate updates.
//!
//! Gamma distributions are parameterized by `(shape, scale)` throughout;
//! [`GammaPrior::from_shape_rate`] converts from the rate form.

pub mod conjugate;
pub mod density;
pub mod rng;
pub mod sample;
pub mod sticks;

pub use conjugate::{gamma_poisson_update, nig_update, GammaPrior, NigParams};
pub use rng::RngStream;
pub use sample::{
    ln_beta_split, ln_gamma_unit, sample_beta, sample_beta_split, sample_categorical, sample_dirichlet, sample_gamma, sample_geometric, sample_log_categorical,
    sample_poisson, standard_normal,
};
pub use sticks::stick_breaking_py;
