pub mod beam;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod families;
pub mod geweke;
pub mod gibbs;
pub mod path;
pub mod prob;
pub mod real;
pub mod sngp;
pub mod stats;
pub mod topology;
pub mod transition;

pub use error::{Error, Result};
pub use real::Real;

/// Chains, states and transition matrices in double precision.
pub type Chain64 = gibbs::Chain<f64>;
pub type ModelState64 = model::ModelState<f64>;
/// Single-precision variants; random variates are still drawn in `f64`.
pub type Chain32 = gibbs::Chain<f32>;
pub type ModelState32 = model::ModelState<f32>;
