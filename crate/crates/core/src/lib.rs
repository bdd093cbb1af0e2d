//! Causal representation learning from binary interactions.
//!
//! The library has three layers:
//!
//! 1. Numeric plumbing: a small f64 tensor engine with reverse-mode autodiff,
//!    counter-based splittable RNG, and Adam ([`tensor`], [`rng`]).
//! 2. A ground-truth world: temporal structural causal models whose variables
//!    are perturbed through a regime variable and binary interaction rules,
//!    observed through an invertible entangler ([`scm`]).
//! 3. The learner and its instruments: a VAE whose prior learns per-latent
//!    binary interaction variables ([`model`], [`train`]), identification
//!    metrics ([`eval`]), and runnable identifiability checks ([`theory`]).

pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod scm;
pub mod tensor;
pub mod testing;
pub mod theory;
pub mod train;

pub use error::{CoreError, Result};
