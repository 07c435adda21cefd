//! Numerics library for the generalized gradient of nonsmooth
//! fully-connected network risk functionals.
//!
//! The pieces fit together as follows: [`activation`] builds piecewise-C¹
//! activations with explicit kink sets and the C¹ approximant family `G_n`
//! that converges to them with eventual pointwise equality; [`network`]
//! evaluates realizations over a flat parameter layout; [`risk`] sums C¹
//! losses over finite empirical measures; [`gradients`] computes the risk
//! gradient three independent ways (generalized-derivative backprop, smoothed
//! backprop through `G_n`, and a literal path-sum oracle); [`analysis`] turns
//! the convergence, smooth-region, and limiting-subgradient claims into
//! executable experiments; [`fixtures`] names the shared test problems.

pub mod activation;
pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod gradients;
pub mod network;
pub mod report;
pub mod risk;

pub use activation::{
    ActivationDescriptor, ApproximantFamily, BlendingFunction, KinkSet, PiecewiseActivation, Side,
};
pub use error::{Error, Result};
pub use gradients::GradientVector;
pub use network::{Architecture, ForwardTrace, ParamVector};
pub use risk::{EmpiricalMeasure, Loss, Sample};
