//! Exact simulation of conditioned (jump) diffusion sample paths.
//!
//! Sample paths of a diffusion bridge are infinite dimensional, so this crate
//! simulates finite dimensional *skeletons*: endpoint values, a set of
//! skeletal points, and path-space *layers* (compact bands known to contain
//! the path segment between consecutive skeletal points). Skeletons are drawn
//! by rejection sampling on path space with no discretisation error, and an
//! accepted skeleton is sufficient to later *restore* the path at any further
//! finite collection of times, still exactly.
//!
//! Algorithms:
//! - [`cuea::simulate_cuea`] — conditioned unbounded exact algorithm: one
//!   global layer, accelerated pre-rejection, Poisson thinning.
//! - [`cauea::simulate_cauea`] — adaptive variant: interval bisection with
//!   exponential arrivals and per-interval layer refinement.
//! - [`jumps::simulate_cujea`] / [`jumps::simulate_caujea`] — jump diffusion
//!   bridges via a compound Poisson proposal superposed with a compensating
//!   Brownian bridge and a three-factor staged acceptance.
//!
//! The [`harness`] module provides verification oracles (a fine-grid bridge
//! sampler, Kolmogorov–Smirnov tests, a transition density estimator),
//! experiment configuration and skeleton file I/O; the `xbridge` binary wires
//! them into a CLI.

pub mod cauea;
pub mod cuea;
pub mod error;
pub mod harness;
pub mod jumps;
pub mod layers;
pub mod model;
pub mod restore;
pub mod skeleton;
pub mod stream;

pub use error::{Error, Result};
pub use model::{DiffusionModel, UnitVolatilityModel, ValidationReport};
pub use skeleton::{DiagnosticCounters, Skeleton};
pub use stream::Stream;
