//! Vanishing-viscosity limits of Riemann and boundary Riemann problems for
//! small hyperbolic-parabolic systems
//!
//! ```text
//! E(u) u_t + A(u, u_x) u_x = eps B(u) u_xx
//! ```
//!
//! The crate builds admissible-state curves from envelope fixed points,
//! boundary-layer manifolds for invertible and singular viscosity, the
//! boundary solver maps and their Newton inversion, and a direct viscous
//! simulator that serves as an empirical oracle.

pub mod boundary_layers;
pub mod boundary_riemann;
pub mod envelopes;
mod error;
pub mod linalg;
mod newton;
mod ode;
pub mod parabolic_oracle;
pub mod spectral;
pub mod system_model;
pub mod wave_curves;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use newton::{NewtonConfig, NewtonResult};
pub use system_model::SystemSpec;

/// Double-precision sampled function, the carrier used by the curve solvers.
pub type SampledFunction = envelopes::SampledFunction<f64>;
/// Single-precision sampled function.
pub type SampledFunctionF32 = envelopes::SampledFunction<f32>;
/// Double-precision envelope result.
pub type EnvelopeResult = envelopes::EnvelopeResult<f64>;
/// Single-precision envelope result.
pub type EnvelopeResultF32 = envelopes::EnvelopeResult<f32>;
