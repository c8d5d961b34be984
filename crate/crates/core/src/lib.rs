//! Numerical machinery for bounded mild solutions of nonautonomous planar
//! systems and a sine-truncated parabolic example.
//!
//! The pipeline is: coefficient signals ([`signal`]) feed a planar system
//! ([`lienard`]), whose evolution family is integrated and cached
//! ([`propagator`]), split into stable and unstable parts
//! ([`dichotomy`]), and convolved with a Green kernel to produce bounded
//! solutions by Picard iteration ([`mild`]). [`stability`] measures
//! perturbation decay against the Gronwall envelope and [`spectral`]
//! runs the same construction mode-by-mode for a Dirichlet heat-type
//! equation.

pub mod dichotomy;
pub mod error;
pub mod lienard;
pub mod linalg;
pub mod mild;
pub mod propagator;
pub mod quadrature;
pub mod scenario;
pub mod signal;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
pub use linalg::{Mat2, Vec2};
