//! Ancient gradient flows near closed critical points of one-dimensional
//! elliptic functionals.
//!
//! The worked example is curve shortening of latitude graphs over the equator
//! of the round 2-sphere: the Jacobi operator ∂² + 1 has index 1 and nullity
//! 2, the unstable manifold is built by a Picard iteration over per-mode
//! Duhamel formulas, and every diagnostic has a closed-form oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod ancient;
pub mod arrival;
pub mod critical;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod functional;
pub mod grid;
pub mod holder;
pub mod linear;
pub mod mz;
pub mod quadrature;
pub mod slow;
pub mod spectral;
pub mod trajectory;
pub mod variational;

pub use error::{Error, Result};
pub use functional::{builtin_sphere_functional, EllipticFunctional, FunctionalRegistry, Integrand};
pub use grid::{Field, PeriodicGrid};
pub use spectral::{eigendecompose, DiscreteOperator, EigenSystem, ModeCoefficients};
pub use variational::{evaluate, gradient, gradient_split, GradientSplit};
