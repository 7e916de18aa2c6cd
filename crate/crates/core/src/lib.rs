//! Exact and numerical scattering matrices for multistate Landau-Zener
//! Hamiltonian families.
//!
//! Three independent routes produce transition-probability matrices:
//!
//! * [`laxflow`]: spin-family matrices from eigenprojectors of the
//!   asymptotic Lax matrix,
//! * [`crossings`]: bow-tie style families via a deformed path in the
//!   `(t, eps)` plane that factorizes the evolution into isolated crossings,
//! * [`oracle`]: direct time-ordered propagation of the Schroedinger equation.
//!
//! [`zerocurv`] checks the zero-curvature condition that makes the path
//! deformation legitimate.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossings;
pub mod error;
pub mod laxflow;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod zerocurv;

pub use error::{Error, Result};
