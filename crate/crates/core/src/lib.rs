//! Floquet stability of periodically driven non-Hermitian two-level systems
//! and its equivalence with the band structure of the mapped lattice potentials
//! `V±(x) = b(x)² ± b'(x)`.

pub mod error;
pub mod floquet;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod output;
pub mod propagator;
pub mod rk;
pub mod scan;
pub mod selftest;

pub use error::{Error, Result};
pub use linalg::{Mat2, C64};
