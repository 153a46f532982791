//! Scattering matrices, resonances and embedded eigenvalues of hyperbolic
//! surfaces with cusps.
//!
//! The surface is cut along horocycles into a compact part M and cusp ends.
//! A finite-element Neumann-to-Dirichlet map of M is glued to the analytic
//! Neumann-to-Dirichlet map of each cusp; the kernel of the glued operator
//! determines the scattering matrix.

pub mod cuspnd;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod resonances;
pub mod scattering;
pub mod specialfn;

pub use error::{Error, Result};
pub use faer::Mat;
pub use num_complex::Complex64 as C64;

/// Library version, recorded in CLI provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
