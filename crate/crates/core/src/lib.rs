//! Numerical laboratory for deformed complex Ginibre ensembles.
//!
//! The crate simulates `X = X0 + sqrt(tau/N) G` with a normal, block-diagonal
//! mean `X0`, locates and classifies points on the boundary of the limiting
//! spectral support, evaluates the repeated-erfc kernels that describe local
//! eigenvalue statistics at regular edge points, and compares Monte Carlo
//! edge statistics against the determinantal prediction.
//!
//! Module map:
//!
//! * [`linalg`]: dense complex matrices, Hessenberg reduction, shifted QR,
//!   LU determinants and a windowed shift-invert eigenvalue extractor.
//! * [`ensemble`]: atomic measures, ensemble specifications and samplers.
//! * [`geometry`]: the functionals `P00`, `P0`, `P1`, boundary tracing and
//!   edge classification.
//! * [`kernel`]: repeated erfc integrals, the limit kernel, the edge
//!   rescaling map and determinantal predictions.
//! * [`montecarlo`]: edge experiments, histograms, pair statistics.
//! * [`stats`]: Pearson goodness of fit and profile errors.
//! * [`report`]: JSON/CSV/SVG emission.
//! * [`oracles`]: numerical checks of auxiliary matrix-integral identities.

pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod oracles;
pub mod quad;
pub mod report;
pub mod rng;
pub mod stats;

pub use num_complex::Complex64;

pub use error::{Error, Result};
