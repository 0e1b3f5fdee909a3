//! Spectral toolkit for the Neumann magnetic Laplacian on a right circular cone.
//!
//! The cone has aperture `alpha` and carries a uniform magnetic field tilted by
//! an angle `beta` against the cone axis. After a rescaled spherical change of
//! variables and a gauge transformation, the physical operator on the cone is
//! unitarily equivalent to `alpha` times an operator on the semi-infinite box
//! `(0,inf) x [0,2pi) x (0,1/2)` in coordinates `(t, theta, phi)`. This crate
//! discretizes that operator, solves for its low-lying spectrum, and measures
//! the structural properties (mode localisation, decay, model-operator
//! reduction) that control the small-aperture asymptotics
//! `lambda_n ~ (4n-1) 2^{-5/2} sqrt(1 + sin^2 beta) + O(alpha)`.
//!
//! Module map:
//! - [`geometry`]: exact coordinate maps, metric, magnetic potentials, gauge.
//! - [`models`]: closed-form and 1D/2D model eigenproblems (weighted radial
//!   oscillator, half-line de Gennes family, magnetic disk).
//! - [`assembly`]: Fourier-Galerkin x bilinear-element discretization of the
//!   quadratic form, plus the axisymmetric model forms and a 3D collocation
//!   cross-check assembly.
//! - [`eigen`]: block preconditioned subspace iteration for the sparse
//!   generalized Hermitian pair, with a dense reference solver.
//! - [`asymptotics`]: leading-order constants, quasimodes, and polynomial
//!   extraction of expansion coefficients from aperture sweeps.
//! - [`diagnostics`]: averaging fractions, exponential-weight mass ratios and
//!   model-reduction gap measurements on computed eigenvectors.

pub mod assembly;
pub mod asymptotics;
pub mod diagnostics;
pub mod eigen;
pub mod geometry;
pub mod models;
pub mod quad;
pub mod sparse;

pub use geometry::ConeConfig;
