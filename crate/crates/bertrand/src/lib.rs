//! Superintegrable Hamiltonians on curved spaces.
//!
//! This crate builds a family of classical Hamiltonians (curved Kepler,
//! the two Perlick families, a Darboux-type system obtained by a
//! coupling-constant exchange, and an angular deformation with centrifugal
//! barriers) from a shared sl(2) Poisson-coalgebra construction, together
//! with their conserved quantities, canonical maps between them, a
//! high-order trajectory integrator, and grid-based checks of the matching
//! quantum radial problems.
//!
//! ## Layout
//!
//! - [`expr`]: shared expression graphs with exact symbolic gradients.
//! - [`phasespace`]: observables, Poisson brackets, sampling, gradient checks.
//! - [`coalgebra`]: the sl(2) realizations and their Casimir family.
//! - [`systems`]: Hamiltonian families, canonical maps, admissible regions.
//! - [`invariants`]: Runge-Lenz-type and higher-order conserved quantities.
//! - [`dop853`]: explicit Runge-Kutta 8(5,3) integrator with dense output.
//! - [`dynamics`]: Hamiltonian flows, closure detection, curvature checks.
//! - [`quantum`]: radial grids, ladder operators, spectra, degeneracies.
//! - [`report`]: deterministic JSON/CSV reports for the command-line tool.

pub mod coalgebra;
pub mod dop853;
pub mod dynamics;
pub mod expr;
pub mod invariants;
pub mod phasespace;
pub mod quantum;
pub mod systems;
