//! Compile continuous many-body Hamiltonians onto discretized wire lattices
//! and verify, numerically, that the compiled lattice is an exact
//! energy-rescaled copy of the source model: proportional spectra,
//! time-rescaled dynamics, matching ground states, and thermal relaxation
//! toward the same equilibrium.
//!
//! The pipeline:
//!
//! 1. [`model`] — declare wires, pairwise potentials, and one-body fields
//!    (expressions in the small [`dsl`]), then validate.
//! 2. [`compiler`] — discretize each wire into a hard-wall grid and sample
//!    potentials into coupling/field tables, with resource accounting.
//! 3. [`operator`] — assemble the sparse lattice Hamiltonian on the product
//!    space and solve for low-lying spectra.
//! 4. [`dynamics`] — real-time Krylov propagation, imaginary-time
//!    relaxation, and open-system (Lindblad) relaxation to thermal states.
//! 5. [`verify`] — executable pass/fail checks of every correspondence
//!    property, with machine-readable reports.
//!
//! See the `examples/` directory for one runnable program per capability,
//! and the `isosim` binary for the file-based command-line interface.

pub mod cli;
pub mod compiler;
pub mod config;
pub mod dsl;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod operator;
pub mod verify;

pub use error::{Error, Result};
