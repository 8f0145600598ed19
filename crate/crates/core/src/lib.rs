//! Optimal control of semilinear parabolic equations on space-time cylinders
//! over axis-aligned rectangles, with distributed and Neumann boundary controls.
//!
//! The crate provides the discrete machinery end to end: grids and quadrature
//! ([`grid`]), problem descriptions ([`problem`]), forward and adjoint solvers
//! ([`pde_solvers`]), pointwise Hamiltonian minimization ([`hamiltonian`]),
//! the successive-approximation drivers ([`msa`]), and empirical checks of the
//! descent and stability estimates the method relies on ([`diagnostics`]).
//!
//! The core is `no_std`-compatible (`alloc` required): disable default
//! features and enable `libm` to build without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
// Stencil and stepping kernels walk several parallel arrays with neighbor
// offsets; indexed loops are the clear form there.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("building without `std` requires the `libm` feature for float math");

mod cg;
mod error;
mod stencil;

pub mod diagnostics;
pub mod grid;
pub mod hamiltonian;
pub mod msa;
pub mod pde_solvers;
pub mod problem;

pub use error::{CoreError, Result};
pub use grid::{BoundaryField, Field, Grid};
pub use hamiltonian::{AugmentationParams, MinimizerConfig};
pub use msa::{IterationRecord, MinimizerMode, RunResult, SolverConfig, Termination};
pub use pde_solvers::{AdjointSolution, StateSolution, StepperConfig};
pub use problem::{ControlBox, DiffusionCoefficients, ProblemBuilder, ProblemDefinition};
