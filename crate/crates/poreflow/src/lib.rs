//! Effective single-phase permeability of voxelized porous media.
//!
//! A sample is a box of cubic voxels, each carrying a porosity percentage
//! in `0..=100`: 0 is pure fluid, 100 is impermeable solid, anything in
//! between is an unresolved porous voxel with its own microscale
//! permeability. The crate classifies the pore space, assembles a staggered
//! finite-difference discretization of the matching flow model (Stokes,
//! Stokes-Brinkman, Brinkman or Darcy), solves the pressure Schur
//! complement with AMG-preconditioned conjugate gradients, and reduces the
//! velocity field to a directional effective permeability.

pub mod classify;
pub mod cli;
pub mod grid;
pub mod krylov;
pub mod post;
pub mod solver;
pub mod synth;
pub mod voxel;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// File size or requested dimensions do not describe the image.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A voxel byte outside 0..=100.
    #[error("invalid porosity value {value} at linear index {index}")]
    InvalidPorosity { index: usize, value: u8 },
    /// An argument outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent model, geometry or solver configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A structural precondition of an operator was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The CG operator stopped being positive definite.
    #[error("indefinite operator: <p, Ap> <= 0 at iteration {iteration}")]
    Indefinite { iteration: usize },
    /// Iteration budget exhausted before the residual target.
    #[error("no convergence after {iterations} iterations, relative residual {residual:.3e} (target {target:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },
    /// A solve was forced on an image whose pore space does not percolate.
    #[error("non-percolating pore space: {0}")]
    NonPercolating(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
