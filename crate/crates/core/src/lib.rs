//! Nonlinear, nonlocal peridynamic dynamics on closed triangulated surfaces.
//!
//! The pipeline is: a [`mesh::Mesh`] (OFF file or icosphere) is turned into an edge
//! graph, from which [`geodesic::GeodesicTable`] collects every vertex pair closer than
//! the horizon along mesh edges. [`operator`] evaluates the power-law pair forces and
//! stored energy on that table, [`integrator`] advances the equations of motion with an
//! implicit predictor/corrector Newmark scheme, and [`diagnostics`] tracks energies,
//! the energy bound and surface stretch. [`harness`] wires these into the two standard
//! experiments (random initial velocity, uniaxial pole load) and writes CSV/VTK output.

// Parameter checks are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod geodesic;
pub mod harness;
pub mod integrator;
pub mod mesh;
pub mod operator;
pub mod vtk;

pub use error::{Error, Result};

/// Three-component vector used for positions, displacements, velocities and forces.
pub type Vec3 = nalgebra::Vector3<f64>;
