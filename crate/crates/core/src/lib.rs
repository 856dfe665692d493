//! Numerical core for stationary thermocapillary thin films on periodic
//! square and hexagonal cells: spectral fields with dihedral symmetry,
//! Newton solvers for stationary states, linear stability, local
//! bifurcation expansions, pseudo-arclength continuation and a
//! semi-implicit time stepper.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod continuation;
pub mod error;
pub mod evolve;
pub mod fft;
pub mod field;
pub mod lattice;
pub mod linalg;
pub mod linstab;
pub mod localbif;
pub mod stationary;

pub use error::{Error, Result};
pub use field::{Grid, PeriodicField, SymmetricField};
pub use lattice::{make_lattice, Lattice, LatticeHeader, LatticeKind, ModeIndex};
