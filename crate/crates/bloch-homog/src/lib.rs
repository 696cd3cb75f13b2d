//! Operator-asymptotic homogenization for periodic linearized elasticity on the
//! unit torus.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: elastic tensors, the orthonormal Voigt basis, voxel coefficient fields.
//! - [`torus`]: truncated Fourier lattices, periodic vector fields, Korn constants.
//! - [`fiber`]: the Bloch fiber operator `A_chi`, its spectrum and resolvent.
//! - [`cell`]: classical and quasimomentum cell problems, homogenized tensors.
//! - [`asymptotics`]: the two-cycle expansion, corrector operators, contours, fiber rates.
//! - [`fullspace`]: smoothing, epsilon-rate studies, two-scale agreement, Gelfand checks.
//! - [`experiments`]: configs, manifests and the study runner behind the CLI.
//!
//! Everything is complex-valued. Fields live on the lattice `k in [-K, K]^3`,
//! operators are dense `faer` matrices of size `3 (2K+1)^3`.

pub mod asymptotics;
pub mod cell;
pub mod error;
pub mod experiments;
pub mod fiber;
pub mod fullspace;
pub mod io;
pub mod linalg;
pub mod tensor;
pub mod torus;

pub use error::{Error, Result};
pub use faer::c64;
