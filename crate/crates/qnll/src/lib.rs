//! Energy-based atomistic-to-continuum coupling on a one-dimensional chain.
//!
//! The crate implements three models of a next-nearest-neighbour EAM chain
//! under a macroscopic strain `F` with a dead load:
//!
//! * `ATM` — the truncated fully atomistic model,
//! * `QNL` — quasinonlocal coupling with reflected interface site energies
//!   and a Cauchy-Born continuum,
//! * `QNLL` — QNL with the far-field Cauchy-Born density replaced by its
//!   second-order Taylor expansion around `F`.
//!
//! On top of the models sit a damped Newton solver with a banded Cholesky
//! factorisation, a graded finite-element mesh for coarse graining the
//! continuum region, region-size balancing rules, and a benchmark runner
//! that produces convergence and timing studies as CSV and SVG files.
//!
//! The library is deterministic: identical inputs produce bitwise identical
//! results. All assembly is single-threaded with a fixed reduction order.

pub mod balance;
pub mod banded;
pub mod error;
pub mod lattice;
pub mod mesh;
pub mod model;
pub mod plot;
pub mod potential;
pub mod settings;
pub mod solve;
pub mod study;

pub use balance::{plan_coarse, plan_no_coarse, BalancePlan, Regime};
pub use banded::BandedMatrix;
pub use error::Error;
pub use lattice::{grad_l2_norm, stencil, LatticeField, ProblemConfig, Region, RegionPartition};
pub use mesh::{build_mesh, interpolate, prolong, trapezoid_pair, CoarseSystem, Mesh, MeshField};
pub use model::{external_force_for, LatticeSystem, ModelKind, StressErrorKind, StressField};
pub use potential::{CauchyBornCoeffs, EamParams};
pub use solve::{min_eigenvalue, minimize, EnergySystem, SolveOptions, SolveReport};
