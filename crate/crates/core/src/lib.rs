//! Pilot-wave (de Broglie-Bohm) simulation engine.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`] holds grids, Gaussian packets and the split-operator propagator.
//! * [`branchstate`] represents a configuration-space wavefunction as a sum of
//!   weighted product branches over named subsystems.
//! * [`guidance`] integrates Bohmian trajectories through a series of branch
//!   state snapshots and samples |Ψ₀|²-distributed ensembles.
//! * [`interactions`] implements the measurement primitives (impulsive von
//!   Neumann coupling, collapse, which-path detector, pairwise entanglement and
//!   the protective phase) as branch-state transformations.
//! * [`oracle`] propagates two-subsystem systems on a full joint grid, used to
//!   cross-check the analytic branch transformations.
//! * [`scenarios`] is the catalog of gedanken experiments and their assertions.
//!
//! Units are natural, ℏ = 1, with unit mass unless a mass is given.

pub mod branchstate;
pub mod error;
pub mod fields;
pub mod guidance;
pub mod interactions;
pub mod oracle;
pub mod scenarios;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use branchstate::{Branch, BranchState, Factor, Occupancy, Subsystem};
pub use fields::{make_grid, Axis, ComplexField, Grid, PacketSpec};
pub use guidance::{Configuration, EnsembleStats, Trajectory};
pub use scenarios::{catalog, lookup, run_scenario, RunReport, ScenarioOptions, ScenarioOutput, ScenarioSpec};
