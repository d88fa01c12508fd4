//! Artifact plumbing for the `pilotwave` binary: run configuration, report
//! and trajectory writers, binary wavefunction snapshots and SVG plots.

pub mod config;
pub mod output;
pub mod snapshot;
pub mod svg;
