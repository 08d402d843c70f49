//! Core library for learning and calibrating AC optimal power flow solutions.
//!
//! The crate is organized around a two-stage pipeline:
//!
//! 1. A physics-informed neural model ([`neural`]) maps bus demands to bounded
//!    voltage predictions, recovers generator injections through the power-flow
//!    equations, and trains against prediction plus reconstruction error.
//! 2. A Gauss-Seidel-style calibration loop ([`calibration`]) restores
//!    feasibility of any candidate solution by sweeping voltage updates over
//!    load buses and re-balancing generator injections.
//!
//! Supporting modules provide the grid data model and case-file parsing
//! ([`grid_model`]), power-flow evaluation and conventional solvers
//! ([`powerflow`]), a local ACOPF solver for label generation ([`refsolver`]),
//! and dataset generation/serialization ([`dataset`]).

pub mod calibration;
pub mod dataset;
pub mod grid_model;
pub mod neural;
pub mod powerflow;
pub mod refsolver;

#[cfg(test)]
pub(crate) mod testutil;

pub use grid_model::{AdmittanceMatrix, Branch, Bus, BusKind, Generator, Network};
pub use powerflow::{DemandVector, GenSetpoints, PFResult, ResidualReport, VoltageProfile};
pub use refsolver::{OpfSolution, SolutionSource, SolverConfig};
