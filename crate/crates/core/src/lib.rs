//! Closed-form energy model and exact mapping search for GEMM on a
//! five-level spatial accelerator (DRAM, SRAM, PE array, per-PE regfile, MAC).
//!
//! A [`Mapping`](model::Mapping) fixes a tile chain per axis, one walking axis
//! per outer stage and a residency bit per axis at SRAM and regfile.
//! [`energy::energy_total`] prices a mapping in constant time,
//! [`solver::solve`] returns the global minimum with a certificate, and
//! [`oracle`] holds the step-by-step reference used to check both.

pub mod config;
pub mod energy;
pub mod error;
pub mod exact;
pub mod model;
pub mod oracle;
pub mod pad;
pub mod record;
pub mod report;
pub mod solver;
pub mod verify;
pub mod workload;

#[cfg(test)]
mod testutil;

pub use energy::{edp, energy_total, EnergyBreakdown, EvalOptions};
pub use error::{Error, Result};
pub use model::{validate, validate_with, Axis, Chain, GemmInstance, HardwareSpec, Mapping, PeConstraint};
pub use solver::{solve, Certificate, ProofKind, Solution, SolveOptions};
