//! Equi-energy sampling for multimodal targets.
//!
//! The sampler runs a ladder of chains, each targeting a flattened and
//! tempered version of the target. Visited states are filed into energy
//! rings; a chain can jump to a state recorded by the chain above it whose
//! energy lies in the same ring, which lets the target chain move between
//! modes that local moves cannot connect.
//!
//! Modules:
//! - [`target`]: energy functions (Gaussian mixtures, discrete grids) and the
//!   needle-in-the-haystack preset.
//! - [`ladder`]: energy/temperature ladders and pilot tuning.
//! - [`rings`]: bounded or unbounded energy-ring stores.
//! - [`engine`]: EE (serial and interleaved), parallel tempering and
//!   Metropolis-Hastings drivers.
//! - [`estimators`]: visiting probability, chain-0 and all-chain estimators,
//!   replication statistics.
//! - [`experiment`]: configuration, replication and CSV output for benchmarks.

pub mod engine;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod ladder;
pub mod rings;
pub mod target;

pub use engine::{
    run_ee, run_ee_interleaved, run_ee_serial, run_mh, run_pt, ChainCounters, ChainState, Init, SamplerConfig,
    SamplerRun, Schedule, Trace,
};
pub use error::{Error, Result};
pub use estimators::{aggregate, AggregateSummary, RunSummary};
pub use ladder::{tune_ladder, Ladder};
pub use rings::{Capacity, EnergyRings};
pub use target::{make_needle_target, Component, DiscreteGrid, GaussianMixture, Mode, TargetModel};
