//! Density-based correlated equilibria of tabular Markov games.
//!
//! [`dbcpi::dbcpi_run`] alternates stage-game linear programs over occupancy
//! measures with policy evaluation. [`baselines`] holds the reward-shaping
//! and density-capped CE-Q comparisons, [`environments`] the benchmark games
//! and [`harness`] multi-seed experiment orchestration and reports.

pub mod error;
pub mod game;
pub mod lp;
pub mod stage;
pub mod dbcpi;
pub mod environments;
pub mod baselines;
pub mod harness;

pub use error::{Error, Result};
