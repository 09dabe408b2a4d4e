//! Deterministic grid-world laboratory for active loop closing (ALC) framed
//! as object-goal navigation (ON).
//!
//! The crate is organised bottom-up:
//!
//! - [`gridmap`]: occupancy grids, score maps, disks, FOV sectors, cropping
//!   and the model-input encoding, plus PGM I/O.
//! - [`worldgen`]: synthetic workspaces, score maps, augmentation, episodes
//!   and training datasets.
//! - [`planners`]: frontiers, the random-frontier baseline, the training-free
//!   peak planner and Dijkstra shortest paths.
//! - [`sim`]: the episode engine (sensing, motion, success, reward, the
//!   two-phase protocol).
//! - [`neural`]: a small CNN regressor with analytic gradients and SGD.
//! - [`rlp`]: losses, rewards, the advantage/critic objective, the monitor
//!   and ALC/ON fusion rules, training and the learned planners.
//! - [`eval`]: SPL, the paired-seed benchmark runner and result export.
//! - [`config`]: the resolved `key=value` run configuration.
//!
//! Data-parallel loops (episodes, dataset generation, minibatch gradients)
//! go through [`exec`], which uses rayon when the `parallel` feature is on
//! and falls back to plain iteration otherwise. Results are identical either
//! way.

pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gridmap;
pub mod neural;
pub mod planners;
pub mod rlp;
pub mod seed;
pub mod sim;
pub mod worldgen;

pub use error::{Error, Result};
