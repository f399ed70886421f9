//! Benchmark environments. Each builder produces an exact [`TabularMdp`]
//! and a seeded simulator over it.
//!
//! [`TabularMdp`]: crate::mdp::TabularMdp

pub mod doublechain;
pub mod gridworld;
pub mod noise;
pub mod smallcell;

use serde::{Deserialize, Serialize};

pub use doublechain::{build_doublechain, DoubleChainSpec};
pub use gridworld::{build_gridworld, Gridworld, GridworldSpec};
pub use noise::NoisyEnv;
pub use smallcell::{build_smallcell, generate_smallcell_instance, SmallCell, SmallCellSpec};

/// Whether an environment terminates (costs until absorption) or runs
/// forever and needs discounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Finite,
    Infinite,
}
