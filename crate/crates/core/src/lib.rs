//! Maximum-entropy planning and learning for finite MDPs and for MDPs whose
//! costs depend on continuous state and action parameters.

pub mod baselines;
pub mod bench;
pub mod config;
pub mod env;
pub mod envs;
pub mod error;
pub mod learn;
pub mod mdp;
pub mod metrics;
pub mod numeric;
pub mod param;
pub mod param_rl;
pub mod soft;

pub use error::{Error, Result};
