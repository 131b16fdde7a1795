//! Dormant-ratio-guided actor-critic for continuous control.

pub mod agent;
pub mod config;
pub mod dormant;
pub mod envs;
pub mod error;
pub mod nn;
pub mod perturb;
pub mod replay;
pub mod schedule;
pub mod seed;
pub mod train;
pub mod value;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
