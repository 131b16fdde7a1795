//! Experiment harness: configuration, the seed × variant × env matrix,
//! aggregation and learning-curve export.

pub mod aggregate;
pub mod config;
pub mod curves;
pub mod matrix;
