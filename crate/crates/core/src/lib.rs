//! Complexity-calibrated benchmarks for sequence predictors.

pub mod machine;
pub mod sampler;
pub mod seeds;
pub mod stats;
pub mod infotheory;
pub mod generator;
pub mod renewal;
pub mod predictors;
pub mod harness;
