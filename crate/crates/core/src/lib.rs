#![allow(clippy::needless_range_loop)]

pub mod dataset;
pub mod dsl;
pub mod executor;
pub mod geometry;
pub mod pool;
pub mod sampler;
pub mod verifier;
pub mod renderer;
pub mod augmentor;
pub mod metrics;
pub mod fixtures;
pub mod cli;
