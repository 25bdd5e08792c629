//! Sampling distributions, MNIST loading and the Monte-Carlo harness for
//! level, power and truncation-selection studies.

pub mod data;
pub mod harness;
pub mod mnist;
pub mod output;
pub mod rng;
