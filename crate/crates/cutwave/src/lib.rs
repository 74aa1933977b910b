//! Experiment drivers and CSV output for the immersed wave solver.

pub mod config;
pub mod experiments;
pub mod output;
pub mod selftest;
