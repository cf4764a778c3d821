//! Oracles shared by the per-module suites and the acceptance report.
#![allow(dead_code)]

pub mod classic;
pub mod layers;
pub mod metrics;
pub mod neural;
pub mod runs;
pub mod text;
pub mod vote;
