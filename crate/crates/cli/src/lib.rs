//! Configuration-driven runner for the clusterbound engines.

pub mod config;
pub mod runner;
pub mod suites;
