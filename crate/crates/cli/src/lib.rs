//! Harness library behind the `rkmeans` binary: configuration types,
//! sweep execution and report emission, reusable from integration tests.

pub mod config;
pub mod sweep;
