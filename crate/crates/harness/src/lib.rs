//! Configuration, suites and reports behind the `histories` command.

pub mod config;
pub mod output;
pub mod report;
pub mod suites;
