//! Command-line harness for `tvopt-core`: scenario configs, the built-in
//! experiments, report and CSV emission, and the verification suites.

pub mod commands;
pub mod config;
pub mod expr;
pub mod report;
pub mod scenarios;
pub mod suites;
