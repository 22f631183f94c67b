//! Command-line front end pieces: experiment-config loading and the canned
//! verification recipes behind `query-hedge verify`.

pub mod config;
pub mod recipes;
