//! Scenario runner for the resetlab toolkit: declarative `.cfg` files in,
//! CSV tables and SVG plots out.

pub mod config;
pub mod output;
pub mod runner;
pub mod scenarios;

pub use config::{load, parse, ConfigError, Scenario};
pub use runner::{run_scenario, RunError};
