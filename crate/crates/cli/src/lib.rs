//! Command-line front end for the `mscan` library.

pub mod args;
pub mod commands;
pub mod grid;

pub use args::Cli;
pub use commands::{run, Outcome};
