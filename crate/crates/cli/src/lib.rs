//! Configuration, reporting and the command implementations behind the
//! `chaosdual` binary.

pub mod checks;
pub mod config;
pub mod error;
pub mod run;

pub use config::{Overrides, RunConfig};
pub use error::CliError;
pub use run::{run_bench, run_oracle, run_price, PricingResult};
