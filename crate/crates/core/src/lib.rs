//! Dual (upper-bound) pricing of Bermudan options by minimizing the pathwise
//! maximum of payoff minus martingale over a truncated Wiener chaos basis.
//!
//! The pipeline is: simulate paths ([`market`]), compute discounted payoffs
//! ([`payoff`]), enumerate the chaos basis ([`basis`]), then minimize the
//! sample-average dual objective ([`dual`]) with Polyak-step descent
//! ([`optim`]). [`oracle`] holds independent reference prices.

pub mod basis;
pub mod dual;
pub mod error;
pub mod market;
pub mod optim;
pub mod oracle;
pub mod payoff;

pub use error::{Error, Result};
