//! Energy-harvesting two-hop relay with a finite battery.
//!
//! The relay harvests one energy unit for every received `1`, spends `m`
//! units per transmitted `1`, and stores at most `U` units. The battery
//! level is the channel state; the receiver never observes it.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: alphabet, energy feasibility, battery transitions, policies.
//! - [`markov`]: the induced battery chain, its steady state, and the
//!   achievable-rate functionals for noiseless and noisy second hops.
//! - [`optimizer`]: grid search plus derivative-free refinement over policies.
//! - [`codec`]: block Markov superposition coding with state-blind backward
//!   decoding at the receiver.
//! - [`simulator`]: Monte Carlo harness and brute-force oracles.
//! - [`cli`]: the `ehrelay` command-line front end.

pub mod channel;
pub mod cli;
pub mod codec;
pub mod error;
pub mod info;
pub mod markov;
pub mod optimizer;
pub mod rng;
pub mod simulator;

pub use channel::{ChannelConfig, PolicyPmf, StatePmf, Symbol};
pub use error::{Error, Result};
pub use markov::{RateReport, SteadyState, TransitionMatrix};
