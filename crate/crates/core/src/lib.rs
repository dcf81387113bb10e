//! Tabular simulator for generative emergent communication: decentralized
//! Metropolis-Hastings naming games, collective free energy, ELBO signaling
//! games and message-conditioned two-agent control, together with the exact
//! enumeration oracles that check them.

pub mod cli;
pub mod error;
pub mod marl;
pub mod naming;
pub mod pgm;
pub mod prob;
pub mod signaling;
pub mod temporal;
pub mod verify;

pub use error::{Error, Result};
