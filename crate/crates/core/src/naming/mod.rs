//! The Metropolis-Hastings naming game.
//!
//! Each agent keeps its own sign per object. In one exchange about object
//! `d`, speaker and listener perceive `x_d` under the listener's current
//! sign, the speaker samples a name from `p(m) p(z_d^Sp | m)`, and the
//! listener adopts it with probability
//! `min(1, p(z_d^Li | m') / p(z_d^Li | m_d^Li))`. With frozen parameters each
//! agent's sign chain for object `d` then targets `p(m_d | x_d^A, x_d^B)`.

mod config;
mod engine;
mod trace;

pub use config::{AcceptanceRule, Fault, GameConfig, Learning, Pairing, UpdateSchedule};
pub use engine::{run_game, AgentState, GameSetup, GameState, PointModel};
pub use trace::{ExchangeEvent, GameTrace, RoundMetrics, TraceRecord, TRACE_SCHEMA_VERSION};
