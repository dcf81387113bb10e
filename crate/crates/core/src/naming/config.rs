use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::pgm::{DEFAULT_ALPHA_PHI, DEFAULT_ALPHA_THETA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Agents 0 and 1 only; requires exactly two agents.
    #[default]
    FixedPair,
    /// Cycles through unordered pairs `(i, j)`, `i < j`, one pair per round.
    RoundRobin,
    /// Draws a speaker and a distinct partner uniformly each round.
    RandomPartner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Learning {
    /// Collapsed counts: every score is a posterior predictive of the live
    /// statistics with the scored object left out.
    #[default]
    Gibbs,
    /// Point estimates (posterior means) recomputed at each learning step.
    Map,
    /// Parameters fixed at their initial values for the whole game.
    Frozen,
}

/// When count updates from perception and acceptance reach the statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateSchedule {
    #[default]
    Immediate,
    /// Deferred to the listener's learning step at the end of each pass.
    Batched,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptanceRule {
    #[default]
    MetropolisHastings,
    AlwaysAccept,
    /// No-communication ablation: the listener never adopts a proposal.
    AlwaysReject,
}

/// Deliberately broken protocol variants used to check that the oracle
/// battery notices them.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    None,
    SquaredAcceptance,
    UniformProposal,
    NoLeaveOneOut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub n_agents: usize,
    pub n_objects: usize,
    pub vocab_size: usize,
    pub n_categories: usize,
    pub n_features: usize,
    pub n_rounds: usize,
    pub seed: u64,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default)]
    pub learning: Learning,
    #[serde(default)]
    pub schedule: UpdateSchedule,
    #[serde(default)]
    pub acceptance: AcceptanceRule,
    #[serde(default = "default_alpha_phi")]
    pub alpha_phi: f64,
    #[serde(default = "default_alpha_theta")]
    pub alpha_theta: f64,
    #[serde(default, skip_serializing_if = "is_no_fault")]
    pub fault: Fault,
}

fn default_alpha_phi() -> f64 {
    DEFAULT_ALPHA_PHI
}

fn default_alpha_theta() -> f64 {
    DEFAULT_ALPHA_THETA
}

fn is_no_fault(f: &Fault) -> bool {
    *f == Fault::None
}

impl GameConfig {
    /// Two agents, defaults everywhere else.
    pub fn two_agent(
        n_objects: usize,
        vocab_size: usize,
        n_categories: usize,
        n_features: usize,
        n_rounds: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_agents: 2,
            n_objects,
            vocab_size,
            n_categories,
            n_features,
            n_rounds,
            seed,
            pairing: Pairing::FixedPair,
            learning: Learning::Gibbs,
            schedule: UpdateSchedule::Immediate,
            acceptance: AcceptanceRule::MetropolisHastings,
            alpha_phi: DEFAULT_ALPHA_PHI,
            alpha_theta: DEFAULT_ALPHA_THETA,
            fault: Fault::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(config("a naming game needs at least two agents"));
        }
        if self.n_objects == 0
            || self.vocab_size == 0
            || self.n_categories == 0
            || self.n_features == 0
        {
            return Err(config("n_objects, vocab_size, n_categories, n_features must be >= 1"));
        }
        if self.pairing == Pairing::FixedPair && self.n_agents != 2 {
            return Err(config("pairing = fixed-pair requires exactly two agents"));
        }
        if !(self.alpha_phi > 0.0 && self.alpha_theta > 0.0) {
            return Err(config("prior concentrations must be positive"));
        }
        Ok(())
    }
}
