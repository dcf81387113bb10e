use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::naming::{Fault, GameConfig, GameSetup, GameState, Learning};
use crate::pgm::{AgentModel, Dataset, Observation, SignPrior};
use crate::prob::{LogProbVector, RandomSource, RngStream};

/// A small instance with fixed parameters and latents, for kernel oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenInstance {
    pub dataset: Dataset,
    pub models: Vec<AgentModel>,
    pub prior: SignPrior,
    /// `latents[k][d]`.
    pub latents: Vec<Vec<usize>>,
}

/// Short hex digest of a serializable instance.
pub fn instance_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("instances serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

pub(crate) fn random_probs(rng: &mut RngStream, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.2 + rng.uniform()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

pub(crate) fn random_observation(rng: &mut RngStream, n_features: usize) -> Observation {
    let mut counts = vec![0u32; n_features];
    for _ in 0..1 + rng.index(4) {
        counts[rng.index(n_features)] += 1;
    }
    Observation::new(counts).expect("at least one token")
}

/// Random models with integer statistics on top of the default priors.
pub(crate) fn random_model(
    rng: &mut RngStream,
    n_signs: usize,
    n_categories: usize,
    n_features: usize,
) -> AgentModel {
    let mut m = AgentModel::with_defaults(n_signs, n_categories, n_features).expect("sizes > 0");
    for row in m.phi.iter_mut().chain(m.theta.iter_mut()) {
        for i in 0..row.len() {
            row.add(i, rng.index(6) as f64);
        }
    }
    m
}

pub fn random_frozen_instance(
    seed: u64,
    n_signs: usize,
    n_categories: usize,
    n_features: usize,
    n_objects: usize,
    n_agents: usize,
) -> Result<FrozenInstance> {
    let mut rng = RandomSource::new(seed).stream(&[0xF0_2E_4E]);
    let observations = (0..n_agents)
        .map(|_| {
            (0..n_objects)
                .map(|_| random_observation(&mut rng, n_features))
                .collect()
        })
        .collect();
    let dataset = Dataset::new(observations, None)?;
    let models = (0..n_agents)
        .map(|_| random_model(&mut rng, n_signs, n_categories, n_features))
        .collect();
    let prior = SignPrior::new(LogProbVector::from_probs(&random_probs(&mut rng, n_signs))?);
    let latents = (0..n_agents)
        .map(|_| (0..n_objects).map(|_| rng.index(n_categories)).collect())
        .collect();
    Ok(FrozenInstance {
        dataset,
        models,
        prior,
        latents,
    })
}

impl FrozenInstance {
    pub fn n_signs(&self) -> usize {
        self.prior.len()
    }

    pub fn config(&self, learning: Learning, fault: Fault) -> GameConfig {
        let mut c = GameConfig::two_agent(
            self.dataset.n_objects,
            self.n_signs(),
            self.models[0].n_categories(),
            self.dataset.n_features,
            0,
            0,
        );
        c.n_agents = self.dataset.n_agents;
        c.learning = learning;
        c.fault = fault;
        c
    }

    /// A game state over this instance with the instance latents installed.
    /// Signs are set to 0; kernel builders overwrite the ones they vary.
    pub fn state(&self, learning: Learning, fault: Fault) -> Result<GameState> {
        let setup = GameSetup {
            prior: Some(self.prior.clone()),
            models: Some(self.models.clone()),
            sign_order: None,
        };
        let mut state = GameState::new(&self.config(learning, fault), &self.dataset, setup)?;
        for (k, row) in self.latents.iter().enumerate() {
            for (d, z) in row.iter().enumerate() {
                state.set_assignment(k, d, 0, *z);
            }
        }
        Ok(state)
    }
}
