//! The static inter-agent generative model: a shared sign `m`, per-agent
//! categories `z_k` and per-agent feature counts `x_k`, with every
//! conditional realized as a collapsed Dirichlet-categorical model.

mod cfe;
mod dataset;

pub use cfe::{
    collective_free_energy, enumerate_assignments, log_evidence, log_joint, CfeReport, TabulatedQ,
    DEFAULT_ENUMERATION_CAP,
};
pub(crate) use cfe::mixed_radix;
pub use dataset::{Dataset, SequenceDataset, DATASET_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};
use crate::prob::{DirichletCounts, LogProbVector};

pub const DEFAULT_ALPHA_PHI: f64 = 1.0;
pub const DEFAULT_ALPHA_THETA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sign(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(pub usize);

/// Feature counts observed by one agent for one object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation {
    counts: Vec<u32>,
}

impl Observation {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(contract("observation needs at least one feature"));
        }
        if counts.iter().all(|c| *c == 0) {
            return Err(contract("observation total must be positive"));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn n_features(&self) -> usize {
        self.counts.len()
    }
}

/// Per-agent Dirichlet-categorical parameters.
///
/// `phi[m]` is the distribution over categories given sign `m`, and
/// `theta[z]` the distribution over features given category `z`. Both hold
/// prior concentration plus accumulated statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub phi: Vec<DirichletCounts>,
    pub theta: Vec<DirichletCounts>,
    pub alpha_phi: f64,
    pub alpha_theta: f64,
}

impl AgentModel {
    pub fn new(
        n_signs: usize,
        n_categories: usize,
        n_features: usize,
        alpha_phi: f64,
        alpha_theta: f64,
    ) -> Result<Self> {
        if n_signs == 0 || n_categories == 0 || n_features == 0 {
            return Err(contract("model sizes must be positive"));
        }
        if !(alpha_phi > 0.0 && alpha_theta > 0.0) {
            return Err(domain("prior concentrations must be positive"));
        }
        Ok(Self {
            phi: vec![DirichletCounts::symmetric(n_categories, alpha_phi); n_signs],
            theta: vec![DirichletCounts::symmetric(n_features, alpha_theta); n_categories],
            alpha_phi,
            alpha_theta,
        })
    }

    pub fn with_defaults(n_signs: usize, n_categories: usize, n_features: usize) -> Result<Self> {
        Self::new(
            n_signs,
            n_categories,
            n_features,
            DEFAULT_ALPHA_PHI,
            DEFAULT_ALPHA_THETA,
        )
    }

    pub fn n_signs(&self) -> usize {
        self.phi.len()
    }

    pub fn n_categories(&self) -> usize {
        self.theta.len()
    }

    pub fn n_features(&self) -> usize {
        self.theta[0].len()
    }

    fn check_sign(&self, m: Sign) -> Result<()> {
        if m.0 >= self.n_signs() {
            return Err(domain(format!("sign {} out of range 0..{}", m.0, self.n_signs())));
        }
        Ok(())
    }

    fn check_category(&self, z: Category) -> Result<()> {
        if z.0 >= self.n_categories() {
            return Err(domain(format!(
                "category {} out of range 0..{}",
                z.0,
                self.n_categories()
            )));
        }
        Ok(())
    }

    fn check_observation(&self, x: &Observation) -> Result<()> {
        if x.n_features() != self.n_features() {
            return Err(domain(format!(
                "observation has {} features, model expects {}",
                x.n_features(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Collapsed log predictive of the counts `x` under category `z`: the
    /// probability of one fixed ordering of the `total` feature tokens, drawn
    /// sequentially from the Pólya urn of `theta[z]`.
    pub fn log_lik_obs(&self, z: Category, x: &Observation) -> Result<f64> {
        self.check_category(z)?;
        self.check_observation(x)?;
        Ok(polya_log_lik(&self.theta[z.0], x.counts(), None))
    }

    /// As [`log_lik_obs`](Self::log_lik_obs), with `x` assumed to be counted
    /// under category `assigned`; its own tokens are excluded first.
    pub fn log_lik_obs_loo(&self, z: Category, x: &Observation, assigned: Category) -> Result<f64> {
        self.check_category(z)?;
        self.check_category(assigned)?;
        self.check_observation(x)?;
        let exclude = (z == assigned).then_some(x.counts());
        Ok(polya_log_lik(&self.theta[z.0], x.counts(), exclude))
    }

    /// Collapsed log predictive `log p(z | m, phi)`.
    pub fn log_lik_latent(&self, m: Sign, z: Category) -> Result<f64> {
        self.check_sign(m)?;
        self.check_category(z)?;
        Ok(self.phi[m.0].log_predictive(z.0))
    }

    /// Normalized posterior over categories, `∝ p(z | m) p(x | z)`.
    pub fn posterior_latent(&self, x: &Observation, m: Sign) -> Result<LogProbVector> {
        self.check_sign(m)?;
        self.check_observation(x)?;
        let weights = (0..self.n_categories())
            .map(|z| self.phi[m.0].log_predictive(z) + polya_log_lik(&self.theta[z], x.counts(), None))
            .collect();
        LogProbVector::from_log_weights(weights)
    }

    pub fn add_assignment(&mut self, m: Sign, z: Category, x: &Observation) {
        self.phi[m.0].add(z.0, 1.0);
        for (f, c) in x.counts().iter().enumerate() {
            if *c > 0 {
                self.theta[z.0].add(f, f64::from(*c));
            }
        }
    }

    pub fn remove_assignment(&mut self, m: Sign, z: Category, x: &Observation) {
        self.phi[m.0].remove(z.0, 1.0);
        for (f, c) in x.counts().iter().enumerate() {
            if *c > 0 {
                self.theta[z.0].remove(f, f64::from(*c));
            }
        }
    }

    /// A model with the same priors and no accumulated statistics.
    pub fn cleared(&self) -> Self {
        Self {
            phi: self
                .phi
                .iter()
                .map(|row| DirichletCounts::from_prior(row.prior().to_vec()).expect("valid prior"))
                .collect(),
            theta: self
                .theta
                .iter()
                .map(|row| DirichletCounts::from_prior(row.prior().to_vec()).expect("valid prior"))
                .collect(),
            alpha_phi: self.alpha_phi,
            alpha_theta: self.alpha_theta,
        }
    }

    /// Rebuilds the statistics from scratch for the given assignments.
    pub fn rebuilt(&self, signs: &[usize], latents: &[usize], observations: &[Observation]) -> Self {
        let mut model = self.cleared();
        for ((m, z), x) in signs.iter().zip(latents).zip(observations) {
            model.add_assignment(Sign(*m), Category(*z), x);
        }
        model
    }

    /// True when the stored statistics equal a rebuild from the assignments.
    pub fn audit(&self, signs: &[usize], latents: &[usize], observations: &[Observation]) -> bool {
        let rebuilt = self.rebuilt(signs, latents, observations);
        self.phi
            .iter()
            .zip(&rebuilt.phi)
            .chain(self.theta.iter().zip(&rebuilt.theta))
            .all(|(a, b)| a.stats() == b.stats())
    }

    /// Relabels signs: row `m` moves to `perm[m]`.
    pub fn permute_signs(&self, perm: &[usize]) -> Self {
        let mut phi = self.phi.clone();
        for (m, row) in self.phi.iter().enumerate() {
            phi[perm[m]] = row.clone();
        }
        Self {
            phi,
            ..self.clone()
        }
    }
}

/// `Σ_f Σ_{j<x_f} ln(c_f + j) − Σ_{j<X} ln(C + j)`, optionally after
/// subtracting `exclude` from the row.
pub(crate) fn polya_log_lik(row: &DirichletCounts, x: &[u32], exclude: Option<&[u32]>) -> f64 {
    let excluded = |f: usize| exclude.map_or(0.0, |e| f64::from(e[f]));
    let mut total = row.total();
    let mut ll = 0.0;
    for (f, c) in x.iter().enumerate() {
        if *c == 0 {
            continue;
        }
        let base = row.count(f) - excluded(f);
        for j in 0..*c {
            ll += (base + f64::from(j)).ln();
        }
    }
    if let Some(e) = exclude {
        total -= e.iter().map(|c| f64::from(*c)).sum::<f64>();
    }
    let n: u32 = x.iter().sum();
    for j in 0..n {
        ll -= (total + f64::from(j)).ln();
    }
    ll
}

/// Prior over signs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignPrior {
    pub dist: LogProbVector,
}

impl SignPrior {
    pub fn uniform(n_signs: usize) -> Self {
        Self {
            dist: LogProbVector::uniform(n_signs),
        }
    }

    pub fn new(dist: LogProbVector) -> Self {
        Self { dist }
    }

    pub fn log_prob(&self, m: usize) -> f64 {
        self.dist.values()[m]
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }
}

/// One realization of all signs and categories: `signs[d]` and
/// `latents[k][d]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldAssignment {
    pub signs: Vec<usize>,
    pub latents: Vec<Vec<usize>>,
}

impl WorldAssignment {
    pub fn n_objects(&self) -> usize {
        self.signs.len()
    }

    pub fn n_agents(&self) -> usize {
        self.latents.len()
    }
}
