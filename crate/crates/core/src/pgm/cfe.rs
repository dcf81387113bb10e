//! Collective free energy of a tabulated assignment distribution and the
//! exact log evidence of the frozen model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentModel, Category, Dataset, Sign, SignPrior, WorldAssignment};
use crate::error::{config, contract, Error, Result};
use crate::prob::{logsumexp_unchecked, LogProbVector};

/// Default cap on the number of table entries an exact enumeration may touch.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// An explicit distribution over world assignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedQ {
    pub support: Vec<WorldAssignment>,
    pub log_probs: LogProbVector,
}

impl TabulatedQ {
    pub fn new(support: Vec<WorldAssignment>, log_probs: LogProbVector) -> Result<Self> {
        if support.len() != log_probs.len() {
            return Err(contract("support and probability table differ in length"));
        }
        if support.is_empty() {
            return Err(contract("empty assignment distribution"));
        }
        Ok(Self { support, log_probs })
    }

    /// Plug-in (empirical) distribution of sampled assignments.
    pub fn from_samples(samples: &[WorldAssignment]) -> Result<Self> {
        let mut counts: BTreeMap<&WorldAssignment, usize> = BTreeMap::new();
        for s in samples {
            *counts.entry(s).or_default() += 1;
        }
        let n = samples.len() as f64;
        let (support, probs): (Vec<_>, Vec<_>) = counts
            .into_iter()
            .map(|(a, c)| (a.clone(), c as f64 / n))
            .unzip();
        Self::new(support, LogProbVector::from_probs(&probs)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfeReport {
    /// `E_q[log q − log p(m, z, x)]`, computed directly.
    pub total: f64,
    pub collective_reg: f64,
    pub pred_error: Vec<f64>,
    pub individual_reg: Vec<f64>,
}

impl CfeReport {
    /// The three-term regrouping, summed.
    pub fn decomposed_total(&self) -> f64 {
        self.collective_reg
            + self
                .pred_error
                .iter()
                .zip(&self.individual_reg)
                .map(|(a, b)| a + b)
                .sum::<f64>()
    }
}

fn check_instance(dataset: &Dataset, agents: &[AgentModel], prior: &SignPrior) -> Result<()> {
    if agents.len() != dataset.n_agents {
        return Err(config(format!(
            "{} agent models for a dataset with K={}",
            agents.len(),
            dataset.n_agents
        )));
    }
    for a in agents {
        if a.n_signs() != prior.len() {
            return Err(config("agent vocabulary differs from sign prior"));
        }
        if a.n_features() != dataset.n_features {
            return Err(config("agent feature count differs from dataset"));
        }
    }
    Ok(())
}

/// `log p(m, {z}, {x})` of one assignment under the frozen models.
pub fn log_joint(
    assignment: &WorldAssignment,
    dataset: &Dataset,
    agents: &[AgentModel],
    prior: &SignPrior,
) -> Result<f64> {
    check_instance(dataset, agents, prior)?;
    let mut lj = 0.0;
    for (d, m) in assignment.signs.iter().enumerate() {
        lj += prior.log_prob(*m);
        for (k, agent) in agents.iter().enumerate() {
            let z = Category(assignment.latents[k][d]);
            lj += agent.log_lik_latent(Sign(*m), z)?;
            lj += agent.log_lik_obs(z, dataset.observation(k, d))?;
        }
    }
    Ok(lj)
}

/// All assignments for the given sizes, signs varying slowest, in lexicographic
/// order of `(signs, latents)`.
pub fn enumerate_assignments(
    n_signs: usize,
    n_categories: usize,
    n_agents: usize,
    n_objects: usize,
    cap: u128,
) -> Result<Vec<WorldAssignment>> {
    let sign_space = (n_signs as u128).checked_pow(n_objects as u32);
    let latent_space = (n_categories as u128).checked_pow((n_agents * n_objects) as u32);
    let required = sign_space
        .zip(latent_space)
        .and_then(|(a, b)| a.checked_mul(b))
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::SizeCap { required, cap });
    }
    let sign_tuples = mixed_radix(n_signs, n_objects);
    let latent_tuples = mixed_radix(n_categories, n_agents * n_objects);
    let mut out = Vec::with_capacity(required as usize);
    for s in &sign_tuples {
        for l in &latent_tuples {
            out.push(WorldAssignment {
                signs: s.clone(),
                latents: l.chunks(n_objects).map(<[usize]>::to_vec).collect(),
            });
        }
    }
    Ok(out)
}

pub(crate) fn mixed_radix(base: usize, digits: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..digits {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Collective free energy of `q` and its three-term decomposition.
///
/// The per-agent regularizer uses the chain rule `q({z}) = Π_k q(z_k | z_<k)`,
/// which reduces to `q(z_k | x_k)` when `q` factorizes over agents.
pub fn collective_free_energy(
    q: &TabulatedQ,
    dataset: &Dataset,
    agents: &[AgentModel],
    prior: &SignPrior,
) -> Result<CfeReport> {
    check_instance(dataset, agents, prior)?;
    let n_agents = agents.len();
    for a in &q.support {
        if a.n_objects() != dataset.n_objects || a.n_agents() != n_agents {
            return Err(contract("assignment dimensions differ from dataset"));
        }
    }
    let probs = q.log_probs.probs();
    let lq = q.log_probs.values();

    let mut total = 0.0;
    for (i, a) in q.support.iter().enumerate() {
        if probs[i] > 0.0 {
            total += probs[i] * (lq[i] - log_joint(a, dataset, agents, prior)?);
        }
    }

    // marginals of latent prefixes z_<=k, k = 0..K
    let mut prefix_mass: Vec<BTreeMap<&[Vec<usize>], f64>> = vec![BTreeMap::new(); n_agents + 1];
    for (i, a) in q.support.iter().enumerate() {
        for (k, map) in prefix_mass.iter_mut().enumerate() {
            *map.entry(&a.latents[..k]).or_default() += probs[i];
        }
    }
    let full = &prefix_mass[n_agents];

    let mut collective_reg = 0.0;
    let mut pred_error = vec![0.0; n_agents];
    let mut individual_reg = vec![0.0; n_agents];
    for (i, a) in q.support.iter().enumerate() {
        let p = probs[i];
        if p == 0.0 {
            continue;
        }
        let log_prior: f64 = a.signs.iter().map(|m| prior.log_prob(*m)).sum();
        let log_q_sign_given_latents = lq[i] - full[&a.latents[..]].ln();
        collective_reg += p * (log_q_sign_given_latents - log_prior);
        for (k, agent) in agents.iter().enumerate() {
            let mut lik_obs = 0.0;
            let mut lik_latent = 0.0;
            for (d, m) in a.signs.iter().enumerate() {
                let z = Category(a.latents[k][d]);
                lik_obs += agent.log_lik_obs(z, dataset.observation(k, d))?;
                lik_latent += agent.log_lik_latent(Sign(*m), z)?;
            }
            let log_q_cond = prefix_mass[k + 1][&a.latents[..k + 1]].ln()
                - prefix_mass[k][&a.latents[..k]].ln();
            pred_error[k] -= p * lik_obs;
            individual_reg[k] += p * (log_q_cond - lik_latent);
        }
    }
    Ok(CfeReport {
        total,
        collective_reg,
        pred_error,
        individual_reg,
    })
}

/// Exact `log p({x})`: objects are independent under frozen models, and each
/// object's joint over `(m, z_1..z_K)` is enumerated explicitly.
pub fn log_evidence(
    dataset: &Dataset,
    agents: &[AgentModel],
    prior: &SignPrior,
    cap: u128,
) -> Result<f64> {
    check_instance(dataset, agents, prior)?;
    let n_signs = prior.len();
    let n_categories = agents[0].n_categories();
    if agents.iter().any(|a| a.n_categories() != n_categories) {
        return Err(config("log_evidence needs a shared category count"));
    }
    let per_object = (n_categories as u128)
        .checked_pow(agents.len() as u32)
        .and_then(|c| c.checked_mul(n_signs as u128));
    let required = per_object
        .and_then(|p| p.checked_mul(dataset.n_objects as u128))
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::SizeCap { required, cap });
    }
    let latent_tuples = mixed_radix(n_categories, agents.len());
    let mut evidence = 0.0;
    for d in 0..dataset.n_objects {
        // per-agent, per-category observation likelihoods
        let obs_ll: Vec<Vec<f64>> = agents
            .iter()
            .enumerate()
            .map(|(k, a)| {
                (0..n_categories)
                    .map(|z| a.log_lik_obs(Category(z), dataset.observation(k, d)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut terms = Vec::with_capacity(n_signs * latent_tuples.len());
        for m in 0..n_signs {
            for zs in &latent_tuples {
                let mut t = prior.log_prob(m);
                for (k, z) in zs.iter().enumerate() {
                    t += agents[k].phi[m].log_predictive(*z) + obs_ll[k][*z];
                }
                terms.push(t);
            }
        }
        evidence += logsumexp_unchecked(&terms);
    }
    Ok(evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgm::Observation;
    use crate::prob::{kl_divergence, RandomSource};

    fn tiny() -> (Dataset, Vec<AgentModel>, SignPrior) {
        let obs = |c: &[u32]| Observation::new(c.to_vec()).unwrap();
        let ds = Dataset::new(vec![vec![obs(&[2, 1])], vec![obs(&[0, 3])]], None).unwrap();
        let mut a = AgentModel::with_defaults(2, 2, 2).unwrap();
        a.add_assignment(Sign(0), Category(0), &obs(&[3, 0]));
        a.add_assignment(Sign(1), Category(1), &obs(&[0, 2]));
        let mut b = AgentModel::with_defaults(2, 2, 2).unwrap();
        b.add_assignment(Sign(0), Category(1), &obs(&[1, 4]));
        b.add_assignment(Sign(1), Category(0), &obs(&[2, 2]));
        let prior = SignPrior::new(LogProbVector::from_probs(&[0.4, 0.6]).unwrap());
        (ds, vec![a, b], prior)
    }

    /// Posterior over the full support, built straight from `log_joint`.
    fn posterior_q(ds: &Dataset, agents: &[AgentModel], prior: &SignPrior) -> TabulatedQ {
        let support = enumerate_assignments(2, 2, 2, ds.n_objects, DEFAULT_ENUMERATION_CAP).unwrap();
        let lj: Vec<f64> = support
            .iter()
            .map(|a| log_joint(a, ds, agents, prior).unwrap())
            .collect();
        TabulatedQ::new(support, LogProbVector::from_log_weights(lj).unwrap()).unwrap()
    }

    #[test]
    fn exact_posterior_attains_negative_log_evidence() {
        let (ds, agents, prior) = tiny();
        let q = posterior_q(&ds, &agents, &prior);
        let report = collective_free_energy(&q, &ds, &agents, &prior).unwrap();
        let ev = log_evidence(&ds, &agents, &prior, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((report.total + ev).abs() < 1e-10);
        assert!((report.decomposed_total() - report.total).abs() < 1e-10);
    }

    #[test]
    fn prior_shaped_q_has_higher_free_energy() {
        let (ds, agents, prior) = tiny();
        let support = enumerate_assignments(2, 2, 2, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        let w: Vec<f64> = support
            .iter()
            .map(|a| {
                prior.log_prob(a.signs[0])
                    + agents[0].phi[a.signs[0]].log_predictive(a.latents[0][0])
                    + agents[1].phi[a.signs[0]].log_predictive(a.latents[1][0])
            })
            .collect();
        let q_prior = TabulatedQ::new(support, LogProbVector::from_log_weights(w).unwrap()).unwrap();
        let q_post = posterior_q(&ds, &agents, &prior);
        let f_prior = collective_free_energy(&q_prior, &ds, &agents, &prior).unwrap();
        let f_post = collective_free_energy(&q_post, &ds, &agents, &prior).unwrap();
        assert!(f_prior.total > f_post.total + 1e-6);
    }

    #[test]
    fn tiny_instance_decomposition_equals_kl_plus_evidence() {
        let (ds, agents, prior) = tiny();
        let post = posterior_q(&ds, &agents, &prior);
        let ev = log_evidence(&ds, &agents, &prior, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut rng = RandomSource::new(3).stream(&[]);
        for _ in 0..10 {
            let w: Vec<f64> = (0..post.support.len()).map(|_| rng.uniform() + 1e-3).collect();
            let q = TabulatedQ::new(post.support.clone(), LogProbVector::from_probs(&w).unwrap())
                .unwrap();
            let report = collective_free_energy(&q, &ds, &agents, &prior).unwrap();
            let kl = kl_divergence(&q.log_probs, &post.log_probs).unwrap();
            assert!((report.decomposed_total() - (kl - ev)).abs() < 1e-10);
            assert!(-report.total <= ev + 1e-12);
        }
    }

    #[test]
    fn evidence_with_flat_likelihoods_is_constant() {
        let obs = |c: &[u32]| Observation::new(c.to_vec()).unwrap();
        let ds = Dataset::new(vec![vec![obs(&[1, 0, 0])]], None).unwrap();
        let agents = vec![AgentModel::with_defaults(3, 2, 3).unwrap()];
        let ev = log_evidence(&ds, &agents, &SignPrior::uniform(3), DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((ev - (1.0f64 / 3.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn cap_refusal_names_the_cap() {
        let (ds, agents, prior) = tiny();
        match log_evidence(&ds, &agents, &prior, 4) {
            Err(Error::SizeCap { cap, required }) => {
                assert_eq!(cap, 4);
                assert_eq!(required, 8);
            }
            other => panic!("expected cap refusal, got {other:?}"),
        }
        assert!(enumerate_assignments(4, 4, 3, 6, 1000).is_err());
    }

    #[test]
    fn empirical_q_is_normalized_plug_in() {
        let a = WorldAssignment { signs: vec![0], latents: vec![vec![1], vec![0]] };
        let b = WorldAssignment { signs: vec![1], latents: vec![vec![1], vec![0]] };
        let q = TabulatedQ::from_samples(&[a.clone(), b.clone(), a.clone(), a]).unwrap();
        assert_eq!(q.support.len(), 2);
        assert!((q.log_probs.prob(0) - 0.75).abs() < 1e-15);
    }
}
