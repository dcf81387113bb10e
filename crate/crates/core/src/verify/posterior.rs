use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::pgm::{
    enumerate_assignments, log_joint, AgentModel, Category, Dataset, Sign, SignPrior,
    WorldAssignment,
};
use crate::prob::{logsumexp_unchecked, LogProbVector};

/// Exact posterior over world assignments. When latents are marginalized the
/// assignments carry signs only (`latents` is empty).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedPosterior {
    pub support: Vec<WorldAssignment>,
    pub log_probs: LogProbVector,
    pub marginalized: bool,
}

impl EnumeratedPosterior {
    /// Marginal over object `d`'s sign.
    pub fn sign_marginal(&self, d: usize, n_signs: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_signs];
        for (a, lp) in self.support.iter().zip(self.log_probs.values()) {
            out[a.signs[d]] += lp.exp();
        }
        out
    }

    /// Joint marginal over the sign tuple, indexed like
    /// `enumerate_assignments` orders signs (first object slowest).
    pub fn sign_tuple_marginal(&self, n_signs: usize) -> Vec<f64> {
        let d_count = self.support.first().map_or(0, |a| a.signs.len());
        let mut out = vec![0.0; n_signs.pow(d_count as u32)];
        for (a, lp) in self.support.iter().zip(self.log_probs.values()) {
            let idx = a.signs.iter().fold(0, |acc, m| acc * n_signs + m);
            out[idx] += lp.exp();
        }
        out
    }
}

/// `log p(m) + Σ_k log Σ_z p_k(z | m) p_k(x_d^k | z)` for every sign `m`.
pub fn object_sign_log_weights(
    dataset: &Dataset,
    agents: &[AgentModel],
    prior: &SignPrior,
    d: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(prior.len());
    for m in 0..prior.len() {
        let mut w = prior.log_prob(m);
        for (k, agent) in agents.iter().enumerate() {
            let x = dataset.observation(k, d);
            let terms = (0..agent.n_categories())
                .map(|z| {
                    Ok(agent.log_lik_latent(Sign(m), Category(z))?
                        + agent.log_lik_obs(Category(z), x)?)
                })
                .collect::<Result<Vec<_>>>()?;
            w += logsumexp_unchecked(&terms);
        }
        out.push(w);
    }
    Ok(out)
}

/// Exact sign posterior `p(m_d | x_d^1..x_d^K)` of one object.
pub fn object_sign_posterior(
    dataset: &Dataset,
    agents: &[AgentModel],
    prior: &SignPrior,
    d: usize,
) -> Result<LogProbVector> {
    LogProbVector::from_log_weights(object_sign_log_weights(dataset, agents, prior, d)?)
}

/// Exact posterior of the frozen model by exhaustive enumeration.
///
/// With `marginalize_latents` the table has `M^D` entries and the latents are
/// summed out per object in closed form; otherwise it has `M^D C^(K D)`
/// entries. Either size must stay under `cap`.
pub fn enumerate_posterior(
    dataset: &Dataset,
    agents: &[AgentModel],
    prior: &SignPrior,
    marginalize_latents: bool,
    cap: u128,
) -> Result<EnumeratedPosterior> {
    if agents.len() != dataset.n_agents {
        return Err(config("one model per dataset agent is required"));
    }
    let n_signs = prior.len();
    let n_cat = agents[0].n_categories();
    if !marginalize_latents {
        let support =
            enumerate_assignments(n_signs, n_cat, agents.len(), dataset.n_objects, cap)?;
        let weights = support
            .iter()
            .map(|a| log_joint(a, dataset, agents, prior))
            .collect::<Result<Vec<_>>>()?;
        return Ok(EnumeratedPosterior {
            support,
            log_probs: LogProbVector::from_log_weights(weights)?,
            marginalized: false,
        });
    }
    let required = (n_signs as u128)
        .checked_pow(dataset.n_objects as u32)
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::SizeCap { required, cap });
    }
    let per_object = (0..dataset.n_objects)
        .map(|d| object_sign_log_weights(dataset, agents, prior, d))
        .collect::<Result<Vec<_>>>()?;
    let mut support = Vec::with_capacity(required as usize);
    let mut weights = Vec::with_capacity(required as usize);
    for idx in 0..required as usize {
        let mut signs = vec![0; dataset.n_objects];
        let mut rest = idx;
        for d in (0..dataset.n_objects).rev() {
            signs[d] = rest % n_signs;
            rest /= n_signs;
        }
        weights.push(signs.iter().enumerate().map(|(d, m)| per_object[d][*m]).sum());
        support.push(WorldAssignment {
            signs,
            latents: Vec::new(),
        });
    }
    Ok(EnumeratedPosterior {
        support,
        log_probs: LogProbVector::from_log_weights(weights)?,
        marginalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgm::Observation;

    fn ds(obs: Vec<Vec<Vec<u32>>>) -> Dataset {
        Dataset::new(
            obs.into_iter()
                .map(|b| b.into_iter().map(|c| Observation::new(c).unwrap()).collect())
                .collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_instance_is_uniform() {
        let d = ds(vec![vec![vec![1, 2], vec![0, 1]], vec![vec![3, 0], vec![1, 1]]]);
        let agents = vec![AgentModel::with_defaults(3, 2, 2).unwrap(); 2];
        let post = enumerate_posterior(&d, &agents, &SignPrior::uniform(3), true, 1000).unwrap();
        for p in post.log_probs.probs() {
            assert!((p - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_cell_hand_posterior() {
        // one agent, C = 1, so only p(z|m) matters: phi rows trivially 1 and
        // the posterior equals the prior
        let d = ds(vec![vec![vec![2, 1]]]);
        let agents = vec![AgentModel::with_defaults(2, 1, 2).unwrap()];
        let prior = SignPrior::new(LogProbVector::from_probs(&[0.3, 0.7]).unwrap());
        let post = enumerate_posterior(&d, &agents, &prior, true, 10).unwrap();
        assert!((post.log_probs.prob(0) - 0.3).abs() < 1e-15);

        // C = 2 with phi counts (3,1) for sign 0 and (1,1) for sign 1,
        // theta rows giving x likelihoods a and b:
        // p(m=0) ∝ 0.5 (0.75 a + 0.25 b), p(m=1) ∝ 0.5 (0.5 a + 0.5 b)
        let mut agent = AgentModel::new(2, 2, 2, 1.0, 1.0).unwrap();
        agent.phi[0].add(0, 2.0);
        agent.theta[0].add(0, 3.0);
        let x = Observation::new(vec![1, 0]).unwrap();
        let a = agent.log_lik_obs(Category(0), &x).unwrap().exp();
        let b = agent.log_lik_obs(Category(1), &x).unwrap().exp();
        assert!((a - 0.8).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        let d = ds(vec![vec![vec![1, 0]]]);
        let post = enumerate_posterior(&d, &[agent], &SignPrior::uniform(2), true, 10).unwrap();
        let w0 = 0.75 * 0.8 + 0.25 * 0.5;
        let w1 = 0.5 * 0.8 + 0.5 * 0.5;
        assert!((post.log_probs.prob(0) - w0 / (w0 + w1)).abs() < 1e-15);
    }

    #[test]
    fn marginalized_and_full_agree_on_signs() {
        let d = ds(vec![
            vec![vec![1, 2, 0], vec![0, 1, 3]],
            vec![vec![3, 0, 1], vec![1, 1, 0]],
        ]);
        let mut a = AgentModel::with_defaults(2, 2, 3).unwrap();
        a.phi[0].add(1, 3.0);
        a.theta[1].add(2, 4.0);
        let mut b = AgentModel::with_defaults(2, 2, 3).unwrap();
        b.phi[1].add(0, 2.0);
        b.theta[0].add(0, 5.0);
        let agents = vec![a, b];
        let prior = SignPrior::new(LogProbVector::from_probs(&[0.4, 0.6]).unwrap());
        let marg = enumerate_posterior(&d, &agents, &prior, true, 1 << 20).unwrap();
        let full = enumerate_posterior(&d, &agents, &prior, false, 1 << 20).unwrap();
        let (x, y) = (marg.sign_tuple_marginal(2), full.sign_tuple_marginal(2));
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10);
        }
        // the reversed object order enumerates the same posterior
        let rev = enumerate_posterior(&d.reordered(&[1, 0]), &agents, &prior, true, 1 << 20)
            .unwrap()
            .sign_tuple_marginal(2);
        assert!((x[1] - rev[2]).abs() < 1e-12 && (x[2] - rev[1]).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let d = ds(vec![vec![vec![1], vec![1], vec![1]]]);
        let agents = vec![AgentModel::with_defaults(3, 1, 1).unwrap()];
        let err = enumerate_posterior(&d, &agents, &SignPrior::uniform(3), true, 26).unwrap_err();
        assert!(matches!(err, Error::SizeCap { required: 27, cap: 26 }));
    }
}
