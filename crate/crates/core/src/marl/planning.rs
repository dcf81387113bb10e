use serde::{Deserialize, Serialize};

use super::mdp::{AgentMdp, MessageMdp};
use crate::error::{contract, Error, Result};
use crate::prob::{logsumexp_unchecked, sample_categorical, LogProbVector, RngStream};

/// Maps rewards to `log p(o = 1 | z, a) = scale (r - max r)`, so that every
/// optimality probability is at most one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityModel {
    pub scale: f64,
}

impl Default for OptimalityModel {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl OptimalityModel {
    pub fn log_optimality(&self, reward: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let max = reward
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        reward
            .iter()
            .map(|row| row.iter().map(|r| self.scale * (r - max)).collect())
            .collect()
    }
}

/// `r^k + r̂^AB_k`.
pub fn effective_reward(agent: &AgentMdp, group_approx: &[Vec<f64>]) -> Vec<Vec<f64>> {
    agent
        .reward
        .iter()
        .zip(group_approx)
        .map(|(r, g)| r.iter().zip(g).map(|(a, b)| a + b).collect())
        .collect()
}

/// Output of soft value iteration; index `t` is 0-based and `v[T] = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicy {
    pub v: Vec<Vec<f64>>,
    pub q: Vec<Vec<Vec<f64>>>,
    pub log_pi: Vec<Vec<Vec<f64>>>,
}

impl SoftPolicy {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }
}

/// Backward soft Bellman recursion with a uniform action prior:
///
/// ```text
/// Q_t(z,a) = r(z,a) + Σ_z' p(z' | z, a, m_{t+1}) V_{t+1}(z')
/// V_t(z)   = log (1/|A|) Σ_a exp Q_t(z,a)
/// ```
///
/// `log_opt` plays the role of `r`; `messages[t]` is `m_{t+1}` in 1-based
/// notation.
pub fn soft_value_iteration(
    agent: &AgentMdp,
    messages: &[usize],
    log_opt: &[Vec<f64>],
) -> Result<SoftPolicy> {
    let horizon = messages.len();
    if horizon == 0 {
        return Err(contract("message sequence must be non-empty"));
    }
    let (ns, na) = (agent.n_states, agent.n_actions);
    if log_opt.len() != ns || log_opt.iter().any(|r| r.len() != na) {
        return Err(contract("reward table shape differs from the agent's MDP"));
    }
    let log_na = (na as f64).ln();
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut log_pi = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in (0..horizon).rev() {
        for z in 0..ns {
            for a in 0..na {
                let next = if t + 1 < horizon {
                    agent.transitions[z][a][messages[t + 1]]
                        .iter()
                        .map(|(zn, p)| p * v[t + 1][*zn])
                        .sum()
                } else {
                    0.0
                };
                q[t][z][a] = log_opt[z][a] + next;
            }
            let vz = logsumexp_unchecked(&q[t][z]) - log_na;
            if !vz.is_finite() {
                return Err(Error::NonFinite(format!("V at t={t}, z={z}")));
            }
            v[t][z] = vz;
            for a in 0..na {
                log_pi[t][z][a] = q[t][z][a] - vz - log_na;
            }
        }
    }
    Ok(SoftPolicy { v, q, log_pi })
}

/// Largest violation of the soft Bellman equations, recomputed from scratch.
pub fn bellman_residual(
    agent: &AgentMdp,
    messages: &[usize],
    log_opt: &[Vec<f64>],
    policy: &SoftPolicy,
) -> f64 {
    let horizon = messages.len();
    let na = agent.n_actions as f64;
    let mut worst = 0.0f64;
    for t in 0..horizon {
        for z in 0..agent.n_states {
            let mut total = 0.0;
            for a in 0..agent.n_actions {
                let mut expected = 0.0;
                if t + 1 < horizon {
                    for (zn, p) in &agent.transitions[z][a][messages[t + 1]] {
                        expected += p * policy.v[t + 1][*zn];
                    }
                }
                worst = worst.max((policy.q[t][z][a] - log_opt[z][a] - expected).abs());
                total += policy.q[t][z][a].exp() / na;
            }
            worst = worst.max((policy.v[t][z] - total.ln()).abs());
        }
    }
    worst
}

/// One episode of both agents under a shared message sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `states[k][t]`.
    pub states: Vec<Vec<usize>>,
    pub actions: Vec<Vec<usize>>,
    pub messages: Vec<usize>,
    pub rewards: Vec<Vec<f64>>,
    /// `r^AB` paid at each step.
    pub group_rewards: Vec<f64>,
}

impl Trajectory {
    pub fn group_return(&self) -> f64 {
        self.group_rewards.iter().sum()
    }
}

/// Rolls out each agent's policy independently. An agent with a fixed start
/// begins there, otherwise at `z_1 ~ p(z_1 | m_1)`.
pub fn plan_and_act(
    mdp: &MessageMdp,
    policies: &[SoftPolicy],
    messages: &[usize],
    starts: &[Option<usize>],
    rngs: &mut [RngStream],
) -> Result<Trajectory> {
    let horizon = mdp.horizon;
    if messages.len() != horizon || policies.len() != 2 || starts.len() != 2 || rngs.len() != 2 {
        return Err(contract("rollout needs two agents and a full message sequence"));
    }
    let mut states = (0..2).map(|_| Vec::with_capacity(horizon)).collect::<Vec<Vec<_>>>();
    let mut actions = (0..2).map(|_| Vec::with_capacity(horizon)).collect::<Vec<Vec<_>>>();
    let mut rewards = (0..2).map(|_| Vec::with_capacity(horizon)).collect::<Vec<Vec<_>>>();
    for k in 0..2 {
        let agent = &mdp.agents[k];
        let rng = &mut rngs[k];
        let mut z = match starts[k] {
            Some(s) => s,
            None => draw_sparse(&agent.initial[messages[0]], rng)?,
        };
        for t in 0..horizon {
            let pi = LogProbVector::new(policies[k].log_pi[t][z].clone())?;
            let a = sample_categorical(&pi, rng)?;
            states[k].push(z);
            actions[k].push(a);
            rewards[k].push(agent.reward[z][a]);
            if t + 1 < horizon {
                z = draw_sparse(&agent.transitions[z][a][messages[t + 1]], rng)?;
            }
        }
    }
    let group_rewards = (0..horizon)
        .map(|t| {
            mdp.group_reward_step(t, states[0][t], actions[0][t], states[1][t], actions[1][t])
        })
        .collect();
    Ok(Trajectory {
        states,
        actions,
        messages: messages.to_vec(),
        rewards,
        group_rewards,
    })
}

fn draw_sparse(row: &[(usize, f64)], rng: &mut RngStream) -> Result<usize> {
    if let [(only, _)] = row {
        // a point mass still consumes its draw, keeping streams aligned
        rng.uniform();
        return Ok(*only);
    }
    let u = rng.uniform();
    let mut c = 0.0;
    for (i, p) in row {
        c += p;
        if u < c {
            return Ok(*i);
        }
    }
    row.iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|(i, _)| *i)
        .ok_or_else(|| contract("empty transition row"))
}

/// State marginals `mu_t(z)` of the policy chain, by forward propagation.
pub fn state_marginals(
    agent: &AgentMdp,
    policy: &SoftPolicy,
    messages: &[usize],
    start: &[f64],
) -> Vec<Vec<f64>> {
    let horizon = messages.len();
    let mut mu = vec![start.to_vec()];
    for t in 0..horizon - 1 {
        let mut next = vec![0.0; agent.n_states];
        for (z, w) in mu[t].iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (a, lp) in policy.log_pi[t][z].iter().enumerate() {
                for (zn, p) in &agent.transitions[z][a][messages[t + 1]] {
                    next[*zn] += w * lp.exp() * p;
                }
            }
        }
        mu.push(next);
    }
    mu
}

/// Moves each visited cell of `table` towards the group reward realized at
/// that step: `r̂ <- (1 - eta) r̂ + eta r^AB`. Unvisited cells are untouched.
pub fn update_group_reward_approx(
    table: &mut [Vec<f64>],
    agent: usize,
    batch: &[Trajectory],
    eta: f64,
) -> Result<()> {
    if batch.is_empty() {
        return Err(contract("empty trajectory batch"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(contract("EMA rate must lie in [0, 1]"));
    }
    for tr in batch {
        for (t, r) in tr.group_rewards.iter().enumerate() {
            let cell = &mut table[tr.states[agent][t]][tr.actions[agent][t]];
            *cell += eta * (r - *cell);
        }
    }
    Ok(())
}
