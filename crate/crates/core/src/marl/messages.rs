use serde::{Deserialize, Serialize};

use super::mdp::MessageMdp;
use super::planning::Trajectory;
use crate::error::Result;
use crate::prob::{sample_categorical, LogProbVector, RngStream};
use crate::verify::KernelMatrix;

/// `log p(z^k_t | z^k_{t-1}, a^k_{t-1}, m)` along a fixed trajectory.
pub fn state_log_lik(mdp: &MessageMdp, traj: &Trajectory, k: usize, t: usize, m: usize) -> f64 {
    let prev = (t > 0).then(|| (traj.states[k][t - 1], traj.actions[k][t - 1]));
    mdp.agents[k].state_prob(prev, m, traj.states[k][t]).ln()
}

/// Agent `k`'s local group-optimality log factor `r̂^AB_k(z_t, a_t)`.
fn group_log_factor(group_approx: &[Vec<Vec<f64>>], traj: &Trajectory, k: usize, t: usize) -> f64 {
    group_approx[k][traj.states[k][t]][traj.actions[k][t]]
}

/// Speaker's proposal for `m_t`:
/// `∝ p(m) p(z^Sp_t | z^Sp_{t-1}, a^Sp_{t-1}, m) exp(r̂^AB_Sp(z^Sp_t, a^Sp_t))`.
pub fn message_proposal(
    mdp: &MessageMdp,
    traj: &Trajectory,
    t: usize,
    speaker: usize,
    group_approx: &[Vec<Vec<f64>>],
) -> Result<LogProbVector> {
    let g = group_log_factor(group_approx, traj, speaker, t);
    let w = (0..mdp.vocab_size)
        .map(|m| mdp.message_prior.values()[m] + state_log_lik(mdp, traj, speaker, t, m) + g)
        .collect();
    LogProbVector::from_log_weights(w)
}

/// Listener's acceptance probability, the ratio of its own
/// message-conditioned state likelihoods (its group factor cancels).
pub fn message_acceptance(
    mdp: &MessageMdp,
    traj: &Trajectory,
    t: usize,
    listener: usize,
    proposed: usize,
    current: usize,
    group_approx: &[Vec<Vec<f64>>],
) -> f64 {
    if proposed == current {
        return 1.0;
    }
    let g = group_log_factor(group_approx, traj, listener, t);
    let lp = state_log_lik(mdp, traj, listener, t, proposed) + g;
    let lc = state_log_lik(mdp, traj, listener, t, current) + g;
    if lc == f64::NEG_INFINITY {
        return 1.0;
    }
    (lp - lc).exp().min(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageStep {
    pub messages: Vec<usize>,
    pub proposals: usize,
    pub accepted: usize,
}

/// Per timestep, agent 0 names to agent 1 and then agent 1 to agent 0; each
/// accepted proposal replaces `m_t`.
pub fn message_mh_step(
    mdp: &MessageMdp,
    traj: &Trajectory,
    messages: &[usize],
    group_approx: &[Vec<Vec<f64>>],
    rng: &mut RngStream,
) -> Result<MessageStep> {
    let mut out = messages.to_vec();
    let mut accepted = 0;
    let mut proposals = 0;
    for t in 0..mdp.horizon {
        for (sp, li) in [(0, 1), (1, 0)] {
            let q = message_proposal(mdp, traj, t, sp, group_approx)?;
            let proposed = sample_categorical(&q, rng)?;
            let gamma = message_acceptance(mdp, traj, t, li, proposed, out[t], group_approx);
            proposals += 1;
            if rng.uniform() < gamma {
                out[t] = proposed;
                accepted += 1;
            }
        }
    }
    Ok(MessageStep {
        messages: out,
        proposals,
        accepted,
    })
}

/// Exact `M x M` kernel of one exchange about `m_t` with the trajectory fixed.
pub fn message_kernel(
    mdp: &MessageMdp,
    traj: &Trajectory,
    t: usize,
    speaker: usize,
    listener: usize,
    group_approx: &[Vec<Vec<f64>>],
) -> Result<KernelMatrix> {
    let n = mdp.vocab_size;
    let q = message_proposal(mdp, traj, t, speaker, group_approx)?.probs();
    let rows = (0..n)
        .map(|current| {
            let mut row = vec![0.0; n];
            row[current] = q[current];
            for proposed in (0..n).filter(|p| *p != current) {
                let g = message_acceptance(mdp, traj, t, listener, proposed, current, group_approx);
                row[proposed] = q[proposed] * g;
                row[current] += q[proposed] * (1.0 - g);
            }
            row
        })
        .collect();
    KernelMatrix::new(rows, format!("message {speaker}->{listener} t={t}"))
}

/// `∝ p(m) Π_k p(z^k_t | z^k_{t-1}, a^k_{t-1}, m) exp(r̂^AB_k(z^k_t, a^k_t))`,
/// read directly off the transition tables.
pub fn message_target(
    mdp: &MessageMdp,
    traj: &Trajectory,
    t: usize,
    group_approx: &[Vec<Vec<f64>>],
) -> Result<LogProbVector> {
    let w = (0..mdp.vocab_size)
        .map(|m| {
            let mut lw = mdp.message_prior.values()[m];
            for (k, agent) in mdp.agents.iter().enumerate() {
                let z = traj.states[k][t];
                let row = if t == 0 {
                    &agent.initial[m]
                } else {
                    &agent.transitions[traj.states[k][t - 1]][traj.actions[k][t - 1]][m]
                };
                let p: f64 = row.iter().filter(|(i, _)| *i == z).map(|(_, p)| p).sum();
                lw += p.ln() + group_approx[k][z][traj.actions[k][t]];
            }
            lw
        })
        .collect();
    LogProbVector::from_log_weights(w)
}
