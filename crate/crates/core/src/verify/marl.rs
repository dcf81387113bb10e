use serde::{Deserialize, Serialize};

use super::instances::random_probs;
use super::kernel::{check_detailed_balance, check_stationary};
use crate::error::Result;
use crate::marl::{
    message_kernel, message_target, plan_and_act, soft_value_iteration, AgentMdp,
    GroupRewardTiming, MessageMdp, SoftPolicy, SparseRow, Trajectory,
};
use crate::prob::{LogProbVector, RandomSource, RngStream};

/// A message MDP with one rollout and group-reward tables held fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenMarlInstance {
    pub mdp: MessageMdp,
    pub trajectory: Trajectory,
    pub group_approx: Vec<Vec<Vec<f64>>>,
}

fn dense_row(rng: &mut RngStream, n: usize) -> SparseRow {
    random_probs(rng, n).into_iter().enumerate().collect()
}

fn random_agent(rng: &mut RngStream, ns: usize, na: usize, vocab: usize) -> AgentMdp {
    AgentMdp {
        n_states: ns,
        n_actions: na,
        initial: (0..vocab).map(|_| dense_row(rng, ns)).collect(),
        transitions: (0..ns)
            .map(|_| {
                (0..na)
                    .map(|_| (0..vocab).map(|_| dense_row(rng, ns)).collect())
                    .collect()
            })
            .collect(),
        reward: (0..ns)
            .map(|_| (0..na).map(|_| rng.uniform() - 0.5).collect())
            .collect(),
    }
}

/// Random dense message MDP; every transition row has full support.
pub fn random_message_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    vocab: usize,
    horizon: usize,
) -> Result<MessageMdp> {
    let mut rng = RandomSource::new(seed).stream(&[0x3A]);
    let agents = vec![
        random_agent(&mut rng, n_states, n_actions, vocab),
        random_agent(&mut rng, n_states, n_actions, vocab),
    ];
    let cells = (n_states * n_actions).pow(2);
    let mdp = MessageMdp {
        horizon,
        vocab_size: vocab,
        message_prior: LogProbVector::from_probs(&random_probs(&mut rng, vocab))?,
        agents,
        group_reward: (0..cells).map(|_| rng.uniform()).collect(),
        group_timing: GroupRewardTiming::EveryStep,
        exogenous_start: None,
    };
    mdp.validate()?;
    Ok(mdp)
}

/// Random MDP, random messages and tables, and one rollout of the uniform
/// policy.
pub fn random_frozen_marl_instance(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    vocab: usize,
    horizon: usize,
) -> Result<FrozenMarlInstance> {
    let mdp = random_message_mdp(seed, n_states, n_actions, vocab, horizon)?;
    let source = RandomSource::new(seed);
    let mut rng = source.stream(&[0x3B]);
    let messages: Vec<usize> = (0..horizon).map(|_| rng.index(vocab)).collect();
    let group_approx: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..n_actions).map(|_| rng.uniform()).collect())
                .collect()
        })
        .collect();
    let flat = vec![vec![0.0; n_actions]; n_states];
    let policies = mdp
        .agents
        .iter()
        .map(|a| soft_value_iteration(a, &messages, &flat))
        .collect::<Result<Vec<SoftPolicy>>>()?;
    let mut rngs = [source.stream(&[0x3C, 0]), source.stream(&[0x3C, 1])];
    let trajectory = plan_and_act(&mdp, &policies, &messages, &[None, None], &mut rngs)?;
    Ok(FrozenMarlInstance {
        mdp,
        trajectory,
        group_approx,
    })
}

/// Worst-case figures of the per-timestep message kernels of an instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageKernelReport {
    pub detailed_balance: f64,
    pub tv_to_target: f64,
    pub method_gap: f64,
}

/// Detailed balance of both single-direction kernels and the stationary
/// distribution of their composition, at every timestep.
pub fn check_message_kernels(inst: &FrozenMarlInstance) -> Result<MessageKernelReport> {
    let mut rep = MessageKernelReport {
        detailed_balance: 0.0,
        tv_to_target: 0.0,
        method_gap: 0.0,
    };
    let (mdp, tr, g) = (&inst.mdp, &inst.trajectory, &inst.group_approx);
    for t in 0..mdp.horizon {
        let target = message_target(mdp, tr, t, g)?;
        let ab = message_kernel(mdp, tr, t, 0, 1, g)?;
        let ba = message_kernel(mdp, tr, t, 1, 0, g)?;
        for k in [&ab, &ba] {
            rep.detailed_balance = rep.detailed_balance.max(check_detailed_balance(k, &target)?);
        }
        let check = check_stationary(&ab.then(&ba)?, &target)?;
        rep.tv_to_target = rep.tv_to_target.max(check.tv_to_target);
        rep.method_gap = rep.method_gap.max(check.method_gap);
    }
    Ok(rep)
}
