use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mdp::MessageMdp;
use super::messages::message_mh_step;
use super::planning::{
    effective_reward, plan_and_act, soft_value_iteration, update_group_reward_approx,
    OptimalityModel, SoftPolicy, Trajectory,
};
use crate::error::{config, Result};
use crate::prob::{sample_categorical, LogProbVector, RandomSource};

const TAG_EPISODE: u64 = 11;
const TAG_ROLLOUT: u64 = 12;
const TAG_MESSAGES: u64 = 13;

pub const DEFAULT_EMA_RATE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarlConfig {
    pub n_iterations: usize,
    /// Planning/communication alternations per episode before the final
    /// rollout.
    #[serde(default = "default_comm_steps")]
    pub comm_steps: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub optimality: OptimalityModel,
    pub seed: u64,
}

fn default_comm_steps() -> usize {
    4
}

fn default_eta() -> f64 {
    DEFAULT_EMA_RATE
}

impl MarlConfig {
    pub fn new(n_iterations: usize, seed: u64) -> Self {
        Self {
            n_iterations,
            comm_steps: default_comm_steps(),
            eta: DEFAULT_EMA_RATE,
            optimality: OptimalityModel::default(),
            seed,
        }
    }

    /// Settings used for the meet-at-goal benchmark. The optimality scale is
    /// large because `r̂^AB` starts at zero and the first successes move it by
    /// only `eta`.
    pub fn meet_at_goal(seed: u64) -> Self {
        Self {
            n_iterations: 600,
            comm_steps: 16,
            eta: DEFAULT_EMA_RATE,
            optimality: OptimalityModel { scale: 1000.0 },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(config("eta must lie in [0, 1]"));
        }
        if !(self.optimality.scale > 0.0) || !self.optimality.scale.is_finite() {
            return Err(config("optimality scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Group return of the episode's final rollout.
    pub group_return: f64,
    /// Entropy (nats) of the empirical distribution of the final messages.
    pub message_entropy: f64,
    pub acceptance_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarlRun {
    pub config: MarlConfig,
    pub curve: Vec<IterationRecord>,
    /// Final `r̂^AB_k` tables.
    pub group_approx: Vec<Vec<Vec<f64>>>,
}

impl MarlRun {
    pub fn mean_group_return(&self) -> f64 {
        if self.curve.is_empty() {
            return 0.0;
        }
        self.curve.iter().map(|r| r.group_return).sum::<f64>() / self.curve.len() as f64
    }

    pub fn curve_csv(&self, provenance: &[(&str, String)]) -> String {
        let mut s = String::new();
        for (k, v) in provenance {
            writeln!(s, "# {k}={v}").unwrap();
        }
        s.push_str("iteration,group_return,message_entropy,acceptance_rate\n");
        for r in &self.curve {
            let acc = r.acceptance_rate.map_or(String::new(), |v| v.to_string());
            writeln!(
                s,
                "{},{},{},{}",
                r.iteration, r.group_return, r.message_entropy, acc
            )
            .unwrap();
        }
        s
    }
}

fn plan(
    mdp: &MessageMdp,
    messages: &[usize],
    group_approx: &[Vec<Vec<f64>>],
    opt: OptimalityModel,
) -> Result<Vec<SoftPolicy>> {
    mdp.agents
        .iter()
        .zip(group_approx)
        .map(|(agent, g)| {
            let log_opt = opt.log_optimality(&effective_reward(agent, g));
            soft_value_iteration(agent, messages, &log_opt)
        })
        .collect()
}

fn empirical_entropy(messages: &[usize], vocab: usize) -> f64 {
    let mut counts = vec![0.0; vocab];
    for m in messages {
        counts[*m] += 1.0;
    }
    let n = messages.len() as f64;
    counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| -(c / n) * (c / n).ln())
        .sum()
}

/// Runs `n_iterations` episodes. Each episode draws its context and an
/// initial message sequence from the prior, then alternates a planning pass
/// and rollout, an update of the group-reward approximations, and a message
/// MH step `comm_steps` times, and ends with a final planned rollout.
pub fn run_marl(cfg: &MarlConfig, mdp: &MessageMdp) -> Result<MarlRun> {
    cfg.validate()?;
    mdp.validate()?;
    let source = RandomSource::new(cfg.seed);
    let mut group_approx: Vec<Vec<Vec<f64>>> = mdp
        .agents
        .iter()
        .map(|a| vec![vec![0.0; a.n_actions]; a.n_states])
        .collect();
    let mut curve = Vec::with_capacity(cfg.n_iterations);
    let identity: Vec<usize> = (0..mdp.vocab_size).collect();
    for it in 0..cfg.n_iterations {
        let mut ctx = source.stream(&[TAG_EPISODE, it as u64]);
        let mut starts = [None, None];
        if let Some(ex) = &mdp.exogenous_start {
            starts[ex.agent] = Some(ex.states[ctx.index(ex.states.len())]);
        }
        let mut messages = (0..mdp.horizon)
            .map(|_| {
                crate::prob::sample_categorical_ordered(&mdp.message_prior, &identity, &mut ctx)
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut proposals, mut accepted) = (0, 0);
        let mut last: Option<Trajectory> = None;
        for j in 0..=cfg.comm_steps {
            let policies = plan(mdp, &messages, &group_approx, cfg.optimality)?;
            let mut rngs = [
                source.stream(&[TAG_ROLLOUT, it as u64, j as u64, 0]),
                source.stream(&[TAG_ROLLOUT, it as u64, j as u64, 1]),
            ];
            let traj = plan_and_act(mdp, &policies, &messages, &starts, &mut rngs)?;
            for (k, table) in group_approx.iter_mut().enumerate() {
                update_group_reward_approx(table, k, std::slice::from_ref(&traj), cfg.eta)?;
            }
            if j < cfg.comm_steps {
                let mut rng = source.stream(&[TAG_MESSAGES, it as u64, j as u64]);
                let step = message_mh_step(mdp, &traj, &messages, &group_approx, &mut rng)?;
                proposals += step.proposals;
                accepted += step.accepted;
                messages = step.messages;
            }
            last = Some(traj);
        }
        let traj = last.expect("at least one rollout per episode");
        curve.push(IterationRecord {
            iteration: it,
            group_return: traj.group_return(),
            message_entropy: empirical_entropy(&messages, mdp.vocab_size),
            acceptance_rate: (proposals > 0).then(|| accepted as f64 / proposals as f64),
        });
    }
    Ok(MarlRun {
        config: cfg.clone(),
        curve,
        group_approx,
    })
}

/// Samples a message sequence i.i.d. from the prior.
pub fn sample_messages(
    prior: &LogProbVector,
    horizon: usize,
    rng: &mut crate::prob::RngStream,
) -> Result<Vec<usize>> {
    (0..horizon).map(|_| sample_categorical(prior, rng)).collect()
}
