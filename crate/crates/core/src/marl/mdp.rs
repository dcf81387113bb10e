use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::prob::LogProbVector;

/// Sparse distribution: `(next state, probability)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

const ROW_TOL: f64 = 1e-12;

/// One agent's message-conditioned world model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `initial[m]` is `p(z_1 | m_1 = m)`.
    pub initial: Vec<SparseRow>,
    /// `transitions[z][a][m]` is `p(z' | z, a, m)`.
    pub transitions: Vec<Vec<Vec<SparseRow>>>,
    /// Individual reward `r^k(z, a)`.
    pub reward: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GroupRewardTiming {
    /// Paid only at the last step.
    #[default]
    FinalStep,
    EveryStep,
}

/// Per-episode start state of one agent, drawn uniformly from a list; the
/// agent's initial model is then only used for message likelihoods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExogenousStart {
    pub agent: usize,
    pub states: Vec<usize>,
}

/// Two agents, horizon `T`, vocabulary `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageMdp {
    pub horizon: usize,
    pub vocab_size: usize,
    pub message_prior: LogProbVector,
    pub agents: Vec<AgentMdp>,
    /// Row-major `r^AB(z^A, a^A, z^B, a^B)`.
    pub group_reward: Vec<f64>,
    #[serde(default)]
    pub group_timing: GroupRewardTiming,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exogenous_start: Option<ExogenousStart>,
}

fn check_row(row: &SparseRow, n: usize, what: &str) -> Result<()> {
    let mut s = 0.0;
    for (i, p) in row {
        if *i >= n || !(*p >= 0.0) || !p.is_finite() {
            return Err(config(format!("{what}: bad entry ({i}, {p})")));
        }
        s += p;
    }
    if (s - 1.0).abs() > ROW_TOL {
        return Err(config(format!("{what}: row sums to {s}")));
    }
    Ok(())
}

impl AgentMdp {
    pub fn validate(&self, vocab: usize) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(config("agent needs at least one state and action"));
        }
        if self.initial.len() != vocab {
            return Err(config("one initial distribution per message is required"));
        }
        for (m, row) in self.initial.iter().enumerate() {
            check_row(row, self.n_states, &format!("initial[{m}]"))?;
        }
        if self.transitions.len() != self.n_states || self.reward.len() != self.n_states {
            return Err(config("transition or reward table has wrong state count"));
        }
        for (z, by_action) in self.transitions.iter().enumerate() {
            if by_action.len() != self.n_actions || self.reward[z].len() != self.n_actions {
                return Err(config("transition or reward table has wrong action count"));
            }
            for (a, by_msg) in by_action.iter().enumerate() {
                if by_msg.len() != vocab {
                    return Err(config("transition table has wrong message count"));
                }
                for (m, row) in by_msg.iter().enumerate() {
                    check_row(row, self.n_states, &format!("transition[{z}][{a}][{m}]"))?;
                }
            }
            if self.reward[z].iter().any(|r| !r.is_finite()) {
                return Err(config("rewards must be finite"));
            }
        }
        Ok(())
    }

    /// `p(z_t | z_{t-1}, a_{t-1}, m_t)`, or `p(z_1 | m_1)` when `prev` is
    /// `None`.
    pub fn state_prob(&self, prev: Option<(usize, usize)>, m: usize, z: usize) -> f64 {
        let row = match prev {
            None => &self.initial[m],
            Some((zp, ap)) => &self.transitions[zp][ap][m],
        };
        row.iter().filter(|(i, _)| *i == z).map(|(_, p)| p).sum()
    }
}

impl MessageMdp {
    pub fn validate(&self) -> Result<()> {
        if self.agents.len() != 2 {
            return Err(config("the message MDP has exactly two agents"));
        }
        if self.horizon == 0 || self.vocab_size == 0 {
            return Err(config("horizon and vocab_size must be positive"));
        }
        if self.message_prior.len() != self.vocab_size {
            return Err(config("message prior length differs from vocab_size"));
        }
        for a in &self.agents {
            a.validate(self.vocab_size)?;
        }
        let (a, b) = (&self.agents[0], &self.agents[1]);
        if self.group_reward.len() != a.n_states * a.n_actions * b.n_states * b.n_actions {
            return Err(config("group reward table has the wrong size"));
        }
        if self.group_reward.iter().any(|r| !r.is_finite()) {
            return Err(config("group rewards must be finite"));
        }
        if let Some(ex) = &self.exogenous_start {
            if ex.agent >= 2 || ex.states.is_empty() {
                return Err(config("exogenous start needs agent 0 or 1 and some states"));
            }
            if ex.states.iter().any(|s| *s >= self.agents[ex.agent].n_states) {
                return Err(config("exogenous start state out of range"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mdp: Self = serde_json::from_str(text)?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn group_reward_at(&self, za: usize, aa: usize, zb: usize, ab: usize) -> f64 {
        let (a, b) = (&self.agents[0], &self.agents[1]);
        self.group_reward[((za * a.n_actions + aa) * b.n_states + zb) * b.n_actions + ab]
    }

    /// Group reward paid at step `t` (0-based) of a horizon-`T` episode.
    pub fn group_reward_step(&self, t: usize, za: usize, aa: usize, zb: usize, ab: usize) -> f64 {
        match self.group_timing {
            GroupRewardTiming::FinalStep if t + 1 != self.horizon => 0.0,
            _ => self.group_reward_at(za, aa, zb, ab),
        }
    }
}

/// Parameters of the meet-at-goal benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeetAtGoal {
    pub grid: usize,
    pub n_goals: usize,
    pub vocab_size: usize,
    pub horizon: usize,
    /// Noise of the speaker's model `p(goal | m)`.
    pub speaker_noise: f64,
    /// Noise of the listener's belief `p(b | m)`.
    pub listener_noise: f64,
    pub step_cost: f64,
}

impl Default for MeetAtGoal {
    fn default() -> Self {
        Self {
            grid: 5,
            n_goals: 3,
            vocab_size: 3,
            horizon: 8,
            speaker_noise: 0.05,
            listener_noise: 0.2,
            step_cost: 0.01,
        }
    }
}

/// Actions: up, down, left, right, stay.
pub const GRID_ACTIONS: usize = 5;

impl MeetAtGoal {
    pub fn center(&self) -> usize {
        let c = self.grid / 2;
        c * self.grid + c
    }

    /// Goal cells, two steps from the centre first, then the corners.
    pub fn goal_cells(&self) -> Vec<usize> {
        let (g, c) = (self.grid as i64, (self.grid / 2) as i64);
        let candidates = [
            (c - 2, c),
            (c, c + 2),
            (c + 2, c),
            (c, c - 2),
            (0, 0),
            (0, g - 1),
            (g - 1, g - 1),
            (g - 1, 0),
        ];
        candidates
            .iter()
            .filter(|(r, col)| *r >= 0 && *col >= 0 && *r < g && *col < g)
            .map(|(r, col)| (r * g + col) as usize)
            .take(self.n_goals)
            .collect()
    }

    pub fn step(&self, cell: usize, action: usize) -> usize {
        let (r, c) = (cell / self.grid, cell % self.grid);
        let (r, c) = match action {
            0 if r > 0 => (r - 1, c),
            1 if r + 1 < self.grid => (r + 1, c),
            2 if c > 0 => (r, c - 1),
            3 if c + 1 < self.grid => (r, c + 1),
            _ => (r, c),
        };
        r * self.grid + c
    }

    /// `p(g | m)`: a noisy identity for `m < n_goals`, uniform otherwise.
    fn goal_given_message(&self, noise: f64, m: usize, g: usize) -> f64 {
        let n = self.n_goals as f64;
        if m < self.n_goals {
            (1.0 - noise) * f64::from(u8::from(g == m)) + noise / n
        } else {
            1.0 / n
        }
    }

    /// Builds the MDP. Both agents' states are `(goal label, cell)`; agent 0
    /// starts at the true goal, agent 1 draws its label from the first
    /// message.
    pub fn build(&self) -> Result<MessageMdp> {
        if self.grid < 3 || self.n_goals == 0 || self.vocab_size == 0 || self.horizon == 0 {
            return Err(config("meet-at-goal needs grid >= 3 and positive sizes"));
        }
        let goals = self.goal_cells();
        if goals.len() != self.n_goals {
            return Err(config("grid too small for the requested number of goals"));
        }
        let cells = self.grid * self.grid;
        let n_states = self.n_goals * cells;
        let agent = |noise: f64| AgentMdp {
            n_states,
            n_actions: GRID_ACTIONS,
            initial: (0..self.vocab_size)
                .map(|m| {
                    (0..self.n_goals)
                        .map(|g| (g * cells + self.center(), self.goal_given_message(noise, m, g)))
                        .filter(|(_, p)| *p > 0.0)
                        .collect()
                })
                .collect(),
            transitions: (0..n_states)
                .map(|z| {
                    (0..GRID_ACTIONS)
                        .map(|a| {
                            let next = (z / cells) * cells + self.step(z % cells, a);
                            vec![vec![(next, 1.0)]; self.vocab_size]
                        })
                        .collect()
                })
                .collect(),
            reward: vec![vec![-self.step_cost; GRID_ACTIONS]; n_states],
        };
        let mut group_reward = vec![0.0; (n_states * GRID_ACTIONS).pow(2)];
        for g in 0..self.n_goals {
            let za = g * cells + goals[g];
            for b in 0..self.n_goals {
                let zb = b * cells + goals[g];
                for aa in 0..GRID_ACTIONS {
                    for ab in 0..GRID_ACTIONS {
                        let i = ((za * GRID_ACTIONS + aa) * n_states + zb) * GRID_ACTIONS + ab;
                        group_reward[i] = 1.0;
                    }
                }
            }
        }
        let mdp = MessageMdp {
            horizon: self.horizon,
            vocab_size: self.vocab_size,
            message_prior: LogProbVector::uniform(self.vocab_size),
            agents: vec![agent(self.speaker_noise), agent(self.listener_noise)],
            group_reward,
            group_timing: GroupRewardTiming::FinalStep,
            exogenous_start: Some(ExogenousStart {
                agent: 0,
                states: (0..self.n_goals).map(|g| g * cells + self.center()).collect(),
            }),
        };
        mdp.validate()?;
        Ok(mdp)
    }
}
