//! Two-agent control as inference with a shared message sequence.
//!
//! Each agent plans with soft value iteration against its own reward plus a
//! locally learned approximation `r̂^AB_k` of the group reward. Messages act
//! only through the agents' message-conditioned state models, and are
//! inferred per timestep by the same speaker-proposes, listener-accepts
//! exchange as the naming game.

mod mdp;
mod messages;
mod planning;
mod run;

pub use mdp::{
    AgentMdp, ExogenousStart, GroupRewardTiming, MeetAtGoal, MessageMdp, SparseRow, GRID_ACTIONS,
};
pub use messages::{
    message_acceptance, message_kernel, message_mh_step, message_proposal, message_target,
    state_log_lik, MessageStep,
};
pub use planning::{
    bellman_residual, effective_reward, plan_and_act, soft_value_iteration, state_marginals,
    update_group_reward_approx, OptimalityModel, SoftPolicy, Trajectory,
};
pub use run::{run_marl, sample_messages, IterationRecord, MarlConfig, MarlRun, DEFAULT_EMA_RATE};
