//! Exact oracles: posterior enumeration, kernel construction, stationary
//! analysis and agreement metrics.

mod agreement;
mod battery;
mod instances;
mod kernel;
mod marl;
mod naming;
mod posterior;
mod temporal;

pub use agreement::{adjusted_rand_index, agreement_rate, cohens_kappa};
pub use battery::{
    cfe_reports, enumeration_reports, kl_monotonicity_reports, marl_reports, mutation_reports,
    naming_battery_instances, naming_kernel_reports, run_battery, signaling_reports, OracleReport,
    KERNEL_TOL, MUTATION_THRESHOLD, REPORT_SCHEMA_VERSION,
};
pub use instances::{instance_hash, random_frozen_instance, FrozenInstance};
pub use kernel::{
    check_detailed_balance, check_stationary, kl_trajectory, stationary_power, stationary_solve,
    KernelMatrix, StationaryCheck, KL_MONOTONE_TOL, POWER_ITERATION_TOL, ROW_SUM_TOL,
};
pub use marl::{
    check_message_kernels, random_frozen_marl_instance, random_message_mdp, FrozenMarlInstance,
    MessageKernelReport,
};
pub use naming::{
    collapsed_latent_log_joint, compose, cycle_kernel, exchange_kernel, exchange_target,
    perception_exchange_kernel, perception_site_kernels,
};
pub use posterior::{
    enumerate_posterior, object_sign_log_weights, object_sign_posterior, EnumeratedPosterior,
};
pub use temporal::{
    path_enumeration_log_lik, path_posterior, temporal_exchange_kernel, temporal_target,
};
