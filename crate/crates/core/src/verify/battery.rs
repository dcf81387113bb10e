//! The oracle battery run by `emcom verify`: every check yields one report
//! line with the instance it ran on, the measured value and its tolerance.

use serde::{Deserialize, Serialize};

use super::instances::{instance_hash, random_frozen_instance, random_probs, FrozenInstance};
use super::kernel::{check_detailed_balance, check_stationary, kl_trajectory, KL_MONOTONE_TOL};
use super::marl::{check_message_kernels, random_frozen_marl_instance};
use super::naming::{cycle_kernel, exchange_kernel, exchange_target, perception_exchange_kernel};
use super::naming::{compose, perception_site_kernels};
use super::posterior::{enumerate_posterior, object_sign_posterior};
use crate::error::{Error, Result};
use crate::marl::{bellman_residual, soft_value_iteration, OptimalityModel};
use crate::naming::{Fault, Learning};
use crate::pgm::{
    collective_free_energy, enumerate_assignments, log_evidence, log_joint, TabulatedQ,
    DEFAULT_ENUMERATION_CAP,
};
use crate::prob::{kl_divergence, tv_distance, LogProbVector, RandomSource};
use crate::signaling::{
    finite_difference_gradients, gradients, mutual_information, objective_elbo, objective_mi,
    optimal_receiver, random_game, Objective,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One oracle outcome. `pass` is `value <= tolerance` unless the metric is a
/// detection, where the value must exceed the tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance_hash: String,
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn at_most(hash: &str, metric: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            instance_hash: hash.to_string(),
            metric: metric.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    pub fn at_least(hash: &str, metric: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            instance_hash: hash.to_string(),
            metric: metric.into(),
            value,
            tolerance,
            pass: value > tolerance,
        }
    }
}

pub const KERNEL_TOL: f64 = 1e-10;
pub const MUTATION_THRESHOLD: f64 = 1e-3;

/// `(M, C, seed)` for the frozen naming battery: every M in 2..=4 and C in
/// 2..=3, five seeds each.
pub fn naming_battery_instances() -> Vec<(usize, usize, u64)> {
    let mut out = Vec::new();
    for m in 2..=4 {
        for c in 2..=3 {
            for s in 0..5u64 {
                out.push((m, c, 1000 * m as u64 + 100 * c as u64 + s));
            }
        }
    }
    out
}

/// Fixed-point and detailed-balance checks of the frozen exchange kernels,
/// plus the perception-inclusive kernel against the sign posterior.
pub fn naming_kernel_reports(inst: &FrozenInstance) -> Result<Vec<OracleReport>> {
    let hash = instance_hash(inst);
    let state = inst.state(Learning::Frozen, Fault::None)?;
    let (mut db, mut fixed, mut gap, mut perception) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for d in 0..inst.dataset.n_objects {
        let target = exchange_target(&state, 0, 1, d)?;
        for (sp, li) in [(0, 1), (1, 0)] {
            db = db.max(check_detailed_balance(&exchange_kernel(&state, sp, li, d)?, &target)?);
        }
        let check = check_stationary(&cycle_kernel(&state, 0, 1, d)?, &target)?;
        fixed = fixed.max(check.tv_to_target);
        gap = gap.max(check.method_gap);
        let post = object_sign_posterior(&inst.dataset, &inst.models, &inst.prior, d)?;
        let k = perception_exchange_kernel(&state, 0, 1, d)?;
        perception = perception.max(check_stationary(&k, &post)?.tv_to_target);
    }
    Ok(vec![
        OracleReport::at_most(&hash, "naming.detailed_balance", db, KERNEL_TOL),
        OracleReport::at_most(&hash, "naming.fixed_point_tv", fixed, KERNEL_TOL),
        OracleReport::at_most(&hash, "naming.power_vs_solve_tv", gap, KERNEL_TOL),
        OracleReport::at_most(&hash, "naming.perception_fixed_point_tv", perception, KERNEL_TOL),
    ])
}

/// Largest one-step increase of `KL(rho_t || pi)` over `pairs` random
/// (kernel, start) pairs, as a single report per pair.
pub fn kl_monotonicity_reports(pairs: usize, steps: usize) -> Result<Vec<OracleReport>> {
    let mut out = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let m = 2 + i % 3;
        let inst = random_frozen_instance(5000 + i as u64, m, 2, 3, 2, 2)?;
        let state = inst.state(Learning::Frozen, Fault::None)?;
        let d = i % 2;
        let kernel = cycle_kernel(&state, 0, 1, d)?;
        let target = exchange_target(&state, 0, 1, d)?;
        let mut rng = RandomSource::new(i as u64).stream(&[0x4B]);
        let start = LogProbVector::from_probs(&random_probs(&mut rng, m))?;
        let hash = instance_hash(&(&inst, start.values()));
        let value = match kl_trajectory(&kernel, &target, &start, steps) {
            Ok(kl) => kl.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max),
            Err(Error::Property(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        out.push(OracleReport::at_most(
            &hash,
            "naming.kl_max_step_increase",
            value.max(0.0),
            KL_MONOTONE_TOL,
        ));
    }
    Ok(out)
}

/// Collective free energy against KL plus evidence, on random tabulated q
/// and on the exact posterior.
pub fn cfe_reports(instances: usize, qs_per_instance: usize) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for i in 0..instances {
        let inst = random_frozen_instance(7000 + i as u64, 2, 2, 3, 2, 2)?;
        let hash = instance_hash(&inst);
        let (ds, agents, prior) = (&inst.dataset, &inst.models, &inst.prior);
        let support = enumerate_assignments(2, 2, 2, ds.n_objects, DEFAULT_ENUMERATION_CAP)?;
        let lj = support
            .iter()
            .map(|a| log_joint(a, ds, agents, prior))
            .collect::<Result<Vec<_>>>()?;
        let post = TabulatedQ::new(support.clone(), LogProbVector::from_log_weights(lj)?)?;
        let ev = log_evidence(ds, agents, prior, DEFAULT_ENUMERATION_CAP)?;
        let exact = collective_free_energy(&post, ds, agents, prior)?;
        out.push(OracleReport::at_most(
            &hash,
            "cfe.posterior_equality",
            (exact.total + ev).abs(),
            1e-10,
        ));
        let mut rng = RandomSource::new(i as u64).stream(&[0xCF]);
        let (mut decomposition, mut bound) = (0.0f64, f64::NEG_INFINITY);
        for _ in 0..qs_per_instance {
            let q = TabulatedQ::new(
                support.clone(),
                LogProbVector::from_probs(&random_probs(&mut rng, support.len()))?,
            )?;
            let rep = collective_free_energy(&q, ds, agents, prior)?;
            let kl = kl_divergence(&q.log_probs, &post.log_probs)?;
            decomposition = decomposition.max((rep.decomposed_total() - (kl - ev)).abs());
            bound = bound.max(-rep.total - ev);
        }
        out.push(OracleReport::at_most(&hash, "cfe.decomposition", decomposition, 1e-10));
        out.push(OracleReport::at_most(&hash, "cfe.elbo_bound_excess", bound.max(0.0), 1e-10));
    }
    Ok(out)
}

/// Enumeration with and without latent marginalization agree on sign
/// marginals.
pub fn enumeration_reports(instances: usize) -> Result<Vec<OracleReport>> {
    let mut out = Vec::with_capacity(instances);
    for i in 0..instances {
        let inst = random_frozen_instance(8000 + i as u64, 2 + i % 2, 2, 3, 2, 2)?;
        let hash = instance_hash(&inst);
        let m = inst.n_signs();
        let full = enumerate_posterior(&inst.dataset, &inst.models, &inst.prior, false, DEFAULT_ENUMERATION_CAP)?;
        let marg = enumerate_posterior(&inst.dataset, &inst.models, &inst.prior, true, DEFAULT_ENUMERATION_CAP)?;
        let gap = tv_distance(&full.sign_tuple_marginal(m), &marg.sign_tuple_marginal(m));
        out.push(OracleReport::at_most(&hash, "posterior.marginalization_agreement", gap, 1e-10));
    }
    Ok(out)
}

/// Signaling-game bound, regroupings and gradient checks.
pub fn signaling_reports(instances: usize) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let mut rng = RandomSource::new(0x516).stream(&[]);
    for i in 0..instances {
        let (s, r, src) = random_game(&mut rng, 2 + i % 4, 2 + i % 3, 3.0)?;
        let hash = instance_hash(&(&s, &r, &src));
        let hx = src.dist.entropy();
        let mi = mutual_information(&s, &src)?;
        let j = objective_mi(&s, &r, &src)?;
        out.push(OracleReport::at_most(&hash, "signaling.mi_bound_excess", (j + hx - mi).max(0.0), 1e-12));
        let best = objective_mi(&s, &optimal_receiver(&s, &src)?, &src)?;
        out.push(OracleReport::at_most(&hash, "signaling.mi_bound_equality", (best + hx - mi).abs(), 1e-9));
        let rep = objective_elbo(&s, &r, &src, 0.7)?;
        out.push(OracleReport::at_most(
            &hash,
            "signaling.elbo_regrouping",
            (rep.total - rep.regrouped_total()).abs(),
            1e-12,
        ));
        if i % 10 == 0 {
            for obj in [Objective::Mi, Objective::Elbo { beta: 0.7 }] {
                let a = gradients(&s, &r, &src, obj)?;
                let n = finite_difference_gradients(&s, &r, &src, obj, 1e-5)?;
                let err = a
                    .sender
                    .iter()
                    .chain(&a.recon)
                    .flatten()
                    .chain(&a.prior)
                    .zip(n.sender.iter().chain(&n.recon).flatten().chain(&n.prior))
                    .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
                out.push(OracleReport::at_most(&hash, "signaling.gradient_fd_error", err, 1e-6));
            }
        }
    }
    Ok(out)
}

/// Soft Bellman residuals and the per-timestep message kernels.
pub fn marl_reports(instances: usize) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for i in 0..instances {
        let inst = random_frozen_marl_instance(9000 + i as u64, 3, 2, 2 + i % 3, 4)?;
        let hash = instance_hash(&inst);
        let rep = check_message_kernels(&inst)?;
        out.push(OracleReport::at_most(&hash, "marl.message_detailed_balance", rep.detailed_balance, KERNEL_TOL));
        out.push(OracleReport::at_most(&hash, "marl.message_fixed_point_tv", rep.tv_to_target, KERNEL_TOL));
        let mut residual = 0.0f64;
        for agent in &inst.mdp.agents {
            let r = OptimalityModel::default().log_optimality(&agent.reward);
            let pol = soft_value_iteration(agent, &inst.trajectory.messages, &r)?;
            residual = residual.max(bellman_residual(agent, &inst.trajectory.messages, &r, &pol));
        }
        out.push(OracleReport::at_most(&hash, "marl.bellman_residual", residual, 1e-10));
    }
    Ok(out)
}

/// The three seeded protocol bugs, each against the oracle that should see
/// it. Passing means the bug was detected.
pub fn mutation_reports() -> Result<Vec<OracleReport>> {
    let inst = random_frozen_instance(7, 3, 2, 3, 3, 2)?;
    let hash = instance_hash(&inst);

    let sq = inst.state(Learning::Frozen, Fault::SquaredAcceptance)?;
    let target = exchange_target(&sq, 0, 1, 0)?;
    let squared = check_detailed_balance(&exchange_kernel(&sq, 0, 1, 0)?, &target)?;

    let uni = inst.state(Learning::Frozen, Fault::UniformProposal)?;
    let target = exchange_target(&uni, 0, 1, 0)?;
    let uniform = check_stationary(&cycle_kernel(&uni, 0, 1, 0)?, &target)?.tv_to_target;

    let loo = inst.state(Learning::Gibbs, Fault::NoLeaveOneOut)?;
    let (sites, target) = perception_site_kernels(&loo, 0)?;
    let mut missing_loo = 0.0f64;
    for s in &sites {
        missing_loo = missing_loo.max(check_detailed_balance(s, &target)?);
    }
    let sweep = check_stationary(&compose(&sites)?, &target)?.tv_to_target;
    Ok(vec![
        OracleReport::at_least(&hash, "mutation.squared_acceptance.detailed_balance", squared, MUTATION_THRESHOLD),
        OracleReport::at_least(&hash, "mutation.uniform_proposal.fixed_point_tv", uniform, MUTATION_THRESHOLD),
        OracleReport::at_least(
            &hash,
            "mutation.no_leave_one_out.detailed_balance",
            missing_loo.max(sweep),
            MUTATION_THRESHOLD,
        ),
    ])
}

/// The full battery.
pub fn run_battery() -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for (m, c, seed) in naming_battery_instances() {
        out.extend(naming_kernel_reports(&random_frozen_instance(seed, m, c, 3, 3, 2)?)?);
    }
    out.extend(kl_monotonicity_reports(100, 50)?);
    out.extend(cfe_reports(20, 5)?);
    out.extend(enumeration_reports(10)?);
    out.extend(signaling_reports(100)?);
    out.extend(marl_reports(25)?);
    out.extend(mutation_reports()?);
    Ok(out)
}
