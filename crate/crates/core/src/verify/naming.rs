//! Kernels of the naming game built from the engine's own proposal and
//! acceptance functions, and the targets they should leave invariant,
//! computed separately from raw counts.

use super::kernel::KernelMatrix;
use crate::error::{contract, Error, Result};
use crate::naming::{GameState, Learning};
use crate::pgm::{mixed_radix, DEFAULT_ENUMERATION_CAP};
use crate::prob::LogProbVector;

/// One exchange about object `d` with all latents held fixed: the speaker
/// proposes, the listener accepts or keeps its sign.
pub fn exchange_kernel(
    state: &GameState,
    speaker: usize,
    listener: usize,
    d: usize,
) -> Result<KernelMatrix> {
    let n = state.config.vocab_size;
    let z_li = state.agents[listener].latents[d];
    let mut rows = Vec::with_capacity(n);
    for current in 0..n {
        let mut s = state.clone();
        s.set_assignment(listener, d, current, z_li);
        let q = s.proposal_distribution(speaker, d)?.probs();
        let mut row = vec![0.0; n];
        row[current] = q[current];
        for proposed in 0..n {
            if proposed == current {
                continue;
            }
            let gamma = s.acceptance_probability(listener, d, proposed, current);
            row[proposed] = q[proposed] * gamma;
            row[current] += q[proposed] * (1.0 - gamma);
        }
        rows.push(row);
    }
    KernelMatrix::new(rows, format!("exchange {speaker}->{listener} object {d}"))
}

/// Speaker-to-listener then listener-to-speaker, acting on one shared sign.
pub fn cycle_kernel(state: &GameState, a: usize, b: usize, d: usize) -> Result<KernelMatrix> {
    exchange_kernel(state, a, b, d)?.then(&exchange_kernel(state, b, a, d)?)
}

/// `log p(z_d^k | m)` for every sign, from the initial parameters plus the
/// recorded assignments of every other object.
fn latent_log_lik_loo(state: &GameState, k: usize, d: usize, z: usize) -> Vec<f64> {
    let agent = &state.agents[k];
    if let Some(p) = agent.point() {
        return p.log_phi.iter().map(|row| row[z]).collect();
    }
    let base = agent.base();
    (0..state.config.vocab_size)
        .map(|m| {
            let mut count = base.phi[m].count(z);
            let mut total = base.phi[m].total();
            for other in (0..state.n_objects()).filter(|o| *o != d) {
                if let Some((rm, rz)) = agent.recorded(other) {
                    if rm == m {
                        total += 1.0;
                        if rz == z {
                            count += 1.0;
                        }
                    }
                }
            }
            count.ln() - total.ln()
        })
        .collect()
}

/// Target of the exchange kernels: `∝ p(m) p(z_d^A | m) p(z_d^B | m)`.
pub fn exchange_target(state: &GameState, a: usize, b: usize, d: usize) -> Result<LogProbVector> {
    let la = latent_log_lik_loo(state, a, d, state.agents[a].latents[d]);
    let lb = latent_log_lik_loo(state, b, d, state.agents[b].latents[d]);
    let w = (0..state.config.vocab_size)
        .map(|m| state.prior.log_prob(m) + la[m] + lb[m])
        .collect();
    LogProbVector::from_log_weights(w)
}

/// Full exchange kernel on the listener's sign with perception included:
/// both role-holders resample their category under the current sign before
/// the proposal. Requires frozen parameters.
pub fn perception_exchange_kernel(
    state: &GameState,
    speaker: usize,
    listener: usize,
    d: usize,
) -> Result<KernelMatrix> {
    if state.config.learning != Learning::Frozen {
        return Err(contract("perception-inclusive kernel needs frozen parameters"));
    }
    let n = state.config.vocab_size;
    let mut rows = Vec::with_capacity(n);
    for current in 0..n {
        let ps = state.perception_distribution(speaker, d, current)?.probs();
        let pl = state.perception_distribution(listener, d, current)?.probs();
        let mut row = vec![0.0; n];
        for (zs, ws) in ps.iter().enumerate() {
            for (zl, wl) in pl.iter().enumerate() {
                let w = ws * wl;
                if w == 0.0 {
                    continue;
                }
                let mut s = state.clone();
                s.set_assignment(speaker, d, s.agents[speaker].signs[d], zs);
                s.set_assignment(listener, d, current, zl);
                let q = s.proposal_distribution(speaker, d)?.probs();
                for proposed in 0..n {
                    let gamma = s.acceptance_probability(listener, d, proposed, current);
                    row[proposed] += w * q[proposed] * gamma;
                    row[current] += w * q[proposed] * (1.0 - gamma);
                }
            }
        }
        rows.push(row);
    }
    KernelMatrix::new(rows, format!("perceive+exchange {speaker}->{listener} object {d}"))
}

fn log_rising(a: f64, n: f64) -> f64 {
    (0..n as u64).map(|j| (a + j as f64).ln()).sum()
}

/// Collapsed `log p(z_1..z_D, x | s)` for agent `k` with its signs fixed,
/// from the initial parameters via rising factorials.
pub fn collapsed_latent_log_joint(state: &GameState, k: usize, latents: &[usize]) -> f64 {
    let agent = &state.agents[k];
    let base = agent.base();
    let (n_signs, n_cat, n_feat) = (base.n_signs(), base.n_categories(), base.n_features());
    let mut sign_cat = vec![vec![0.0; n_cat]; n_signs];
    let mut cat_feat = vec![vec![0.0; n_feat]; n_cat];
    for (d, z) in latents.iter().enumerate() {
        sign_cat[agent.signs[d]][*z] += 1.0;
        for (f, c) in state.observations[k][d].counts().iter().enumerate() {
            cat_feat[*z][f] += f64::from(*c);
        }
    }
    let block = |rows: &[crate::prob::DirichletCounts], n: &[Vec<f64>]| -> f64 {
        rows.iter()
            .zip(n)
            .map(|(row, counts)| {
                let per: f64 = counts
                    .iter()
                    .enumerate()
                    .map(|(i, c)| log_rising(row.count(i), *c))
                    .sum();
                per - log_rising(row.total(), counts.iter().sum())
            })
            .sum()
    };
    block(&base.phi, &sign_cat) + block(&base.theta, &cat_feat)
}

/// Single-site perception kernels over the `C^D` latent configurations of
/// agent `k` (signs fixed to the agent's own), plus their collapsed target.
pub fn perception_site_kernels(
    state: &GameState,
    k: usize,
) -> Result<(Vec<KernelMatrix>, LogProbVector)> {
    let n_cat = state.config.n_categories;
    let d_count = state.n_objects();
    let required = (n_cat as u128).pow(d_count as u32).pow(2);
    if required > DEFAULT_ENUMERATION_CAP {
        return Err(Error::SizeCap {
            required,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let configs = mixed_radix(n_cat, d_count);
    let index = |z: &[usize]| z.iter().fold(0, |acc, c| acc * n_cat + c);
    let n = configs.len();
    let mut kernels = Vec::with_capacity(d_count);
    for d in 0..d_count {
        let mut rows = vec![vec![0.0; n]; n];
        for (i, z) in configs.iter().enumerate() {
            let mut s = state.clone();
            for (o, zo) in z.iter().enumerate() {
                let own = s.agents[k].signs[o];
                s.set_assignment(k, o, own, *zo);
            }
            let own = s.agents[k].signs[d];
            let post = s.perception_distribution(k, d, own)?.probs();
            for (c, p) in post.iter().enumerate() {
                let mut next = z.clone();
                next[d] = c;
                rows[i][index(&next)] += p;
            }
        }
        kernels.push(KernelMatrix::new(rows, format!("perceive agent {k} object {d}"))?);
    }
    let target = LogProbVector::from_log_weights(
        configs
            .iter()
            .map(|z| collapsed_latent_log_joint(state, k, z))
            .collect(),
    )?;
    Ok((kernels, target))
}

/// Composes a list of kernels in order.
pub fn compose(kernels: &[KernelMatrix]) -> Result<KernelMatrix> {
    let mut it = kernels.iter();
    let first = it.next().ok_or_else(|| Error::Contract("nothing to compose".into()))?;
    it.try_fold(first.clone(), |acc, k| acc.then(k))
}
