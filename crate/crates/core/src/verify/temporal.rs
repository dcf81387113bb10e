use super::kernel::KernelMatrix;
use crate::error::{contract, Result};
use crate::pgm::Observation;
use crate::prob::{logsumexp, LogProbVector};
use crate::temporal::{TemporalAgentModel, TemporalGame, TemporalMode};

fn all_paths(n_states: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n_states.pow(len as u32);
    (0..total).map(move |mut i| {
        let mut p = vec![0; len];
        for slot in p.iter_mut().rev() {
            *slot = i % n_states;
            i /= n_states;
        }
        p
    })
}

const PATH_CAP: u128 = 1_000_000;

fn path_joint(agent: &TemporalAgentModel, xs: &[Observation], m: usize, path: &[usize]) -> f64 {
    let mut lw = agent.initial.values()[path[0]];
    for t in 1..path.len() {
        lw += agent.transitions[path[t - 1]][m].log_predictive(path[t]);
        lw += agent.log_emission(path[t], &xs[t - 1]);
    }
    lw
}

fn check_cap(agent: &TemporalAgentModel, len: usize) -> Result<()> {
    let required = (agent.n_states() as u128).saturating_pow(len as u32);
    if required > PATH_CAP {
        return Err(crate::Error::SizeCap {
            required,
            cap: PATH_CAP,
        });
    }
    Ok(())
}

/// `log p(x_{1:T} | m)` as a sum over all `C^(T+1)` paths `z_{0:T}`.
pub fn path_enumeration_log_lik(
    agent: &TemporalAgentModel,
    xs: &[Observation],
    m: usize,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(contract("sequence must be non-empty"));
    }
    check_cap(agent, xs.len() + 1)?;
    let terms: Vec<f64> = all_paths(agent.n_states(), xs.len() + 1)
        .map(|p| path_joint(agent, xs, m, &p))
        .collect();
    logsumexp(&terms)
}

/// Exact path posterior `p(z_{0:T} | x_{1:T}, m)` as `(path, prob)` pairs.
pub fn path_posterior(
    agent: &TemporalAgentModel,
    xs: &[Observation],
    m: usize,
) -> Result<Vec<(Vec<usize>, f64)>> {
    check_cap(agent, xs.len() + 1)?;
    let paths: Vec<Vec<usize>> = all_paths(agent.n_states(), xs.len() + 1).collect();
    let w = paths.iter().map(|p| path_joint(agent, xs, m, p)).collect();
    let post = LogProbVector::from_log_weights(w)?.probs();
    Ok(paths.into_iter().zip(post).collect())
}

/// `∝ p(m) p(x^A_{1:T} | m) p(x^B_{1:T} | m)` by path enumeration.
pub fn temporal_target(game: &TemporalGame, d: usize) -> Result<LogProbVector> {
    let w = (0..game.prior.len())
        .map(|m| {
            let mut lw = game.prior.log_prob(m);
            for k in 0..2 {
                let model = game.scoring_model(k, d);
                lw += path_enumeration_log_lik(&model, &game.data.sequences[k][d], m)?;
            }
            Ok(lw)
        })
        .collect::<Result<Vec<_>>>()?;
    LogProbVector::from_log_weights(w)
}

/// Kernel of the listener's sign for one exchange about object `d` with
/// frozen models. In sampled-path mode both perceptions are averaged over
/// the enumerated path posteriors.
pub fn temporal_exchange_kernel(
    game: &TemporalGame,
    speaker: usize,
    listener: usize,
    d: usize,
) -> Result<KernelMatrix> {
    let n = game.prior.len();
    let mut rows = vec![vec![0.0; n]; n];
    for (current, row) in rows.iter_mut().enumerate() {
        let cases: Vec<(f64, Option<Vec<usize>>, Option<Vec<usize>>)> = match game.config.mode {
            TemporalMode::Collapsed => vec![(1.0, None, None)],
            TemporalMode::SampledPath => {
                let sp = path_posterior(
                    &game.scoring_model(speaker, d),
                    &game.data.sequences[speaker][d],
                    current,
                )?;
                let li = path_posterior(
                    &game.scoring_model(listener, d),
                    &game.data.sequences[listener][d],
                    current,
                )?;
                let mut cases = Vec::with_capacity(sp.len() * li.len());
                for (ps, ws) in &sp {
                    for (pl, wl) in &li {
                        if ws * wl > 0.0 {
                            cases.push((ws * wl, Some(ps.clone()), Some(pl.clone())));
                        }
                    }
                }
                cases
            }
        };
        for (w, sp_path, li_path) in cases {
            let q = game.proposal(speaker, d, sp_path.as_deref())?.probs();
            for (proposed, qp) in q.iter().enumerate() {
                let g = game.acceptance(listener, d, li_path.as_deref(), proposed, current)?;
                row[proposed] += w * qp * g;
                row[current] += w * qp * (1.0 - g);
            }
        }
    }
    KernelMatrix::new(rows, format!("temporal {speaker}->{listener} d={d}"))
}
