//! Message-conditioned latent dynamics over observation sequences.
//!
//! Each agent models `z_0 ~ initial`, `z_t ~ p(z_t | z_{t-1}, m)` for
//! `t = 1..T` and emits `x_t` from `theta[z_t]`. The sign `m` of an object
//! conditions every transition. A naming game over these models exchanges
//! signs per sequence, scoring either the collapsed sequence likelihood
//! `p(x_{1:T} | m)` or a sampled latent path.

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, domain, Result};
use crate::naming::ExchangeEvent;
use crate::pgm::{polya_log_lik, AgentModel, Observation, SequenceDataset, SignPrior};
use crate::prob::{
    logsumexp_unchecked, sample_categorical, DirichletCounts, LogProbVector, RandomSource,
    RngStream,
};

const TAG_SPEAKER: u64 = 21;
const TAG_LISTENER: u64 = 22;
const TAG_INIT: u64 = 23;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalAgentModel {
    /// Distribution of the pre-sequence state `z_0`.
    pub initial: LogProbVector,
    /// `transitions[z_prev][m]`, Dirichlet rows over the next state.
    pub transitions: Vec<Vec<DirichletCounts>>,
    /// Emission rows over features, one per state.
    pub theta: Vec<DirichletCounts>,
}

impl TemporalAgentModel {
    pub fn new(
        n_signs: usize,
        n_states: usize,
        n_features: usize,
        alpha_transition: f64,
        alpha_theta: f64,
    ) -> Result<Self> {
        if n_signs == 0 || n_states == 0 || n_features == 0 {
            return Err(contract("model sizes must be positive"));
        }
        if !(alpha_transition > 0.0 && alpha_theta > 0.0) {
            return Err(domain("prior concentrations must be positive"));
        }
        Ok(Self {
            initial: LogProbVector::uniform(n_states),
            transitions: vec![
                vec![DirichletCounts::symmetric(n_states, alpha_transition); n_signs];
                n_states
            ],
            theta: vec![DirichletCounts::symmetric(n_features, alpha_theta); n_states],
        })
    }

    /// Lifts a static model: every transition row given `m` is `phi[m]`, so
    /// `z_1` is distributed as the static latent whatever `z_0` is.
    pub fn from_agent_model(model: &AgentModel) -> Self {
        let c = model.n_categories();
        Self {
            initial: LogProbVector::uniform(c),
            transitions: vec![model.phi.clone(); c],
            theta: model.theta.clone(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.theta.len()
    }

    pub fn n_signs(&self) -> usize {
        self.transitions[0].len()
    }

    pub fn n_features(&self) -> usize {
        self.theta[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.n_states();
        if c == 0 || self.initial.len() != c || self.transitions.len() != c {
            return Err(config("temporal model tables disagree on the state count"));
        }
        let m = self.transitions[0].len();
        if m == 0
            || self
                .transitions
                .iter()
                .any(|row| row.len() != m || row.iter().any(|r| r.len() != c))
        {
            return Err(config("transition table must be C x M x C"));
        }
        let f = self.theta[0].len();
        if self.theta.iter().any(|r| r.len() != f) {
            return Err(config("emission rows differ in length"));
        }
        Ok(())
    }

    pub fn log_transition(&self, prev: usize, m: usize, next: usize) -> f64 {
        self.transitions[prev][m].log_predictive(next)
    }

    pub fn log_emission(&self, z: usize, x: &Observation) -> f64 {
        polya_log_lik(&self.theta[z], x.counts(), None)
    }

    /// `log p(z_{0:T} | m)`; `path` includes `z_0`.
    pub fn path_log_prob(&self, path: &[usize], m: usize) -> f64 {
        let mut lp = self.initial.values()[path[0]];
        for w in path.windows(2) {
            lp += self.log_transition(w[0], m, w[1]);
        }
        lp
    }

    fn check(&self, xs: &[Observation], m: usize) -> Result<()> {
        if xs.is_empty() {
            return Err(contract("sequence must be non-empty"));
        }
        if m >= self.n_signs() {
            return Err(domain(format!("sign {m} out of range")));
        }
        if xs.iter().any(|x| x.n_features() != self.n_features()) {
            return Err(domain("frame feature count differs from the model"));
        }
        Ok(())
    }

    pub fn add_path(&mut self, m: usize, path: &[usize], xs: &[Observation]) {
        for w in path.windows(2) {
            self.transitions[w[0]][m].add(w[1], 1.0);
        }
        for (z, x) in path[1..].iter().zip(xs) {
            for (f, c) in x.counts().iter().enumerate() {
                if *c > 0 {
                    self.theta[*z].add(f, f64::from(*c));
                }
            }
        }
    }

    pub fn remove_path(&mut self, m: usize, path: &[usize], xs: &[Observation]) {
        for w in path.windows(2) {
            self.transitions[w[0]][m].remove(w[1], 1.0);
        }
        for (z, x) in path[1..].iter().zip(xs) {
            for (f, c) in x.counts().iter().enumerate() {
                if *c > 0 {
                    self.theta[*z].remove(f, f64::from(*c));
                }
            }
        }
    }
}

/// Filtered posteriors `p(z_t | x_{1:t}, m)` for `t = 1..T` and the exact
/// `log p(x_{1:T} | m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub filtered: Vec<LogProbVector>,
    pub log_likelihood: f64,
}

fn predict(agent: &TemporalAgentModel, belief: &[f64], m: usize) -> Vec<f64> {
    let c = agent.n_states();
    (0..c)
        .map(|z| {
            let terms: Vec<f64> = (0..c)
                .map(|zp| belief[zp] + agent.log_transition(zp, m, z))
                .collect();
            logsumexp_unchecked(&terms)
        })
        .collect()
}

/// Forward algorithm in the log domain; frame emissions and transitions use
/// the current posterior-predictive parameters.
pub fn forward_filter(
    agent: &TemporalAgentModel,
    xs: &[Observation],
    m: usize,
) -> Result<FilterResult> {
    agent.check(xs, m)?;
    let mut belief = agent.initial.values().to_vec();
    let mut filtered = Vec::with_capacity(xs.len());
    let mut ll = 0.0;
    for x in xs {
        let mut joint = predict(agent, &belief, m);
        for (z, v) in joint.iter_mut().enumerate() {
            *v += agent.log_emission(z, x);
        }
        let norm = logsumexp_unchecked(&joint);
        ll += norm;
        let post = LogProbVector::from_log_weights(joint)?;
        belief = post.values().to_vec();
        filtered.push(post);
    }
    Ok(FilterResult {
        filtered,
        log_likelihood: ll,
    })
}

/// `log p(x_{1:T} | m)`.
pub fn sequence_log_lik(agent: &TemporalAgentModel, xs: &[Observation], m: usize) -> Result<f64> {
    Ok(forward_filter(agent, xs, m)?.log_likelihood)
}

/// Draws `z_{0:T} ~ p(z_{0:T} | x_{1:T}, m)` by forward filtering and
/// backward sampling; consumes exactly `T + 1` uniforms.
pub fn sample_path(
    agent: &TemporalAgentModel,
    xs: &[Observation],
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let filter = forward_filter(agent, xs, m)?;
    let c = agent.n_states();
    let t_len = xs.len();
    let mut path = vec![0; t_len + 1];
    path[t_len] = sample_categorical(&filter.filtered[t_len - 1], rng)?;
    for t in (0..t_len).rev() {
        let next = path[t + 1];
        let belief = if t == 0 {
            agent.initial.values()
        } else {
            filter.filtered[t - 1].values()
        };
        let w = (0..c)
            .map(|z| belief[z] + agent.log_transition(z, m, next))
            .collect();
        path[t] = sample_categorical(&LogProbVector::from_log_weights(w)?, rng)?;
    }
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalMode {
    /// Score signs by `p(x_{1:T} | m)`.
    #[default]
    Collapsed,
    /// Perceive a latent path under the listener's current sign, then score
    /// signs by `p(z_{0:T} | m)`.
    SampledPath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub rounds: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: TemporalMode,
    /// Update transition and emission counts from recorded paths.
    #[serde(default)]
    pub learn: bool,
}

/// Two-agent naming game over sequences.
#[derive(Clone, Debug)]
pub struct TemporalGame {
    pub config: TemporalConfig,
    pub prior: SignPrior,
    pub models: Vec<TemporalAgentModel>,
    pub data: SequenceDataset,
    /// `signs[k][d]`.
    pub signs: Vec<Vec<usize>>,
    /// Last recorded `(sign, path)` per agent and object, when learning.
    pub records: Vec<Vec<Option<(usize, Vec<usize>)>>>,
    base: Vec<TemporalAgentModel>,
    pub round: usize,
}

impl TemporalGame {
    /// Signs start as independent prior draws per agent and object.
    pub fn new(
        config: TemporalConfig,
        prior: SignPrior,
        models: Vec<TemporalAgentModel>,
        data: SequenceDataset,
    ) -> Result<Self> {
        data.validate()?;
        if models.len() != 2 || data.n_agents != 2 {
            return Err(crate::error::config("the temporal game has exactly two agents"));
        }
        for model in &models {
            model.validate()?;
            if model.n_signs() != prior.len() || model.n_features() != data.n_features {
                return Err(crate::error::config("model sizes disagree with the prior or data"));
            }
        }
        let source = RandomSource::new(config.seed);
        let signs = (0..2)
            .map(|k| {
                let mut rng = source.stream(&[TAG_INIT, k as u64]);
                (0..data.n_objects)
                    .map(|_| sample_categorical(&prior.dist, &mut rng))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records: vec![vec![None; data.n_objects]; 2],
            base: models.clone(),
            config,
            prior,
            models,
            data,
            signs,
            round: 0,
        })
    }

    fn sequence(&self, k: usize, d: usize) -> &[Observation] {
        &self.data.sequences[k][d]
    }

    /// Agent `k`'s model with its own record for object `d` left out.
    pub fn scoring_model(&self, k: usize, d: usize) -> TemporalAgentModel {
        let mut model = self.models[k].clone();
        if let Some((m, path)) = &self.records[k][d] {
            model.remove_path(*m, path, self.sequence(k, d));
        }
        model
    }

    /// Per-sign scores of agent `k` for object `d`: the collapsed sequence
    /// likelihood, or the path probability when `path` is given.
    pub fn sign_scores(&self, k: usize, d: usize, path: Option<&[usize]>) -> Result<Vec<f64>> {
        let model = self.scoring_model(k, d);
        (0..self.prior.len())
            .map(|m| match path {
                Some(p) => Ok(model.path_log_prob(p, m)),
                None => sequence_log_lik(&model, self.sequence(k, d), m),
            })
            .collect()
    }

    /// Speaker's proposal `∝ p(m) score_Sp(m)`.
    pub fn proposal(&self, speaker: usize, d: usize, path: Option<&[usize]>) -> Result<LogProbVector> {
        let scores = self.sign_scores(speaker, d, path)?;
        LogProbVector::from_log_weights(
            scores
                .iter()
                .enumerate()
                .map(|(m, s)| self.prior.log_prob(m) + s)
                .collect(),
        )
    }

    /// `min(1, exp(score_Li(proposed) - score_Li(current)))`.
    pub fn acceptance(
        &self,
        listener: usize,
        d: usize,
        path: Option<&[usize]>,
        proposed: usize,
        current: usize,
    ) -> Result<f64> {
        if proposed == current {
            return Ok(1.0);
        }
        let scores = self.sign_scores(listener, d, path)?;
        Ok((scores[proposed] - scores[current]).exp().min(1.0))
    }

    fn perceive(&self, k: usize, d: usize, m: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        sample_path(&self.scoring_model(k, d), self.sequence(k, d), m, rng)
    }

    fn record(&mut self, k: usize, d: usize, m: usize, path: Vec<usize>) {
        if !self.config.learn {
            return;
        }
        let xs = self.data.sequences[k][d].clone();
        if let Some((old_m, old_path)) = self.records[k][d].take() {
            self.models[k].remove_path(old_m, &old_path, &xs);
        }
        self.models[k].add_path(m, &path, &xs);
        self.records[k][d] = Some((m, path));
    }

    /// One exchange about object `d`; the listener's sign may change.
    pub fn exchange(
        &mut self,
        speaker: usize,
        listener: usize,
        d: usize,
        sp_rng: &mut RngStream,
        li_rng: &mut RngStream,
    ) -> Result<ExchangeEvent> {
        let current = self.signs[listener][d];
        let sampled = self.config.mode == TemporalMode::SampledPath;
        let sp_path = if sampled {
            Some(self.perceive(speaker, d, current, sp_rng)?)
        } else {
            None
        };
        let li_path = if sampled {
            Some(self.perceive(listener, d, current, li_rng)?)
        } else {
            None
        };
        let q = self.proposal(speaker, d, sp_path.as_deref())?;
        let proposed = sample_categorical(&q, sp_rng)?;
        let gamma = self.acceptance(listener, d, li_path.as_deref(), proposed, current)?;
        let u = li_rng.uniform();
        let accepted = u < gamma;
        if accepted {
            self.signs[listener][d] = proposed;
        }
        if self.config.learn {
            let m = self.signs[listener][d];
            let path = self.perceive(listener, d, m, li_rng)?;
            self.record(listener, d, m, path);
        }
        Ok(ExchangeEvent {
            round: self.round,
            speaker,
            listener,
            object: d,
            current,
            proposed,
            gamma,
            u,
            accepted,
        })
    }

    /// Agent 0 speaks about every object, then agent 1.
    pub fn run_round(&mut self) -> Result<Vec<ExchangeEvent>> {
        self.round += 1;
        let source = RandomSource::new(self.config.seed);
        let mut events = Vec::with_capacity(2 * self.data.n_objects);
        for (dir, (sp, li)) in [(0usize, 1usize), (1, 0)].into_iter().enumerate() {
            for d in 0..self.data.n_objects {
                let tags = [self.round as u64, dir as u64, d as u64];
                let mut sp_rng = source.stream(&[TAG_SPEAKER, tags[0], tags[1], tags[2]]);
                let mut li_rng = source.stream(&[TAG_LISTENER, tags[0], tags[1], tags[2]]);
                events.push(self.exchange(sp, li, d, &mut sp_rng, &mut li_rng)?);
            }
        }
        Ok(events)
    }

    pub fn run(&mut self) -> Result<Vec<ExchangeEvent>> {
        let mut events = Vec::new();
        for _ in 0..self.config.rounds {
            events.extend(self.run_round()?);
        }
        Ok(events)
    }

    /// True when each model equals its starting tables plus the recorded
    /// paths.
    pub fn audit(&self) -> bool {
        (0..2).all(|k| {
            let mut rebuilt = self.base[k].clone();
            for (d, rec) in self.records[k].iter().enumerate() {
                if let Some((m, path)) = rec {
                    rebuilt.add_path(*m, path, self.sequence(k, d));
                }
            }
            rebuilt
                .transitions
                .iter()
                .flatten()
                .zip(self.models[k].transitions.iter().flatten())
                .chain(rebuilt.theta.iter().zip(&self.models[k].theta))
                .all(|(a, b)| a.stats() == b.stats())
        })
    }
}

/// Sequences drawn from a two-agent generator: each object has a true sign,
/// and each agent's sequence follows its own model under that sign.
pub fn generate_sequences(
    models: &[TemporalAgentModel],
    prior: &SignPrior,
    n_objects: usize,
    horizon: usize,
    tokens_per_frame: u32,
    seed: u64,
) -> Result<(SequenceDataset, Vec<usize>)> {
    if horizon == 0 || n_objects == 0 || tokens_per_frame == 0 {
        return Err(contract("sizes must be positive"));
    }
    let source = RandomSource::new(seed);
    let mut rng = source.stream(&[0x5E]);
    let labels = (0..n_objects)
        .map(|_| sample_categorical(&prior.dist, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let predictive = |row: &DirichletCounts| {
        LogProbVector::from_log_weights((0..row.len()).map(|i| row.log_predictive(i)).collect())
    };
    let mut sequences = Vec::with_capacity(models.len());
    for (k, model) in models.iter().enumerate() {
        let mut rng = source.stream(&[0x5F, k as u64]);
        let mut block = Vec::with_capacity(n_objects);
        for m in &labels {
            let mut z = sample_categorical(&model.initial, &mut rng)?;
            let mut seq = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                z = sample_categorical(&predictive(&model.transitions[z][*m])?, &mut rng)?;
                let emit = predictive(&model.theta[z])?;
                let mut counts = vec![0u32; model.n_features()];
                for _ in 0..tokens_per_frame {
                    counts[sample_categorical(&emit, &mut rng)?] += 1;
                }
                seq.push(Observation::new(counts)?);
            }
            block.push(seq);
        }
        sequences.push(block);
    }
    let ds = SequenceDataset {
        schema_version: crate::pgm::DATASET_SCHEMA_VERSION,
        n_features: models[0].n_features(),
        n_objects,
        n_agents: models.len(),
        horizon,
        sequences,
    };
    ds.validate()?;
    Ok((ds, labels))
}
