use serde::{Deserialize, Serialize};

use super::config::{AcceptanceRule, Fault, GameConfig, Learning, Pairing, UpdateSchedule};
use super::trace::{ExchangeEvent, GameTrace, RoundMetrics};
use crate::error::{config, Result};
use crate::pgm::{AgentModel, Category, Dataset, Observation, Sign, SignPrior};
use crate::prob::{
    sample_categorical, sample_categorical_ordered, LogProbVector, RandomSource, RngStream,
};
use crate::verify::{adjusted_rand_index, agreement_rate, cohens_kappa};

const TAG_INIT: u64 = 1;
const TAG_SPEAKER: u64 = 2;
const TAG_LISTENER: u64 = 3;
const TAG_SCHEDULE: u64 = 4;

/// Optional overrides for a game's starting point.
#[derive(Clone, Debug, Default)]
pub struct GameSetup {
    /// Defaults to uniform over the vocabulary.
    pub prior: Option<SignPrior>,
    /// Initial per-agent parameters; under `Learning::Frozen` these are used
    /// unchanged for the whole game. Defaults to the config's symmetric priors.
    pub models: Option<Vec<AgentModel>>,
    /// Order in which sign draws accumulate mass. Defaults to `0..M`.
    pub sign_order: Option<Vec<usize>>,
}

/// Posterior-mean parameters used under `Learning::Map`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointModel {
    pub log_phi: Vec<Vec<f64>>,
    pub log_theta: Vec<Vec<f64>>,
}

impl PointModel {
    pub fn from_counts(model: &AgentModel) -> Self {
        let logs = |rows: &[crate::prob::DirichletCounts]| {
            rows.iter()
                .map(|r| (0..r.len()).map(|i| r.log_predictive(i)).collect())
                .collect()
        };
        Self {
            log_phi: logs(&model.phi),
            log_theta: logs(&model.theta),
        }
    }

    fn log_lik_obs(&self, z: usize, x: &Observation) -> f64 {
        x.counts()
            .iter()
            .zip(&self.log_theta[z])
            .filter(|(c, _)| **c > 0)
            .map(|(c, lt)| f64::from(*c) * lt)
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct AgentState {
    /// Initial parameters plus every recorded `(sign, category)` assignment.
    pub model: AgentModel,
    pub signs: Vec<usize>,
    pub latents: Vec<usize>,
    base: AgentModel,
    recorded: Vec<Option<(usize, usize)>>,
    point: Option<PointModel>,
}

impl AgentState {
    /// The assignment currently counted in `model` for object `d`.
    pub fn recorded(&self, d: usize) -> Option<(usize, usize)> {
        self.recorded[d]
    }

    /// Parameters the agent started from, before any recorded assignment.
    pub fn base(&self) -> &AgentModel {
        &self.base
    }

    pub fn point(&self) -> Option<&PointModel> {
        self.point.as_ref()
    }

    /// True when `model` equals the initial parameters plus the recorded
    /// assignments, rebuilt from scratch.
    pub fn audit(&self, observations: &[Observation]) -> bool {
        let mut rebuilt = self.base.clone();
        for (d, r) in self.recorded.iter().enumerate() {
            if let Some((m, z)) = r {
                rebuilt.add_assignment(Sign(*m), Category(*z), &observations[d]);
            }
        }
        self.model
            .phi
            .iter()
            .zip(&rebuilt.phi)
            .chain(self.model.theta.iter().zip(&rebuilt.theta))
            .all(|(a, b)| a.stats() == b.stats())
    }
}

/// Full state of a naming game between `K` agents.
#[derive(Clone, Debug)]
pub struct GameState {
    pub config: GameConfig,
    pub prior: SignPrior,
    pub agents: Vec<AgentState>,
    /// `observations[k][d]`.
    pub observations: Vec<Vec<Observation>>,
    pub labels: Option<Vec<usize>>,
    pub sign_order: Vec<usize>,
    pub round: usize,
}

impl GameState {
    /// Validates the instance and runs initialization: signs i.i.d. from the
    /// prior, then each latent perceived under the agent's own sign.
    pub fn new(cfg: &GameConfig, dataset: &Dataset, setup: GameSetup) -> Result<Self> {
        cfg.validate()?;
        dataset.validate()?;
        if dataset.n_agents != cfg.n_agents
            || dataset.n_objects != cfg.n_objects
            || dataset.n_features != cfg.n_features
        {
            return Err(config(format!(
                "dataset is K={} D={} F={}, config expects K={} D={} F={}",
                dataset.n_agents,
                dataset.n_objects,
                dataset.n_features,
                cfg.n_agents,
                cfg.n_objects,
                cfg.n_features
            )));
        }
        let prior = setup
            .prior
            .unwrap_or_else(|| SignPrior::uniform(cfg.vocab_size));
        if prior.len() != cfg.vocab_size {
            return Err(config("sign prior length differs from vocab_size"));
        }
        let models = match setup.models {
            Some(ms) => ms,
            None => {
                let m = AgentModel::new(
                    cfg.vocab_size,
                    cfg.n_categories,
                    cfg.n_features,
                    cfg.alpha_phi,
                    cfg.alpha_theta,
                )?;
                vec![m; cfg.n_agents]
            }
        };
        if models.len() != cfg.n_agents {
            return Err(config("one initial model per agent is required"));
        }
        for m in &models {
            if m.n_signs() != cfg.vocab_size
                || m.n_categories() != cfg.n_categories
                || m.n_features() != cfg.n_features
            {
                return Err(config("initial model dimensions differ from config"));
            }
        }
        let sign_order = setup
            .sign_order
            .unwrap_or_else(|| (0..cfg.vocab_size).collect());
        let mut seen = vec![false; cfg.vocab_size];
        for s in &sign_order {
            if *s >= cfg.vocab_size || std::mem::replace(&mut seen[*s], true) {
                return Err(config("sign_order must be a permutation of 0..M"));
            }
        }
        if sign_order.len() != cfg.vocab_size {
            return Err(config("sign_order must be a permutation of 0..M"));
        }

        let d_count = cfg.n_objects;
        let agents = models
            .into_iter()
            .map(|model| AgentState {
                point: (cfg.learning == Learning::Map).then(|| PointModel::from_counts(&model)),
                base: model.clone(),
                model,
                signs: vec![0; d_count],
                latents: vec![0; d_count],
                recorded: vec![None; d_count],
            })
            .collect();
        let mut state = Self {
            config: cfg.clone(),
            prior,
            agents,
            observations: dataset.observations.clone(),
            labels: dataset.labels.clone(),
            sign_order,
            round: 0,
        };
        let source = RandomSource::new(cfg.seed);
        for k in 0..cfg.n_agents {
            let mut rng = source.stream(&[TAG_INIT, k as u64]);
            for d in 0..d_count {
                state.agents[k].signs[d] =
                    sample_categorical_ordered(&state.prior.dist, &state.sign_order, &mut rng)?;
            }
            for d in 0..d_count {
                let own = state.agents[k].signs[d];
                let post = state.perception_distribution(k, d, own)?;
                state.agents[k].latents[d] = sample_categorical(&post, &mut rng)?;
                state.record(k, d);
            }
            let agent = &mut state.agents[k];
            if let Some(p) = &mut agent.point {
                *p = PointModel::from_counts(&agent.model);
            }
        }
        Ok(state)
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_objects(&self) -> usize {
        self.config.n_objects
    }

    fn excluded(&self, k: usize, d: usize) -> Option<(usize, usize)> {
        if self.config.fault == Fault::NoLeaveOneOut {
            return None;
        }
        self.agents[k].recorded[d]
    }

    /// `log p(z | m)` as agent `k` scores it for object `d`, with the
    /// object's own recorded assignment left out.
    pub fn score_latent(&self, k: usize, d: usize, m: usize, z: usize) -> f64 {
        let agent = &self.agents[k];
        if let Some(p) = &agent.point {
            return p.log_phi[m][z];
        }
        let row = &agent.model.phi[m];
        let (mut count, mut total) = (row.count(z), row.total());
        if let Some((rm, rz)) = self.excluded(k, d) {
            if rm == m {
                total -= 1.0;
                if rz == z {
                    count -= 1.0;
                }
            }
        }
        count.ln() - total.ln()
    }

    /// `log p(x_d^k | z)` with the object's own tokens left out.
    pub fn score_observation(&self, k: usize, d: usize, z: usize) -> Result<f64> {
        let agent = &self.agents[k];
        let x = &self.observations[k][d];
        if let Some(p) = &agent.point {
            return Ok(p.log_lik_obs(z, x));
        }
        match self.excluded(k, d) {
            Some((_, rz)) => agent.model.log_lik_obs_loo(Category(z), x, Category(rz)),
            None => agent.model.log_lik_obs(Category(z), x),
        }
    }

    /// Posterior over agent `k`'s category for object `d` under `sign`.
    pub fn perception_distribution(&self, k: usize, d: usize, sign: usize) -> Result<LogProbVector> {
        let weights = (0..self.config.n_categories)
            .map(|z| Ok(self.score_latent(k, d, sign, z) + self.score_observation(k, d, z)?))
            .collect::<Result<Vec<_>>>()?;
        LogProbVector::from_log_weights(weights)
    }

    /// Speaker's naming distribution `∝ p(m) p(z_d^Sp | m)`.
    pub fn proposal_distribution(&self, speaker: usize, d: usize) -> Result<LogProbVector> {
        let m_count = self.config.vocab_size;
        if self.config.fault == Fault::UniformProposal {
            return Ok(LogProbVector::uniform(m_count));
        }
        let z = self.agents[speaker].latents[d];
        let weights = (0..m_count)
            .map(|m| self.prior.log_prob(m) + self.score_latent(speaker, d, m, z))
            .collect();
        LogProbVector::from_log_weights(weights)
    }

    /// `min(1, p(z_d^Li | proposed) / p(z_d^Li | current))` for the listener.
    pub fn acceptance_probability(
        &self,
        listener: usize,
        d: usize,
        proposed: usize,
        current: usize,
    ) -> f64 {
        match self.config.acceptance {
            AcceptanceRule::AlwaysAccept => return 1.0,
            AcceptanceRule::AlwaysReject => return 0.0,
            AcceptanceRule::MetropolisHastings => {}
        }
        if proposed == current {
            return 1.0;
        }
        let z = self.agents[listener].latents[d];
        let mut diff =
            self.score_latent(listener, d, proposed, z) - self.score_latent(listener, d, current, z);
        if self.config.fault == Fault::SquaredAcceptance {
            diff *= 2.0;
        }
        diff.exp().min(1.0)
    }

    /// Samples agent `k`'s category for object `d` under `sign` and, with
    /// immediate updates, counts it at once.
    pub fn perceive(&mut self, k: usize, d: usize, sign: usize, rng: &mut RngStream) -> Result<usize> {
        let post = self.perception_distribution(k, d, sign)?;
        let z = sample_categorical(&post, rng)?;
        self.agents[k].latents[d] = z;
        if self.config.schedule == UpdateSchedule::Immediate {
            self.record(k, d);
        }
        Ok(z)
    }

    /// Overwrites agent `k`'s sign and category for object `d`, recounting
    /// the object when statistics are live.
    pub fn set_assignment(&mut self, k: usize, d: usize, sign: usize, latent: usize) {
        self.agents[k].signs[d] = sign;
        self.agents[k].latents[d] = latent;
        self.record(k, d);
    }

    fn record(&mut self, k: usize, d: usize) {
        if self.config.learning == Learning::Frozen {
            return;
        }
        let agent = &mut self.agents[k];
        let x = &self.observations[k][d];
        if let Some((m, z)) = agent.recorded[d] {
            agent.model.remove_assignment(Sign(m), Category(z), x);
        }
        let (m, z) = (agent.signs[d], agent.latents[d]);
        agent.model.add_assignment(Sign(m), Category(z), x);
        agent.recorded[d] = Some((m, z));
    }

    /// The listener's learning step after a full pass over the objects.
    pub fn learn(&mut self, k: usize) {
        if self.config.schedule == UpdateSchedule::Batched {
            for d in 0..self.n_objects() {
                self.record(k, d);
            }
        }
        if self.config.learning == Learning::Map {
            let p = PointModel::from_counts(&self.agents[k].model);
            self.agents[k].point = Some(p);
        }
    }

    /// One exchange about object `d`: both role-holders perceive under the
    /// listener's current sign, the speaker names, the listener judges.
    pub fn exchange(
        &mut self,
        speaker: usize,
        listener: usize,
        d: usize,
        speaker_rng: &mut RngStream,
        listener_rng: &mut RngStream,
    ) -> Result<ExchangeEvent> {
        let current = self.agents[listener].signs[d];
        self.perceive(speaker, d, current, speaker_rng)?;
        self.perceive(listener, d, current, listener_rng)?;
        let q = self.proposal_distribution(speaker, d)?;
        let proposed = sample_categorical_ordered(&q, &self.sign_order, speaker_rng)?;
        let gamma = self.acceptance_probability(listener, d, proposed, current);
        let u = listener_rng.uniform();
        let accepted = u < gamma;
        if accepted {
            self.agents[listener].signs[d] = proposed;
        }
        if self.config.schedule == UpdateSchedule::Immediate {
            self.record(listener, d);
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

    /// Ordered `(speaker, listener)` pairs for round `round`.
    pub fn directions(&self, round: usize) -> Vec<(usize, usize)> {
        let k = self.n_agents();
        let (a, b) = match self.config.pairing {
            Pairing::FixedPair => (0, 1),
            Pairing::RoundRobin => {
                let pairs: Vec<(usize, usize)> = (0..k)
                    .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                    .collect();
                pairs[(round - 1) % pairs.len()]
            }
            Pairing::RandomPartner => {
                let mut rng = RandomSource::new(self.config.seed)
                    .stream(&[TAG_SCHEDULE, round as u64]);
                let s = rng.index(k);
                let mut o = rng.index(k - 1);
                if o >= s {
                    o += 1;
                }
                (s, o)
            }
        };
        vec![(a, b), (b, a)]
    }

    /// Runs one round: each direction sweeps every object in ascending order
    /// and ends with the listener's learning step.
    pub fn run_round(&mut self) -> Result<Vec<ExchangeEvent>> {
        self.round += 1;
        let source = RandomSource::new(self.config.seed);
        let mut events = Vec::with_capacity(2 * self.n_objects());
        for (dir, (sp, li)) in self.directions(self.round).into_iter().enumerate() {
            let tags = [self.round as u64, dir as u64];
            let mut sp_rng = source.stream(&[TAG_SPEAKER, tags[0], tags[1]]);
            let mut li_rng = source.stream(&[TAG_LISTENER, tags[0], tags[1]]);
            for d in 0..self.n_objects() {
                events.push(self.exchange(sp, li, d, &mut sp_rng, &mut li_rng)?);
            }
            self.learn(li);
        }
        Ok(events)
    }

    /// Negative log joint of each agent's current assignment, averaged over
    /// agents and objects. This is the free energy of a point-mass `q`.
    pub fn energy(&self) -> Result<f64> {
        let mut total = 0.0;
        for (k, agent) in self.agents.iter().enumerate() {
            for d in 0..self.n_objects() {
                let (m, z) = (agent.signs[d], agent.latents[d]);
                let x = &self.observations[k][d];
                let (ll, lo) = match &agent.point {
                    Some(p) => (p.log_phi[m][z], p.log_lik_obs(z, x)),
                    None => (
                        agent.model.log_lik_latent(Sign(m), Category(z))?,
                        agent.model.log_lik_obs(Category(z), x)?,
                    ),
                };
                total -= self.prior.log_prob(m) + ll + lo;
            }
        }
        Ok(total / (self.n_agents() * self.n_objects()) as f64)
    }

    pub fn snapshot(&self, events: &[ExchangeEvent]) -> Result<RoundMetrics> {
        let acceptance_rate = (!events.is_empty()).then(|| {
            events.iter().filter(|e| e.accepted).count() as f64 / events.len() as f64
        });
        let (mut kappa, mut ari, mut agreement, mut pairs) = (0.0, 0.0, 0.0, 0.0);
        let k = self.n_agents();
        for i in 0..k {
            for j in i + 1..k {
                let (a, b) = (&self.agents[i].signs, &self.agents[j].signs);
                kappa += cohens_kappa(a, b, self.config.vocab_size)?;
                agreement += agreement_rate(a, b)?;
                if a.len() >= 2 {
                    ari += adjusted_rand_index(a, b)?;
                }
                pairs += 1.0;
            }
        }
        let ari_truth = match &self.labels {
            Some(l) if l.len() >= 2 => {
                let mut s = 0.0;
                for a in &self.agents {
                    s += adjusted_rand_index(&a.signs, l)?;
                }
                Some(s / k as f64)
            }
            _ => None,
        };
        Ok(RoundMetrics {
            round: self.round,
            acceptance_rate,
            cfe_estimate: self.energy()?,
            kappa: kappa / pairs,
            ari: ari / pairs,
            ari_truth,
            agreement: agreement / pairs,
        })
    }
}

/// Runs `config.n_rounds` rounds with a metric snapshot after initialization
/// and after every round.
pub fn run_game(cfg: &GameConfig, dataset: &Dataset, setup: GameSetup) -> Result<(GameTrace, GameState)> {
    let mut state = GameState::new(cfg, dataset, setup)?;
    let mut trace = GameTrace::new(cfg.clone());
    trace.metrics.push(state.snapshot(&[])?);
    for _ in 0..cfg.n_rounds {
        let events = state.run_round()?;
        trace.metrics.push(state.snapshot(&events)?);
        trace.events.extend(events);
    }
    Ok((trace, state))
}
