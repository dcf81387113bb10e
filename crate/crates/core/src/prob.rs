//! Log-domain categorical distributions, Dirichlet pseudo-counts and the
//! seeded random source shared by every simulation.
//!
//! All probabilities live in natural-log space. A [`LogProbVector`] may hold
//! `-inf` entries for zero-probability outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};

/// Tolerance used when checking that a log-probability vector is normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Stable `log Σ exp(v_i)`.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(contract("logsumexp of an empty list"));
    }
    Ok(logsumexp_unchecked(values))
}

pub(crate) fn logsumexp_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProbVector {
    values: Vec<f64>,
}

impl LogProbVector {
    /// Wraps already-normalized log-probabilities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let lse = logsumexp(&values)?;
        if !(lse.abs() <= NORMALIZATION_TOL) {
            return Err(contract(format!(
                "log-probabilities not normalized (logsumexp = {lse})"
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v > 1e-12) {
            return Err(contract("log-probability entry is NaN or positive"));
        }
        Ok(Self { values })
    }

    /// Normalizes arbitrary log-weights. At least one weight must be finite.
    pub fn from_log_weights(mut weights: Vec<f64>) -> Result<Self> {
        let lse = logsumexp(&weights)?;
        if !lse.is_finite() {
            return Err(domain(format!("cannot normalize log-weights (logsumexp = {lse})")));
        }
        for w in &mut weights {
            *w -= lse;
        }
        Ok(Self { values: weights })
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(domain("probabilities must be finite and non-negative"));
        }
        Self::from_log_weights(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs a non-empty support");
        Self { values: vec![-(n as f64).ln(); n] }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        assert!(index < n, "one-hot index out of range");
        let mut values = vec![f64::NEG_INFINITY; n];
        values[index] = 0.0;
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.exp()).collect()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.values[i].exp()
    }

    /// Returns the vector with entry `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for (i, v) in self.values.iter().enumerate() {
            values[perm[i]] = *v;
        }
        Self { values }
    }

    pub fn entropy(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| -v.exp() * v)
            .sum()
    }
}

/// `KL(p ‖ q)` for two normalized vectors over the same support.
pub fn kl_divergence(p: &LogProbVector, q: &LogProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(contract(format!(
            "support size mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (pi, qi) in p.values.iter().zip(&q.values) {
        if *pi == f64::NEG_INFINITY {
            continue;
        }
        if *qi == f64::NEG_INFINITY {
            return Err(domain("q assigns zero probability where p has mass"));
        }
        kl += pi.exp() * (pi - qi);
    }
    Ok(kl)
}

/// Total-variation distance between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "tv_distance needs equal supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Dirichlet pseudo-counts: prior concentration plus accumulated statistics.
///
/// The prior and the statistics are stored apart so that integer-valued
/// updates stay exact and can be audited against a rebuild.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletCounts {
    prior: Vec<f64>,
    stats: Vec<f64>,
    prior_total: f64,
    stats_total: f64,
}

impl DirichletCounts {
    /// Symmetric prior with concentration `alpha` on every symbol.
    pub fn symmetric(n: usize, alpha: f64) -> Self {
        assert!(n > 0, "Dirichlet needs at least one symbol");
        Self {
            prior: vec![alpha; n],
            stats: vec![0.0; n],
            prior_total: alpha * n as f64,
            stats_total: 0.0,
        }
    }

    /// Builds counts from a prior concentration vector and no statistics.
    pub fn from_prior(prior: Vec<f64>) -> Result<Self> {
        if prior.is_empty() {
            return Err(contract("Dirichlet needs at least one symbol"));
        }
        if prior.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(domain("pseudo-counts must be finite and non-negative"));
        }
        let n = prior.len();
        let prior_total = prior.iter().sum();
        Ok(Self {
            prior,
            stats: vec![0.0; n],
            prior_total,
            stats_total: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    pub fn pseudo_counts(&self) -> Vec<f64> {
        self.prior.iter().zip(&self.stats).map(|(a, n)| a + n).collect()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Accumulated sufficient statistics, without the prior.
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn count(&self, i: usize) -> f64 {
        self.prior[i] + self.stats[i]
    }

    pub fn total(&self) -> f64 {
        self.prior_total + self.stats_total
    }

    pub fn add(&mut self, i: usize, weight: f64) {
        self.stats[i] += weight;
        self.stats_total += weight;
    }

    /// Removes previously added mass. Panics if this would drive a statistic
    /// negative, which always indicates broken bookkeeping.
    pub fn remove(&mut self, i: usize, weight: f64) {
        let next = self.stats[i] - weight;
        assert!(next >= -1e-9, "statistic {i} would become negative ({next})");
        self.stats[i] = next.max(0.0);
        self.stats_total -= weight;
    }

    /// Posterior-predictive probability of symbol `i`.
    pub fn predictive(&self, i: usize) -> f64 {
        self.count(i) / self.total()
    }

    pub fn log_predictive(&self, i: usize) -> f64 {
        self.count(i).ln() - self.total().ln()
    }

    pub fn predictive_dist(&self) -> LogProbVector {
        LogProbVector {
            values: (0..self.len()).map(|i| self.log_predictive(i)).collect(),
        }
    }
}

/// Seed plus the derivation rule for independent sub-streams.
///
/// Sub-streams are keyed by a list of tags (for example agent and round) so
/// that adding instrumentation never shifts the draws of another stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSource {
    seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, tags: &[u64]) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream_id(tags));
        RngStream { rng }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream_id(tags: &[u64]) -> u64 {
    tags.iter()
        .fold(0x5EED_0F_57E4_u64, |acc, t| splitmix64(acc ^ splitmix64(*t)))
}

/// One reproducible stream of uniform draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    /// A uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`, from one uniform draw.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

/// Draws an index with probability `exp(dist[i])`, consuming one uniform.
pub fn sample_categorical(dist: &LogProbVector, rng: &mut RngStream) -> Result<usize> {
    let u = rng.uniform();
    categorical_from_uniform(dist.values(), None, u)
}

/// As [`sample_categorical`], but accumulates mass in the given index order.
///
/// Relabeling the support by a permutation and permuting `order` the same way
/// maps every uniform draw to the relabeled outcome.
pub fn sample_categorical_ordered(
    dist: &LogProbVector,
    order: &[usize],
    rng: &mut RngStream,
) -> Result<usize> {
    let u = rng.uniform();
    categorical_from_uniform(dist.values(), Some(order), u)
}

pub(crate) fn categorical_from_uniform(
    log_probs: &[f64],
    order: Option<&[usize]>,
    u: f64,
) -> Result<usize> {
    let lse = logsumexp(log_probs)?;
    if !(lse.abs() <= NORMALIZATION_TOL) {
        return Err(contract(format!(
            "sampling from an unnormalized distribution (logsumexp = {lse})"
        )));
    }
    let n = log_probs.len();
    let index_at = |k: usize| order.map_or(k, |o| o[k]);
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for k in 0..n {
        let i = index_at(k);
        let p = log_probs[i].exp();
        if p > 0.0 {
            last_positive = Some(i);
            cumulative += p;
            if u < cumulative {
                return Ok(i);
            }
        }
    }
    // u landed in the rounding gap above the accumulated mass
    last_positive.ok_or_else(|| contract("distribution has no mass"))
}
