use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::pgm::{Dataset, Observation};
use crate::prob::RandomSource;

/// Synthetic static data: object sign `m ~ uniform(M_true)`; agent `k` maps
/// it through its own category permutation, replaced by a uniform category
/// with probability `noise`; each of the `tokens` feature tokens is the
/// category's own feature with probability `1 - noise`, else uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "two")]
    pub n_agents: usize,
    pub n_objects: usize,
    pub n_true_signs: usize,
    pub n_categories: usize,
    pub n_features: usize,
    #[serde(default = "default_tokens")]
    pub tokens: u32,
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
}

fn two() -> usize {
    2
}

fn default_tokens() -> u32 {
    5
}

const TAG_LABELS: u64 = 0x6E;
const TAG_AGENT: u64 = 0x6F;
const MAX_LABEL_REDRAWS: usize = 10_000;

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0
            || self.n_objects == 0
            || self.n_true_signs == 0
            || self.n_categories == 0
            || self.n_features == 0
            || self.tokens == 0
        {
            return Err(config("generator sizes must be positive"));
        }
        if self.n_objects < self.n_true_signs {
            return Err(config("D must be at least M_true so every sign can appear"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(config("noise must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Builds the dataset; labels are redrawn until every true sign occurs.
pub fn generate_dataset(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let source = RandomSource::new(spec.seed);
    let mut rng = source.stream(&[TAG_LABELS]);
    let mut labels = Vec::new();
    for _ in 0..MAX_LABEL_REDRAWS {
        labels = (0..spec.n_objects)
            .map(|_| rng.index(spec.n_true_signs))
            .collect::<Vec<_>>();
        let mut seen = vec![false; spec.n_true_signs];
        labels.iter().for_each(|m| seen[*m] = true);
        if seen.iter().all(|s| *s) {
            break;
        }
    }
    if (0..spec.n_true_signs).any(|m| !labels.contains(&m)) {
        return Err(config("could not draw labels covering every sign"));
    }
    let (c, f) = (spec.n_categories, spec.n_features);
    let observations = (0..spec.n_agents)
        .map(|k| {
            let mut rng = source.stream(&[TAG_AGENT, k as u64]);
            // Fisher-Yates permutation of categories for this agent
            let mut perm: Vec<usize> = (0..c).collect();
            for i in (1..c).rev() {
                perm.swap(i, rng.index(i + 1));
            }
            labels
                .iter()
                .map(|m| {
                    let mut z = perm[m % c];
                    if spec.noise > 0.0 && rng.uniform() < spec.noise {
                        z = rng.index(c);
                    }
                    let mut counts = vec![0u32; f];
                    for _ in 0..spec.tokens {
                        let feat = if spec.noise > 0.0 && rng.uniform() < spec.noise {
                            rng.index(f)
                        } else {
                            z % f
                        };
                        counts[feat] += 1;
                    }
                    Observation::new(counts)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::new(observations, Some(labels))?;
    ds.provenance = Some(serde_json::to_value(spec)?);
    Ok(ds)
}
