use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Observation;
use crate::error::{config, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Static observations: `observations[k][d]` is agent `k`'s view of object `d`.
///
/// JSON layout:
/// `{"schema_version":1,"F":..,"D":..,"K":..,"observations":[[[u32;F];D];K],"labels":[..]?}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(rename = "F")]
    pub n_features: usize,
    #[serde(rename = "D")]
    pub n_objects: usize,
    #[serde(rename = "K")]
    pub n_agents: usize,
    pub observations: Vec<Vec<Observation>>,
    /// Ground-truth sign per object, when generated synthetically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

fn schema_version() -> u32 {
    DATASET_SCHEMA_VERSION
}

impl Dataset {
    pub fn new(observations: Vec<Vec<Observation>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n_agents = observations.len();
        let n_objects = observations.first().map_or(0, Vec::len);
        let n_features = observations
            .first()
            .and_then(|o| o.first())
            .map_or(0, Observation::n_features);
        let ds = Self {
            schema_version: DATASET_SCHEMA_VERSION,
            n_features,
            n_objects,
            n_agents,
            observations,
            labels,
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_objects == 0 || self.n_features == 0 {
            return Err(config("dataset sizes F, D, K must be positive"));
        }
        if self.observations.len() != self.n_agents {
            return Err(config(format!(
                "dataset declares K={} but has {} agent blocks",
                self.n_agents,
                self.observations.len()
            )));
        }
        for (k, block) in self.observations.iter().enumerate() {
            if block.len() != self.n_objects {
                return Err(config(format!(
                    "agent {k} has {} observations, expected D={}",
                    block.len(),
                    self.n_objects
                )));
            }
            for (d, x) in block.iter().enumerate() {
                if x.n_features() != self.n_features {
                    return Err(config(format!(
                        "observation [{k}][{d}] has {} features, expected F={}",
                        x.n_features(),
                        self.n_features
                    )));
                }
                if x.total() == 0 {
                    return Err(config(format!("observation [{k}][{d}] is empty")));
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n_objects {
                return Err(config("labels length differs from D"));
            }
        }
        Ok(())
    }

    pub fn observation(&self, agent: usize, object: usize) -> &Observation {
        &self.observations[agent][object]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Self = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Reorders objects: new object `i` is old object `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let observations = self
            .observations
            .iter()
            .map(|block| order.iter().map(|d| block[*d].clone()).collect())
            .collect();
        Self {
            observations,
            labels: self
                .labels
                .as_ref()
                .map(|l| order.iter().map(|d| l[*d]).collect()),
            ..self.clone()
        }
    }
}

/// Observation sequences: `sequences[k][d][t]` is a feature-count vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(rename = "F")]
    pub n_features: usize,
    #[serde(rename = "D")]
    pub n_objects: usize,
    #[serde(rename = "K")]
    pub n_agents: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sequences: Vec<Vec<Vec<Observation>>>,
}

impl SequenceDataset {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_objects == 0 || self.n_features == 0 || self.horizon == 0 {
            return Err(config("sequence dataset sizes must be positive"));
        }
        if self.sequences.len() != self.n_agents {
            return Err(config("sequence dataset agent count mismatch"));
        }
        for block in &self.sequences {
            if block.len() != self.n_objects {
                return Err(config("sequence dataset object count mismatch"));
            }
            for seq in block {
                if seq.len() != self.horizon {
                    return Err(config("sequence length differs from T"));
                }
                if seq.iter().any(|x| x.n_features() != self.n_features) {
                    return Err(config("sequence frame feature count differs from F"));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Self = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }
}
