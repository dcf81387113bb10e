use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::GameConfig;
use crate::error::Result;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// One speaker-to-listener exchange about one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEvent {
    pub round: usize,
    pub speaker: usize,
    pub listener: usize,
    pub object: usize,
    /// Listener's sign before the exchange.
    pub current: usize,
    pub proposed: usize,
    pub gamma: f64,
    /// The uniform draw compared against `gamma`.
    pub u: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// `None` for the snapshot taken before the first round.
    pub acceptance_rate: Option<f64>,
    pub cfe_estimate: f64,
    /// Means over agent pairs.
    pub kappa: f64,
    pub ari: f64,
    /// Mean ARI of each agent's signs against the dataset labels.
    pub ari_truth: Option<f64>,
    pub agreement: f64,
}

/// JSONL record layout: a header, then per round its exchanges followed by
/// its metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum TraceRecord {
    Header {
        schema_version: u32,
        seed: u64,
        config: GameConfig,
        /// Anything else needed to re-derive the run, such as the experiment
        /// file and dataset source.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        provenance: Option<serde_json::Value>,
    },
    Exchange(ExchangeEvent),
    Metrics(RoundMetrics),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameTrace {
    pub config: GameConfig,
    pub events: Vec<ExchangeEvent>,
    /// Index 0 is the post-initialization snapshot.
    pub metrics: Vec<RoundMetrics>,
    pub provenance: Option<serde_json::Value>,
}

impl GameTrace {
    pub fn new(config: GameConfig) -> Self {
        Self {
            config,
            events: Vec::new(),
            metrics: Vec::new(),
            provenance: None,
        }
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        let mut out = vec![TraceRecord::Header {
            schema_version: TRACE_SCHEMA_VERSION,
            seed: self.config.seed,
            config: self.config.clone(),
            provenance: self.provenance.clone(),
        }];
        let mut events = self.events.iter().peekable();
        for m in &self.metrics {
            while let Some(e) = events.next_if(|e| e.round <= m.round) {
                out.push(TraceRecord::Exchange(e.clone()));
            }
            out.push(TraceRecord::Metrics(m.clone()));
        }
        out.extend(events.cloned().map(TraceRecord::Exchange));
        out
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in self.records() {
            s.push_str(&serde_json::to_string(&r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut trace: Option<Self> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: TraceRecord = serde_json::from_str(line)?;
            match (rec, trace.as_mut()) {
                (
                    TraceRecord::Header {
                        config, provenance, ..
                    },
                    None,
                ) => {
                    let mut t = Self::new(config);
                    t.provenance = provenance;
                    trace = Some(t);
                }
                (TraceRecord::Exchange(e), Some(t)) => t.events.push(e),
                (TraceRecord::Metrics(m), Some(t)) => t.metrics.push(m),
                _ => {
                    return Err(crate::error::config(
                        "trace must start with exactly one header record",
                    ))
                }
            }
        }
        trace.ok_or_else(|| crate::error::config("empty trace"))
    }

    /// Per-round metrics as CSV, preceded by `#` lines carrying the schema
    /// version and the resolved config.
    pub fn metrics_csv(&self) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "# schema_version={TRACE_SCHEMA_VERSION}").unwrap();
        writeln!(s, "# seed={}", self.config.seed).unwrap();
        writeln!(s, "# config={}", serde_json::to_string(&self.config)?).unwrap();
        if let Some(p) = &self.provenance {
            writeln!(s, "# provenance={}", serde_json::to_string(p)?).unwrap();
        }
        s.push_str("round,acceptance_rate,cfe_estimate,kappa,ari,ari_truth,agreement\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for m in &self.metrics {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                m.round,
                opt(m.acceptance_rate),
                m.cfe_estimate,
                m.kappa,
                m.ari,
                opt(m.ari_truth),
                m.agreement
            )
            .unwrap();
        }
        Ok(s)
    }
}
