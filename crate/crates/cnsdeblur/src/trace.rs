//! Trace files: a JSON document per run and a CSV view of one channel.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::schemas::{ConvergenceTrace, TraceRecord};

pub const CSV_HEADER: &str = "k,residual_msq,lambda,theta,dt_lower,dt_upper_metric";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDocument {
    pub schema: String,
    pub config_echo: PipelineConfig,
    /// Per-channel iteration records.
    pub channels: Vec<Vec<TraceRecord>>,
}

impl TraceDocument {
    pub fn new(config: &PipelineConfig, traces: &[ConvergenceTrace]) -> Self {
        Self {
            schema: config.schema.name().to_string(),
            config_echo: config.clone(),
            channels: traces.iter().map(|t| t.records.clone()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("trace document: {e}")))
    }

    pub fn channel_csv(&self, channel: usize) -> Result<String> {
        let records = self.channels.get(channel).ok_or_else(|| {
            Error::Config(format!("channel {channel} out of range (have {})", self.channels.len()))
        })?;
        Ok(records_to_csv(records))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// CSV with [`CSV_HEADER`]; absent values are empty cells.
pub fn records_to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{},{}",
            r.k,
            r.residual_msq,
            opt(r.lambda),
            opt(r.theta),
            opt(r.dt_lower),
            opt(r.dt_upper_metric)
        );
    }
    out
}
