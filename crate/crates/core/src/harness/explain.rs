//! Per-sample attribution: where each view finds its conflict and how the
//! tension evolved to get there.

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::Result;
use crate::judgment::Label;
use crate::numcore::ops;
use crate::pipeline::DccfModel;
use crate::tensionfield::{ConflictConsensus, EvolutionTrace, TraceSummary};

/// Names of the two features in each space, by index.
pub const FEATURE_NAMES: [&str; 2] = ["text", "image"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewExplanation {
    pub conflict_pair: (usize, usize),
    pub conflict_features: (String, String),
    pub conflict_tension: f64,
    pub consensus_norm: f64,
    pub trace: TraceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub id: String,
    pub prob_fake: f64,
    pub label: Label,
    pub true_label: Label,
    pub fact: ViewExplanation,
    pub sentiment: ViewExplanation,
}

impl ExplainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::error::Error::data(format!("malformed report: {e}")))
    }
}

fn view(out: &ConflictConsensus, trace: &EvolutionTrace) -> ViewExplanation {
    let name = |i: usize| FEATURE_NAMES.get(i).map_or_else(|| format!("feature{i}"), |s| s.to_string());
    ViewExplanation {
        conflict_pair: out.pair,
        conflict_features: (name(out.pair.0), name(out.pair.1)),
        conflict_tension: out.pair_tension,
        consensus_norm: ops::norm(&out.consensus),
        trace: trace.summary(),
    }
}

pub fn explain(model: &DccfModel, sample: &Sample) -> Result<ExplainReport> {
    let inf = model.infer(&sample.raw)?;
    Ok(ExplainReport {
        id: sample.id.clone(),
        prob_fake: inf.prediction.prob_fake,
        label: inf.prediction.label,
        true_label: sample.label,
        fact: view(&inf.fact, &inf.fact_trace),
        sentiment: view(&inf.sentiment, &inf.sentiment_trace),
    })
}
