//! Trains and evaluates component-removal variants side by side.

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::train::{evaluate, train};
use crate::config::{Ablation, TrainConfig};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub flags: Ablation,
}

impl AblationVariant {
    pub fn new(name: &str, flags: Ablation) -> Self {
        Self { name: name.to_string(), flags }
    }

    pub fn full() -> Self {
        Self::new("full", Ablation::default())
    }
}

/// The nine removal rows: each auxiliary loss, both, evolution, tension
/// weighting, conflicts, consensus and each view.
pub fn table_variants() -> Vec<AblationVariant> {
    let a = Ablation::default;
    vec![
        AblationVariant::new("no_fact_loss", Ablation { no_fact_loss: true, ..a() }),
        AblationVariant::new("no_sentiment_loss", Ablation { no_sentiment_loss: true, ..a() }),
        AblationVariant::new("no_aux_losses", Ablation { no_fact_loss: true, no_sentiment_loss: true, ..a() }),
        AblationVariant::new("no_evolution", Ablation { no_evolution: true, ..a() }),
        AblationVariant::new("no_tension_weighting", Ablation { no_tension_weighting: true, ..a() }),
        AblationVariant::new("no_conflict", Ablation { no_conflict: true, ..a() }),
        AblationVariant::new("no_consensus", Ablation { no_consensus: true, ..a() }),
        AblationVariant::new("no_fact_view", Ablation { no_fact_view: true, ..a() }),
        AblationVariant::new("no_sentiment_view", Ablation { no_sentiment_view: true, ..a() }),
    ]
}

pub fn variant_by_name(name: &str) -> Result<AblationVariant> {
    if name == "full" {
        return Ok(AblationVariant::full());
    }
    table_variants()
        .into_iter()
        .find(|v| v.name == name)
        .ok_or_else(|| Error::config(format!("unknown ablation variant `{name}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub config_hash: String,
    pub effective_config: TrainConfig,
    pub best_epoch: Option<usize>,
    pub metrics: MetricsReport,
}

/// Config for a variant: its flags added to whatever `base` already disables.
pub fn variant_config(base: &TrainConfig, variant: &AblationVariant) -> Result<TrainConfig> {
    let mut c = base.clone();
    c.ablation = base.ablation.union(variant.flags);
    c.validate()?;
    Ok(c)
}

pub fn run_variant(base: &TrainConfig, dataset: &Dataset, variant: &AblationVariant) -> Result<VariantReport> {
    let config = variant_config(base, variant)?;
    let outcome = train(&config, dataset)?;
    let metrics = evaluate(&outcome.model, dataset, Split::Test)?;
    Ok(VariantReport {
        name: variant.name.clone(),
        config_hash: config.hash(),
        effective_config: config.effective(),
        best_epoch: outcome.best_epoch,
        metrics,
    })
}

/// One report per variant, in order. All flag sets are validated before any training.
pub fn run_ablation(base: &TrainConfig, dataset: &Dataset, variants: &[AblationVariant]) -> Result<Vec<VariantReport>> {
    for v in variants {
        variant_config(base, v)?;
    }
    variants.iter().map(|v| run_variant(base, dataset, v)).collect()
}

/// Plain-text comparison table; deltas are against the first row.
pub fn render_table(reports: &[VariantReport]) -> String {
    let mut out =
        format!("{:<22} {:>8} {:>8} {:>8} {:>8} {:>9}\n", "variant", "acc", "f1_fake", "f1_real", "auc", "d_acc");
    let base = reports.first().map(|r| r.metrics.accuracy).unwrap_or(0.0);
    for r in reports {
        let m = &r.metrics;
        let auc = m.auc.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        out += &format!(
            "{:<22} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>+9.4}\n",
            r.name,
            m.accuracy,
            m.f1_fake,
            m.f1_real,
            auc,
            m.accuracy - base
        );
    }
    out
}
