//! Training configuration: every dimension, hyperparameter and ablation switch.
//!
//! Config files are flat TOML documents; every key is optional and unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::judgment::LossWeights;
use crate::tensionfield::TensionMode;

/// Component switches for ablation runs. All `false` is the full model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub no_fact_view: bool,
    pub no_sentiment_view: bool,
    pub no_evolution: bool,
    pub no_tension_weighting: bool,
    pub no_conflict: bool,
    pub no_consensus: bool,
    pub no_fact_loss: bool,
    pub no_sentiment_loss: bool,
}

impl Ablation {
    pub fn is_full(&self) -> bool {
        *self == Ablation::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.no_fact_view && self.no_sentiment_view {
            return Err(Error::config("cannot drop both the fact and the sentiment view"));
        }
        if self.no_conflict && self.no_consensus {
            return Err(Error::config("cannot drop both the conflict and the consensus metric"));
        }
        if self.no_evolution && self.no_tension_weighting {
            return Err(Error::config("tension weighting only exists inside evolution; drop one or the other"));
        }
        Ok(())
    }

    /// Union of two flag sets.
    pub fn union(self, other: Ablation) -> Ablation {
        Ablation {
            no_fact_view: self.no_fact_view || other.no_fact_view,
            no_sentiment_view: self.no_sentiment_view || other.no_sentiment_view,
            no_evolution: self.no_evolution || other.no_evolution,
            no_tension_weighting: self.no_tension_weighting || other.no_tension_weighting,
            no_conflict: self.no_conflict || other.no_conflict,
            no_consensus: self.no_consensus || other.no_consensus,
            no_fact_loss: self.no_fact_loss || other.no_fact_loss,
            no_sentiment_loss: self.no_sentiment_loss || other.no_sentiment_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d_text: usize,
    pub d_image: usize,
    /// Dimension of the fact and sentiment spaces.
    pub d: usize,
    /// Dimension of each standardized view vector.
    pub d_v: usize,
    /// Number of object pseudo-label classes.
    pub objects: usize,
    /// Length of the sentiment polarity vector.
    pub polarity: usize,
    pub iterations: usize,
    pub tau: f64,
    pub lambda_fact: f64,
    pub lambda_sentiment: f64,
    pub tension_mode: TensionMode,
    /// One transform reused by every iteration (otherwise one per iteration).
    pub shared_transform: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    #[serde(flatten)]
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_text: 32,
            d_image: 32,
            d: 16,
            d_v: 16,
            objects: 80,
            polarity: 4,
            iterations: 4,
            tau: 1.5,
            lambda_fact: 0.075,
            lambda_sentiment: 0.075,
            tension_mode: TensionMode::Elementwise,
            shared_transform: true,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 10,
            seed: 0,
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_text", self.d_text),
            ("d_image", self.d_image),
            ("d", self.d),
            ("d_v", self.d_v),
            ("objects", self.objects),
            ("polarity", self.polarity),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.iterations == 0 && !self.ablation.no_evolution {
            return Err(Error::config("iterations must be >= 1 (use no_evolution to skip evolution)"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        LossWeights::new(self.lambda_fact, self.lambda_sentiment)?;
        crate::data::validate_fractions(self.split_fractions())?;
        self.ablation.validate()
    }

    pub fn split_fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.val_fraction, self.test_fraction]
    }

    /// Applies the ablation switches to the hyperparameters they override.
    pub fn effective(&self) -> TrainConfig {
        let mut c = self.clone();
        if c.ablation.no_evolution {
            c.iterations = 0;
        }
        if c.ablation.no_fact_loss {
            c.lambda_fact = 0.0;
        }
        if c.ablation.no_sentiment_loss {
            c.lambda_sentiment = 0.0;
        }
        c
    }

    pub fn loss_weights(&self) -> LossWeights {
        let e = self.effective();
        LossWeights { fact: e.lambda_fact, sentiment: e.lambda_sentiment }
    }

    /// Hex digest identifying the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.effective()).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::config(format!("config: {e}")))?;
        reject_unknown_keys(&table, &TrainConfig::default())?;
        let config: TrainConfig =
            table.try_into().map_err(|e: toml::de::Error| Error::config(format!("config: {e}")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Errors on keys that the default value of `T` does not serialize.
pub(crate) fn reject_unknown_keys<T: Serialize>(table: &toml::Table, defaults: &T) -> Result<()> {
    let known = toml::Table::try_from(defaults).expect("defaults serialize");
    if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
        return Err(Error::config(format!("unknown config key `{key}`")));
    }
    Ok(())
}
