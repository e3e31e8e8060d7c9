//! Self-describing JSON checkpoints: config, every layer, optimizer state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::numcore::mlp::Parameterized;
use crate::numcore::optim::OptimizerState;
use crate::pipeline::DccfModel;

pub const CHECKPOINT_FORMAT: &str = "dccf-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub step_count: u64,
    pub model: DccfModel,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, model: DccfModel, optimizer: OptimizerState) -> Self {
        Self { format: CHECKPOINT_FORMAT.to_string(), config, step_count: optimizer.step_count, model, optimizer }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!("unsupported checkpoint format `{}`", self.format)));
        }
        self.model.check_matches(&self.config)?;
        let shapes_ok = self.optimizer.first_moment.len() == self.model.layers().len()
            && self
                .model
                .layers()
                .iter()
                .zip(&self.optimizer.first_moment)
                .zip(&self.optimizer.second_moment)
                .all(|((l, m), v)| l.param_count() == m.len() && m.len() == v.len());
        if !shapes_ok || self.step_count != self.optimizer.step_count {
            return Err(Error::data("optimizer state does not match the model"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Data { line: Some(e.line()), message: format!("malformed checkpoint: {e}") })?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
