//! Finite-difference check of the whole detector on a tiny instance.

use serde::{Deserialize, Serialize};

use crate::config::{Ablation, TrainConfig};
use crate::data::{generate_synthetic, SynthSpec};
use crate::error::{Error, Result};
use crate::numcore::gradcheck::{check_gradients, GradCheckReport, FD_STEP};
use crate::numcore::mlp::Parameterized;
use crate::numcore::rng::Rng;
use crate::pipeline::DccfModel;
use crate::tensionfield::TensionMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSettings {
    pub d: usize,
    pub iterations: usize,
    pub tension_mode: TensionMode,
    pub shared_transform: bool,
    pub ablation: Ablation,
    pub seed: u64,
    pub step: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            d: 4,
            iterations: 2,
            tension_mode: TensionMode::Elementwise,
            shared_transform: true,
            ablation: Ablation::default(),
            seed: 0,
            step: FD_STEP,
        }
    }
}

impl GradCheckSettings {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            d_text: 5,
            d_image: 6,
            d: self.d,
            d_v: self.d,
            objects: 3,
            polarity: 2,
            iterations: self.iterations,
            tension_mode: self.tension_mode,
            shared_transform: self.shared_transform,
            seed: self.seed,
            ablation: self.ablation,
            ..TrainConfig::default()
        }
    }
}

/// Analytic gradients of one sample's total loss against central differences,
/// for every parameter of a freshly initialized model.
pub fn pipeline_gradcheck(settings: &GradCheckSettings) -> Result<GradCheckReport> {
    let config = settings.config();
    config.validate()?;
    let mut model = DccfModel::new(&config, &mut Rng::derive(settings.seed, &[0x6c]))?;
    let spec = SynthSpec {
        n_samples: 2,
        d_text: config.d_text,
        d_image: config.d_image,
        objects: config.objects,
        polarity: config.polarity,
        seed: settings.seed,
        fact_latent: 3,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec)?;
    let sample = data.samples.first().ok_or_else(|| Error::numerical("gradcheck sample missing"))?.clone();
    model.zero_grad();
    model.accumulate_gradients(&sample, 1.0)?;
    check_gradients(&model, |m: &DccfModel| Ok(m.sample_loss(&sample)?.total), settings.step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_passes() {
        let r = pipeline_gradcheck(&GradCheckSettings::default()).unwrap();
        assert!(r.checked > 100);
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn scalar_mode_unshared_passes() {
        let s = GradCheckSettings {
            tension_mode: TensionMode::Scalar,
            shared_transform: false,
            seed: 3,
            ..GradCheckSettings::default()
        };
        let r = pipeline_gradcheck(&s).unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }
}
