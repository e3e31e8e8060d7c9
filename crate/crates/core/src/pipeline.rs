//! The full detector: projection, two tension fields, fusion and judgment.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Sample;
use crate::disentangler::{AuxTargets, DisentangledFeatures, HeadDims, ProjectionHeads, RawEmbeddings};
use crate::error::{Error, Result};
use crate::judgment::{self, ConflictAttribution, Label, LossWeights, Prediction, ViewVectors};
use crate::numcore::mlp::{DenseLayer, Mlp, Parameterized};
use crate::numcore::ops;
use crate::numcore::rng::Rng;
use crate::tensionfield::{
    ConflictConsensus, DarfuUnit, EvolutionTrace, FeatureSpace, MetricSwitches, SpaceTag, TensionField, Weighting,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSwitches {
    pub fact: bool,
    pub sentiment: bool,
}

impl Default for ViewSwitches {
    fn default() -> Self {
        Self { fact: true, sentiment: true }
    }
}

/// Every trainable part of the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccfModel {
    pub heads: ProjectionHeads,
    pub fact_field: TensionField,
    pub sentiment_field: TensionField,
    pub classifier: Mlp,
    pub views: ViewSwitches,
    pub loss_weights: LossWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub final_loss: f64,
    pub fact: f64,
    pub sentiment: f64,
}

/// Everything a forward pass produces, for explanation and tests.
#[derive(Debug, Clone)]
pub struct Inference {
    pub features: DisentangledFeatures,
    pub fact: ConflictConsensus,
    pub fact_trace: EvolutionTrace,
    pub sentiment: ConflictConsensus,
    pub sentiment_trace: EvolutionTrace,
    pub fused: Vec<f64>,
    pub prediction: Prediction,
}

pub fn fact_space(f: &DisentangledFeatures) -> Result<FeatureSpace> {
    FeatureSpace::new(vec![f.fact_text.clone(), f.fact_image.clone()], SpaceTag::Fact)
}

pub fn sentiment_space(f: &DisentangledFeatures) -> Result<FeatureSpace> {
    FeatureSpace::new(vec![f.sent_text.clone(), f.sent_image.clone()], SpaceTag::Sentiment)
}

impl DccfModel {
    /// Fresh parameters for the effective form of `config`.
    pub fn new(config: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let c = config.effective();
        let heads = ProjectionHeads::new(
            HeadDims { d_text: c.d_text, d_image: c.d_image, d: c.d, objects: c.objects, polarity: c.polarity },
            rng,
        )?;
        let field = |rng: &mut Rng| -> Result<TensionField> {
            let mut unit = DarfuUnit::new(c.d, c.tau, c.iterations, c.tension_mode, c.shared_transform, rng)?;
            if c.ablation.no_tension_weighting {
                unit.weighting = Weighting::Uniform;
            }
            let mut f = TensionField::new(unit, c.d_v, rng)?;
            f.switches = MetricSwitches { conflict: !c.ablation.no_conflict, consensus: !c.ablation.no_consensus };
            Ok(f)
        };
        let fact_field = field(rng)?;
        let sentiment_field = field(rng)?;
        let classifier = judgment::new_classifier(c.d_v, rng)?;
        Ok(Self {
            heads,
            fact_field,
            sentiment_field,
            classifier,
            views: ViewSwitches { fact: !c.ablation.no_fact_view, sentiment: !c.ablation.no_sentiment_view },
            loss_weights: config.loss_weights(),
        })
    }

    /// Checks that `self` has exactly the architecture `config` would build.
    pub fn check_matches(&self, config: &TrainConfig) -> Result<()> {
        let reference = DccfModel::new(config, &mut Rng::new(0))?;
        let shapes = |m: &DccfModel| -> Vec<(usize, usize, crate::numcore::Activation)> {
            m.layers().iter().map(|l| (l.in_dim(), l.out_dim(), l.activation)).collect()
        };
        let same_settings = |a: &TensionField, b: &TensionField| {
            a.switches == b.switches
                && a.unit.iterations == b.unit.iterations
                && a.unit.tau == b.unit.tau
                && a.unit.mode == b.unit.mode
                && a.unit.weighting == b.unit.weighting
        };
        if shapes(self) != shapes(&reference)
            || self.views != reference.views
            || self.loss_weights != reference.loss_weights
            || !same_settings(&self.fact_field, &reference.fact_field)
            || !same_settings(&self.sentiment_field, &reference.sentiment_field)
        {
            return Err(Error::config("model parameters do not match the stored configuration"));
        }
        Ok(())
    }

    pub fn d_v(&self) -> usize {
        self.fact_field.standardizer.out_dim()
    }

    fn views(&self, fact: &ConflictConsensus, sentiment: &ConflictConsensus) -> ViewVectors {
        let d_v = self.d_v();
        ViewVectors {
            fact: if self.views.fact { fact.standardized.clone() } else { vec![0.0; d_v] },
            sentiment: if self.views.sentiment { sentiment.standardized.clone() } else { vec![0.0; d_v] },
        }
    }

    pub fn infer(&self, raw: &RawEmbeddings) -> Result<Inference> {
        let features = self.heads.project(raw)?;
        let (fact, fact_trace) = self.fact_field.forward(&fact_space(&features)?)?;
        let (sentiment, sentiment_trace) = self.sentiment_field.forward(&sentiment_space(&features)?)?;
        let fused = judgment::fuse_views(&self.views(&fact, &sentiment))?;
        let mut prediction = judgment::classify(&self.classifier, &fused)?;
        prediction.fact_conflict = Some(ConflictAttribution { pair: fact.pair, tension: fact.pair_tension });
        prediction.sentiment_conflict =
            Some(ConflictAttribution { pair: sentiment.pair, tension: sentiment.pair_tension });
        Ok(Inference { features, fact, fact_trace, sentiment, sentiment_trace, fused, prediction })
    }

    pub fn predict(&self, raw: &RawEmbeddings) -> Result<Prediction> {
        Ok(self.infer(raw)?.prediction)
    }

    pub fn loss(&self, raw: &RawEmbeddings, targets: &AuxTargets, label: Label) -> Result<LossBreakdown> {
        let inference = self.infer(raw)?;
        let final_loss = judgment::final_loss(inference.prediction.prob_fake, label);
        let fact = self.heads.fact_loss(&inference.features, targets)?;
        let sentiment = self.heads.sentiment_loss(&inference.features, targets)?;
        let total = judgment::total_loss(final_loss, fact, sentiment, self.loss_weights)?;
        Ok(LossBreakdown { total, final_loss, fact, sentiment })
    }

    pub fn sample_loss(&self, sample: &Sample) -> Result<LossBreakdown> {
        self.loss(&sample.raw, &sample.targets, sample.label)
    }

    /// Forward and backward for one sample; gradients of `scale * total`
    /// are added to every layer's gradient buffers.
    pub fn accumulate_gradients(&mut self, sample: &Sample, scale: f64) -> Result<LossBreakdown> {
        let (features, proj_tape) = self.heads.project_tape(&sample.raw)?;
        let fact_tape = self.fact_field.forward_tape(&fact_space(&features)?)?;
        let sent_tape = self.sentiment_field.forward_tape(&sentiment_space(&features)?)?;
        let fused = judgment::fuse_views(&self.views(&fact_tape.output, &sent_tape.output))?;
        let (prob, cls_tape) = self.classifier.forward_tape(&fused)?;
        let prob_fake = prob[0];
        let target = sample.label.target();
        let final_loss = ops::bce_mean(&[prob_fake], &[target]);

        let w = self.loss_weights;
        let grad_prob = ops::bce_mean_grad(&[prob_fake], &[target])[0] * w.final_weight() * scale;
        let grad_fused = self.classifier.backward(&cls_tape, &[grad_prob])?;
        let d_v = self.d_v();
        let d = features.fact_text.len();

        let mut grads = DisentangledFeatures::zeros(d);
        if self.views.fact {
            let g = self.fact_field.backward(&fact_tape, &grad_fused[..d_v])?;
            grads.fact_text = g[0].clone();
            grads.fact_image = g[1].clone();
        }
        if self.views.sentiment {
            let g = self.sentiment_field.backward(&sent_tape, &grad_fused[d_v..])?;
            grads.sent_text = g[0].clone();
            grads.sent_image = g[1].clone();
        }
        let (fact, g_fact) = self.heads.fact_loss_backward(&features, &sample.targets, w.fact * scale)?;
        let (sentiment, g_sent) =
            self.heads.sentiment_loss_backward(&features, &sample.targets, w.sentiment * scale)?;
        ops::axpy(&mut grads.fact_image, 1.0, &g_fact);
        ops::axpy(&mut grads.sent_text, 1.0, &g_sent);
        self.heads.project_backward(&proj_tape, &grads)?;

        let total = judgment::total_loss(final_loss, fact, sentiment, w)?;
        if !total.is_finite() {
            return Err(Error::numerical(format!("non-finite loss for sample {}", sample.id)));
        }
        Ok(LossBreakdown { total, final_loss, fact, sentiment })
    }
}

impl Parameterized for DccfModel {
    fn layers(&self) -> Vec<&DenseLayer> {
        let mut out = self.heads.layers();
        out.extend(self.fact_field.layers());
        out.extend(self.sentiment_field.layers());
        out.extend(self.classifier.layers().iter());
        out
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut out = self.heads.layers_mut();
        out.extend(self.fact_field.layers_mut());
        out.extend(self.sentiment_field.layers_mut());
        out.extend(self.classifier.layers_mut().iter_mut());
        out
    }
}
