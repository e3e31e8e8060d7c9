//! Fact/sentiment projection of raw embeddings plus the two auxiliary losses.
//!
//! Four independent MLPs map the text and image embeddings into a fact space
//! and a sentiment space. The object head reads only the image-side fact
//! feature (BCE against multi-hot object labels) and the polarity head reads
//! only the text-side sentiment feature (MSE against the polarity vector).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::mlp::{Activation, DenseLayer, Mlp, MlpTape, Parameterized};
use crate::numcore::ops;
use crate::numcore::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct RawEmbeddings {
    pub text: Vec<f64>,
    pub image: Vec<f64>,
}

/// Pseudo-label targets: multi-hot objects and a polarity vector in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxTargets {
    pub objects: Vec<f64>,
    pub polarity: Vec<f64>,
}

impl AuxTargets {
    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.objects.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::data(format!("object label {v} is not binary")));
        }
        if let Some(v) = self.polarity.iter().find(|&&v| !(-1.0..=1.0).contains(&v)) {
            return Err(Error::data(format!("polarity {v} outside [-1, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisentangledFeatures {
    pub fact_text: Vec<f64>,
    pub fact_image: Vec<f64>,
    pub sent_text: Vec<f64>,
    pub sent_image: Vec<f64>,
}

impl DisentangledFeatures {
    pub fn zeros(d: usize) -> Self {
        Self { fact_text: vec![0.0; d], fact_image: vec![0.0; d], sent_text: vec![0.0; d], sent_image: vec![0.0; d] }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionTape {
    fact_text: MlpTape,
    fact_image: MlpTape,
    sent_text: MlpTape,
    sent_image: MlpTape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDims {
    pub d_text: usize,
    pub d_image: usize,
    pub d: usize,
    pub objects: usize,
    pub polarity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHeads {
    pub fact_text: Mlp,
    pub fact_image: Mlp,
    pub sent_text: Mlp,
    pub sent_image: Mlp,
    /// Sigmoid multi-label classifier over the image fact feature.
    pub object_head: Mlp,
    /// Linear regressor over the text sentiment feature.
    pub polarity_head: Mlp,
}

impl ProjectionHeads {
    /// Projections are `in -> d (relu) -> d (identity)`.
    pub fn new(dims: HeadDims, rng: &mut Rng) -> Result<Self> {
        let HeadDims { d_text, d_image, d, objects, polarity } = dims;
        let proj = |d_in: usize, rng: &mut Rng| Mlp::new(&[d_in, d, d], Activation::Relu, Activation::Identity, rng);
        Ok(Self {
            fact_text: proj(d_text, rng)?,
            fact_image: proj(d_image, rng)?,
            sent_text: proj(d_text, rng)?,
            sent_image: proj(d_image, rng)?,
            object_head: Mlp::from_layers(vec![DenseLayer::new(d, objects, Activation::Sigmoid, rng)?])?,
            polarity_head: Mlp::from_layers(vec![DenseLayer::new(d, polarity, Activation::Identity, rng)?])?,
        })
    }

    pub fn dims(&self) -> HeadDims {
        HeadDims {
            d_text: self.fact_text.in_dim(),
            d_image: self.fact_image.in_dim(),
            d: self.fact_text.out_dim(),
            objects: self.object_head.out_dim(),
            polarity: self.polarity_head.out_dim(),
        }
    }

    pub fn project(&self, raw: &RawEmbeddings) -> Result<DisentangledFeatures> {
        Ok(DisentangledFeatures {
            fact_text: self.fact_text.forward(&raw.text)?,
            fact_image: self.fact_image.forward(&raw.image)?,
            sent_text: self.sent_text.forward(&raw.text)?,
            sent_image: self.sent_image.forward(&raw.image)?,
        })
    }

    pub fn project_tape(&self, raw: &RawEmbeddings) -> Result<(DisentangledFeatures, ProjectionTape)> {
        let (fact_text, t0) = self.fact_text.forward_tape(&raw.text)?;
        let (fact_image, t1) = self.fact_image.forward_tape(&raw.image)?;
        let (sent_text, t2) = self.sent_text.forward_tape(&raw.text)?;
        let (sent_image, t3) = self.sent_image.forward_tape(&raw.image)?;
        Ok((
            DisentangledFeatures { fact_text, fact_image, sent_text, sent_image },
            ProjectionTape { fact_text: t0, fact_image: t1, sent_text: t2, sent_image: t3 },
        ))
    }

    /// Accumulates projection gradients given `dL/d(feature)` for all four outputs.
    pub fn project_backward(&mut self, tape: &ProjectionTape, grads: &DisentangledFeatures) -> Result<()> {
        self.fact_text.backward(&tape.fact_text, &grads.fact_text)?;
        self.fact_image.backward(&tape.fact_image, &grads.fact_image)?;
        self.sent_text.backward(&tape.sent_text, &grads.sent_text)?;
        self.sent_image.backward(&tape.sent_image, &grads.sent_image)?;
        Ok(())
    }

    fn check_objects(&self, targets: &AuxTargets) -> Result<()> {
        targets.validate()?;
        if targets.objects.len() != self.object_head.out_dim() {
            return Err(Error::config(format!(
                "object head predicts {} classes, targets have {}",
                self.object_head.out_dim(),
                targets.objects.len()
            )));
        }
        Ok(())
    }

    fn check_polarity(&self, targets: &AuxTargets) -> Result<()> {
        if targets.polarity.len() != self.polarity_head.out_dim() {
            return Err(Error::config(format!(
                "polarity head predicts {} values, targets have {}",
                self.polarity_head.out_dim(),
                targets.polarity.len()
            )));
        }
        Ok(())
    }

    /// Mean BCE of the object head on the image fact feature.
    pub fn fact_loss(&self, feats: &DisentangledFeatures, targets: &AuxTargets) -> Result<f64> {
        self.check_objects(targets)?;
        let probs = self.object_head.forward(&feats.fact_image)?;
        Ok(ops::bce_mean(&probs, &targets.objects))
    }

    /// Mean squared error of the polarity head on the text sentiment feature.
    pub fn sentiment_loss(&self, feats: &DisentangledFeatures, targets: &AuxTargets) -> Result<f64> {
        self.check_polarity(targets)?;
        let pred = self.polarity_head.forward(&feats.sent_text)?;
        Ok(ops::mse(&pred, &targets.polarity))
    }

    /// Computes the fact loss, backpropagates `weight * dL_F` into the object
    /// head and returns `(loss, weight * dL_F / d(fact_image))`.
    pub fn fact_loss_backward(
        &mut self,
        feats: &DisentangledFeatures,
        targets: &AuxTargets,
        weight: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_objects(targets)?;
        let (probs, tape) = self.object_head.forward_tape(&feats.fact_image)?;
        let loss = ops::bce_mean(&probs, &targets.objects);
        let mut g = ops::bce_mean_grad(&probs, &targets.objects);
        g.iter_mut().for_each(|v| *v *= weight);
        let grad_in = self.object_head.backward(&tape, &g)?;
        Ok((loss, grad_in))
    }

    /// Sentiment counterpart of [`Self::fact_loss_backward`], returning the
    /// gradient with respect to the text sentiment feature.
    pub fn sentiment_loss_backward(
        &mut self,
        feats: &DisentangledFeatures,
        targets: &AuxTargets,
        weight: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_polarity(targets)?;
        let (pred, tape) = self.polarity_head.forward_tape(&feats.sent_text)?;
        let loss = ops::mse(&pred, &targets.polarity);
        let mut g = ops::mse_grad(&pred, &targets.polarity);
        g.iter_mut().for_each(|v| *v *= weight);
        let grad_in = self.polarity_head.backward(&tape, &g)?;
        Ok((loss, grad_in))
    }
}

impl Parameterized for ProjectionHeads {
    fn layers(&self) -> Vec<&crate::numcore::DenseLayer> {
        [&self.fact_text, &self.fact_image, &self.sent_text, &self.sent_image, &self.object_head, &self.polarity_head]
            .into_iter()
            .flat_map(|m| m.layers().iter())
            .collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut crate::numcore::DenseLayer> {
        [
            &mut self.fact_text,
            &mut self.fact_image,
            &mut self.sent_text,
            &mut self.sent_image,
            &mut self.object_head,
            &mut self.polarity_head,
        ]
        .into_iter()
        .flat_map(|m| m.layers_mut().iter_mut())
        .collect()
    }
}
