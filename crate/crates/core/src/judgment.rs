//! Dual-view fusion, the final classifier and the joint objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::mlp::{Activation, Mlp};
use crate::numcore::ops;
use crate::numcore::rng::Rng;

/// Probability at or above which a sample is called fake.
pub const FAKE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewVectors {
    pub fact: Vec<f64>,
    pub sentiment: Vec<f64>,
}

/// `concat(fact, sentiment)`.
pub fn fuse_views(v: &ViewVectors) -> Result<Vec<f64>> {
    if v.fact.len() != v.sentiment.len() {
        return Err(Error::config(format!(
            "view dims differ: fact {} vs sentiment {}",
            v.fact.len(),
            v.sentiment.len()
        )));
    }
    Ok(ops::concat(&[&v.fact, &v.sentiment]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    pub fn from_prob(prob_fake: f64) -> Self {
        if prob_fake >= FAKE_THRESHOLD {
            Label::Fake
        } else {
            Label::Real
        }
    }

    /// Fake is the positive class.
    pub fn target(self) -> f64 {
        match self {
            Label::Fake => 1.0,
            Label::Real => 0.0,
        }
    }

    pub fn from_int(v: u8) -> Option<Self> {
        match v {
            1 => Some(Label::Fake),
            0 => Some(Label::Real),
            _ => None,
        }
    }

    pub fn as_int(self) -> u8 {
        match self {
            Label::Fake => 1,
            Label::Real => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictAttribution {
    pub pair: (usize, usize),
    pub tension: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob_fake: f64,
    pub label: Label,
    pub fact_conflict: Option<ConflictAttribution>,
    pub sentiment_conflict: Option<ConflictAttribution>,
}

/// `2 d_v -> 2 d_v (relu) -> 1 (sigmoid)`.
pub fn new_classifier(d_v: usize, rng: &mut Rng) -> Result<Mlp> {
    Mlp::new(&[2 * d_v, 2 * d_v, 1], Activation::Relu, Activation::Sigmoid, rng)
}

fn check_classifier(classifier: &Mlp, input: usize) -> Result<()> {
    let last = classifier.layers().last().expect("non-empty MLP");
    if classifier.out_dim() != 1 || last.activation != Activation::Sigmoid {
        return Err(Error::config("classifier must end in a single sigmoid unit"));
    }
    if classifier.in_dim() != input {
        return Err(Error::config(format!(
            "classifier expects {} inputs, fused views have {input}",
            classifier.in_dim()
        )));
    }
    Ok(())
}

/// Probability of fake and the thresholded label; attribution is left empty.
pub fn classify(classifier: &Mlp, v_final: &[f64]) -> Result<Prediction> {
    check_classifier(classifier, v_final.len())?;
    let prob_fake = classifier.forward(v_final)?[0];
    Ok(Prediction { prob_fake, label: Label::from_prob(prob_fake), fact_conflict: None, sentiment_conflict: None })
}

/// BCE of the predicted fake probability against the label.
pub fn final_loss(prob_fake: f64, label: Label) -> f64 {
    ops::bce_mean(&[prob_fake], &[label.target()])
}

/// Coefficients of the auxiliary losses; the final loss gets `1 - fact - sentiment`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub fact: f64,
    pub sentiment: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { fact: 0.075, sentiment: 0.075 }
    }
}

impl LossWeights {
    pub fn new(fact: f64, sentiment: f64) -> Result<Self> {
        let w = Self { fact, sentiment };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..1.0).contains(&v);
        if !in_range(self.fact) || !in_range(self.sentiment) || self.fact + self.sentiment >= 1.0 {
            return Err(Error::config(format!(
                "loss weights ({}, {}) must lie in [0, 1) with sum < 1",
                self.fact, self.sentiment
            )));
        }
        Ok(())
    }

    pub fn final_weight(&self) -> f64 {
        1.0 - self.fact - self.sentiment
    }
}

pub fn total_loss(l_final: f64, l_fact: f64, l_sentiment: f64, w: LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.final_weight() * l_final + w.fact * l_fact + w.sentiment * l_sentiment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::mlp::DenseLayer;

    #[test]
    fn fuse_cases() {
        let v = ViewVectors { fact: vec![1.0], sentiment: vec![2.0] };
        assert_eq!(fuse_views(&v).unwrap(), vec![1.0, 2.0]);
        let z = ViewVectors { fact: vec![0.0; 3], sentiment: vec![0.0; 3] };
        assert_eq!(fuse_views(&z).unwrap(), vec![0.0; 6]);
        let bad = ViewVectors { fact: vec![0.0; 3], sentiment: vec![0.0; 2] };
        assert!(fuse_views(&bad).is_err());

        let mut rng = Rng::new(1);
        let v = ViewVectors { fact: rng.normal_vec(5, 1.0), sentiment: rng.normal_vec(5, 1.0) };
        let fused = fuse_views(&v).unwrap();
        for k in 0..5 {
            assert_eq!(fused[k], v.fact[k]);
            assert_eq!(fused[5 + k], v.sentiment[k]);
        }
    }

    #[test]
    fn zero_classifier_is_fake_at_boundary() {
        let mut rng = Rng::new(0);
        let c = new_classifier(3, &mut rng).unwrap().zeroed();
        let p = classify(&c, &[1.0; 6]).unwrap();
        assert_eq!(p.prob_fake, 0.5);
        assert_eq!(p.label, Label::Fake);
    }

    #[test]
    fn large_logit_saturates() {
        let mut layer = DenseLayer::zeros(2, 1, Activation::Sigmoid).unwrap();
        layer.bias[0] = 50.0;
        let c = Mlp::from_layers(vec![layer]).unwrap();
        let p = classify(&c, &[0.0, 0.0]).unwrap();
        assert!(p.prob_fake > 1.0 - 1e-15);
        assert_eq!(p.label, Label::Fake);
    }

    #[test]
    fn classify_matches_forward() {
        let mut rng = Rng::new(9);
        let c = new_classifier(4, &mut rng).unwrap();
        for _ in 0..10 {
            let x = rng.normal_vec(8, 1.0);
            let p = classify(&c, &x).unwrap();
            assert_eq!(p.prob_fake, c.forward(&x).unwrap()[0]);
            assert_eq!(p.label == Label::Fake, p.prob_fake >= 0.5);
        }
    }

    #[test]
    fn total_loss_cases() {
        assert_eq!(total_loss(0.7, 3.0, 9.0, LossWeights::new(0.0, 0.0).unwrap()).unwrap(), 0.7);
        let l = total_loss(1.0, 2.0, 0.5, LossWeights::default()).unwrap();
        assert!((l - 1.0375).abs() < 1e-15);
        assert!(LossWeights::new(0.6, 0.4).is_err());
        assert!(LossWeights::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn total_loss_is_linear_in_each_component() {
        let mut rng = Rng::new(5);
        let w = LossWeights::new(0.1, 0.2).unwrap();
        let base = [rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)];
        let coeff = [0.7, 0.1, 0.2];
        for axis in 0..3 {
            for _ in 0..3 {
                let delta = rng.uniform(-1.0, 1.0);
                let mut moved = base;
                moved[axis] += delta;
                let diff = total_loss(moved[0], moved[1], moved[2], w).unwrap()
                    - total_loss(base[0], base[1], base[2], w).unwrap();
                assert!((diff - coeff[axis] * delta).abs() < 1e-12);
            }
        }
    }
}
