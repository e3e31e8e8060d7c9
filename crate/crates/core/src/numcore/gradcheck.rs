//! Central finite-difference validation of accumulated analytic gradients.
//!
//! The numeric side only ever calls the pure loss closure, so it shares no
//! code path with the backward passes it checks.

use serde::{Deserialize, Serialize};

use super::mlp::Parameterized;
use crate::error::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative error, so exact zeros compare by absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub layer: usize,
    /// Index into the layer's weights followed by its biases.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<ParamCheck>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares the gradients currently accumulated in `params` against central
/// differences of `loss` with step `h`, over every trainable scalar.
pub fn check_gradients<P, F>(params: &P, loss: F, h: f64) -> Result<GradCheckReport>
where
    P: Parameterized + Clone,
    F: Fn(&P) -> Result<f64>,
{
    let analytic: Vec<Vec<f64>> =
        params.layers().iter().map(|l| l.grad_weights.iter().chain(&l.grad_bias).copied().collect()).collect();
    let mut work = params.clone();
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None };
    for (li, grads) in analytic.iter().enumerate() {
        for (idx, &a) in grads.iter().enumerate() {
            let original = nudge(&mut work, li, idx, None);
            nudge(&mut work, li, idx, Some(original + h));
            let plus = loss(&work)?;
            nudge(&mut work, li, idx, Some(original - h));
            let minus = loss(&work)?;
            nudge(&mut work, li, idx, Some(original));
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(ParamCheck { layer: li, index: idx, analytic: a, numeric, rel_error: rel });
            }
        }
    }
    Ok(report)
}

/// Reads (and optionally overwrites) one scalar parameter, returning the old value.
fn nudge<P: Parameterized>(p: &mut P, layer: usize, index: usize, value: Option<f64>) -> f64 {
    let mut layers = p.layers_mut();
    let l = &mut *layers[layer];
    let nw = l.weights.len();
    let slot = if index < nw { &mut l.weights[index] } else { &mut l.bias[index - nw] };
    let old = *slot;
    if let Some(v) = value {
        *slot = v;
    }
    old
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::mlp::{Activation, Mlp};
    use crate::numcore::rng::Rng;

    #[test]
    fn detects_correct_and_corrupted_gradients() {
        let mut rng = Rng::new(2);
        let mut mlp = Mlp::new(&[3, 3, 1], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = [0.4, -0.2, 0.9];
        let loss = |m: &Mlp| Ok(m.forward(&x)?[0].powi(2));
        let (y, tape) = mlp.forward_tape(&x).unwrap();
        mlp.backward(&tape, &[2.0 * y[0]]).unwrap();
        let ok = check_gradients(&mlp, loss, FD_STEP).unwrap();
        assert_eq!(ok.checked, mlp.param_count());
        assert!(ok.passes(1e-4), "{ok:?}");

        mlp.layers_mut()[0].grad_weights[1] += 0.5;
        let bad = check_gradients(&mlp, loss, FD_STEP).unwrap();
        assert!(!bad.passes(1e-4));
        assert_eq!(bad.worst.unwrap().layer, 0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-12, 2e-12) < 1e-5);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
