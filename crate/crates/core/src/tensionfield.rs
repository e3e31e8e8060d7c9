//! Tension-field feature evolution and conflict/consensus extraction.
//!
//! A [`FeatureSpace`] of `n` same-dimension features is evolved `M` times by a
//! [`DarfuUnit`]: pairwise element-wise squared differences (tension) are
//! turned into attraction weights by a temperature softmax over partners, the
//! weighted neighbourhood is passed through a shared transform `g`, and the
//! result is added back residually. All features update synchronously from the
//! same snapshot.
//!
//! From the evolved space the maximal-tension pair (judged on the last tension
//! matrix) and the mean feature are extracted and standardized by an MLP into
//! one inconsistency vector per space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::mlp::{Activation, DenseLayer, Mlp, MlpTape, Parameterized};
use crate::numcore::ops::{self, softmax_backward, softmax_in_place};
use crate::numcore::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    Fact,
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub features: Vec<Vec<f64>>,
    pub tag: SpaceTag,
}

impl FeatureSpace {
    pub fn new(features: Vec<Vec<f64>>, tag: SpaceTag) -> Result<Self> {
        let Some(first) = features.first() else {
            return Err(Error::config("a feature space needs at least one feature"));
        };
        let d = first.len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(Error::config("all features in a space must share one positive dimension"));
        }
        Ok(Self { features, tag })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        for f in &self.features {
            ops::axpy(&mut acc, 1.0, f);
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        acc
    }

    pub fn norms(&self) -> Vec<f64> {
        self.features.iter().map(|f| ops::norm(f)).collect()
    }
}

/// Pairwise tension in element-wise (`n x n x d`) and mean-reduced (`n x n`) form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionMatrix {
    n: usize,
    d: usize,
    elementwise: Vec<f64>,
    scalar: Vec<f64>,
}

impl TensionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn elementwise(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.n + j) * self.d;
        &self.elementwise[at..at + self.d]
    }

    pub fn scalar(&self, i: usize, j: usize) -> f64 {
        self.scalar[i * self.n + j]
    }

    pub fn scalar_rows(&self) -> Vec<Vec<f64>> {
        self.scalar.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Off-diagonal pair `(i, j)`, `i < j`, with the largest scalar tension.
    /// Ties go to the lexicographically smallest pair.
    pub fn argmax_pair(&self) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let t = self.scalar(i, j);
                if best.is_none_or(|(_, b)| t > b) {
                    best = Some(((i, j), t));
                }
            }
        }
        best.map(|(p, _)| p)
    }
}

pub fn compute_tension(space: &FeatureSpace) -> TensionMatrix {
    let n = space.len();
    let d = space.dim();
    let mut elementwise = vec![0.0; n * n * d];
    let mut scalar = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let at = (i * n + j) * d;
            let mut sum = 0.0;
            for k in 0..d {
                let diff = space.features[i][k] - space.features[j][k];
                let t = diff * diff;
                elementwise[at + k] = t;
                sum += t;
            }
            scalar[i * n + j] = sum / d as f64;
        }
    }
    TensionMatrix { n, d, elementwise, scalar }
}

/// How tension becomes attraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensionMode {
    /// Separate softmax over partners for every feature dimension.
    #[default]
    Elementwise,
    /// One softmax per row over the mean-reduced tension, shared by all dimensions.
    Scalar,
}

/// Attraction weights `W[i][j]` as `d`-vectors; every `(i, ., k)` slice sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractionWeights {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl AttractionWeights {
    pub fn weight(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.n + j) * self.d;
        &self.data[at..at + self.d]
    }

    pub fn uniform(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![1.0 / n as f64; n * n * d] }
    }
}

/// `W[i][.][k] = softmax_j(-T[i][j][k] / tau)` (or the scalar-row variant).
pub fn tension_to_weights(tension: &TensionMatrix, tau: f64, mode: TensionMode) -> AttractionWeights {
    let (n, d) = (tension.n, tension.d);
    let mut data = vec![0.0; n * n * d];
    let mut logits = vec![0.0; n];
    for i in 0..n {
        match mode {
            TensionMode::Elementwise => {
                for k in 0..d {
                    for (j, l) in logits.iter_mut().enumerate() {
                        *l = -tension.elementwise(i, j)[k] / tau;
                    }
                    softmax_in_place(&mut logits);
                    for (j, w) in logits.iter().enumerate() {
                        data[(i * n + j) * d + k] = *w;
                    }
                }
            }
            TensionMode::Scalar => {
                for (j, l) in logits.iter_mut().enumerate() {
                    *l = -tension.scalar(i, j) / tau;
                }
                softmax_in_place(&mut logits);
                for (j, w) in logits.iter().enumerate() {
                    let at = (i * n + j) * d;
                    data[at..at + d].iter_mut().for_each(|v| *v = *w);
                }
            }
        }
    }
    AttractionWeights { n, d, data }
}

/// Whether attraction comes from tension or is flat `1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Tension,
    Uniform,
}

/// The iterated evolution unit: transform(s) `g`, temperature and iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarfuUnit {
    /// One shared transform, or one per iteration.
    pub transforms: Vec<Mlp>,
    pub tau: f64,
    pub iterations: usize,
    pub mode: TensionMode,
    pub weighting: Weighting,
}

impl DarfuUnit {
    /// `g` is `d -> d (relu) -> d (identity)`.
    pub fn new(d: usize, tau: f64, iterations: usize, mode: TensionMode, shared: bool, rng: &mut Rng) -> Result<Self> {
        let count = if shared { 1 } else { iterations.max(1) };
        let transforms = (0..count)
            .map(|_| Mlp::new(&[d, d, d], Activation::Relu, Activation::Identity, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_transforms(transforms, tau, iterations, mode)
    }

    pub fn from_transforms(transforms: Vec<Mlp>, tau: f64, iterations: usize, mode: TensionMode) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::config("temperature must be positive"));
        }
        if transforms.is_empty() {
            return Err(Error::config("evolution unit needs a transform"));
        }
        let d = transforms[0].in_dim();
        if transforms.iter().any(|g| g.in_dim() != d || g.out_dim() != d) {
            return Err(Error::config("evolution transforms must map d -> d"));
        }
        if transforms.len() != 1 && transforms.len() < iterations {
            return Err(Error::config("per-iteration transforms must cover every iteration"));
        }
        Ok(Self { transforms, tau, iterations, mode, weighting: Weighting::Tension })
    }

    pub fn dim(&self) -> usize {
        self.transforms[0].in_dim()
    }

    fn transform_index(&self, iteration: usize) -> usize {
        if self.transforms.len() == 1 {
            0
        } else {
            iteration
        }
    }

    fn weights_for(&self, tension: &TensionMatrix) -> AttractionWeights {
        match self.weighting {
            Weighting::Tension => tension_to_weights(tension, self.tau, self.mode),
            Weighting::Uniform => AttractionWeights::uniform(tension.n, tension.d),
        }
    }

    fn check_space(&self, space: &FeatureSpace) -> Result<()> {
        if space.dim() != self.dim() {
            return Err(Error::config(format!(
                "evolution unit works in dim {}, space has dim {}",
                self.dim(),
                space.dim()
            )));
        }
        Ok(())
    }

    /// One synchronous update at the given iteration index.
    pub fn step(&self, space: &FeatureSpace, iteration: usize) -> Result<(FeatureSpace, TensionMatrix)> {
        let (next, tension, _, _) = self.step_inner(space, iteration, false)?;
        Ok((next, tension))
    }

    #[allow(clippy::type_complexity)]
    fn step_inner(
        &self,
        space: &FeatureSpace,
        iteration: usize,
        record: bool,
    ) -> Result<(FeatureSpace, TensionMatrix, AttractionWeights, Vec<MlpTape>)> {
        self.check_space(space)?;
        let (n, d) = (space.len(), space.dim());
        let tension = compute_tension(space);
        let weights = self.weights_for(&tension);
        let g = &self.transforms[self.transform_index(iteration)];
        let mut features = Vec::with_capacity(n);
        let mut tapes = Vec::new();
        for i in 0..n {
            let mut agg = vec![0.0; d];
            for j in 0..n {
                let w = weights.weight(i, j);
                let f = &space.features[j];
                for k in 0..d {
                    agg[k] += w[k] * f[k];
                }
            }
            let shift = if record {
                let (out, tape) = g.forward_tape(&agg)?;
                tapes.push(tape);
                out
            } else {
                g.forward(&agg)?
            };
            let mut next = space.features[i].clone();
            ops::axpy(&mut next, 1.0, &shift);
            if !ops::all_finite(&next) {
                return Err(Error::numerical(format!("non-finite feature {i} at evolution iteration {iteration}")));
            }
            features.push(next);
        }
        Ok((FeatureSpace { features, tag: space.tag }, tension, weights, tapes))
    }

    pub fn evolve(&self, space: &FeatureSpace) -> Result<EvolutionTrace> {
        let mut states = vec![space.clone()];
        let mut tensions = Vec::with_capacity(self.iterations);
        for t in 0..self.iterations {
            let (next, tension) = self.step(&states[t], t)?;
            states.push(next);
            tensions.push(tension);
        }
        Ok(EvolutionTrace { states, tensions })
    }

    pub fn evolve_tape(&self, space: &FeatureSpace) -> Result<EvolutionTape> {
        let mut states = vec![space.clone()];
        let mut tensions = Vec::with_capacity(self.iterations);
        let mut weights = Vec::with_capacity(self.iterations);
        let mut tapes = Vec::with_capacity(self.iterations);
        for t in 0..self.iterations {
            let (next, tension, w, tp) = self.step_inner(&states[t], t, true)?;
            states.push(next);
            tensions.push(tension);
            weights.push(w);
            tapes.push(tp);
        }
        Ok(EvolutionTape { trace: EvolutionTrace { states, tensions }, weights, tapes })
    }

    /// Backpropagates `dL/dS'` through every recorded step, accumulating
    /// transform gradients, and returns `dL/dS^(0)`.
    pub fn backward(&mut self, tape: &EvolutionTape, grad_final: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        if tape.tapes.len() != self.iterations {
            return Err(Error::Usage("evolution tape does not match the unit's iteration count".into()));
        }
        let mut grad = grad_final;
        for t in (0..self.iterations).rev() {
            grad = self.step_backward(&tape.trace.states[t], &tape.weights[t], &tape.tapes[t], t, grad)?;
        }
        Ok(grad)
    }

    fn step_backward(
        &mut self,
        space: &FeatureSpace,
        weights: &AttractionWeights,
        tapes: &[MlpTape],
        iteration: usize,
        grad_next: Vec<Vec<f64>>,
    ) -> Result<Vec<Vec<f64>>> {
        let (n, d) = (space.len(), space.dim());
        let f = &space.features;
        let gi = self.transform_index(iteration);
        let mut grad = grad_next.clone();
        let mut grad_w = vec![0.0; n * d];
        let mut grad_logit = vec![0.0; n];
        let mut w_col = vec![0.0; n];
        let mut gw_col = vec![0.0; n];
        for i in 0..n {
            let grad_agg = self.transforms[gi].backward(&tapes[i], &grad_next[i])?;
            for j in 0..n {
                let w = weights.weight(i, j);
                for k in 0..d {
                    grad[j][k] += w[k] * grad_agg[k];
                    grad_w[j * d + k] = grad_agg[k] * f[j][k];
                }
            }
            if self.weighting == Weighting::Uniform {
                continue;
            }
            // dL/dE[i][j][k] via the softmax over j, then into f_i and f_j.
            let add_tension_grad = |j: usize, k: usize, g_e: f64, grad: &mut [Vec<f64>]| {
                let diff = f[i][k] - f[j][k];
                grad[i][k] += 2.0 * diff * g_e;
                grad[j][k] -= 2.0 * diff * g_e;
            };
            match self.mode {
                TensionMode::Elementwise => {
                    for k in 0..d {
                        for j in 0..n {
                            w_col[j] = weights.weight(i, j)[k];
                            gw_col[j] = grad_w[j * d + k];
                        }
                        let g_a = softmax_backward(&w_col, &gw_col);
                        for j in 0..n {
                            add_tension_grad(j, k, -g_a[j] / self.tau, &mut grad);
                        }
                    }
                }
                TensionMode::Scalar => {
                    for j in 0..n {
                        w_col[j] = weights.weight(i, j)[0];
                        gw_col[j] = grad_w[j * d..(j + 1) * d].iter().sum();
                    }
                    let g_a = softmax_backward(&w_col, &gw_col);
                    for (j, g) in g_a.iter().enumerate() {
                        grad_logit[j] = -g / self.tau / d as f64;
                    }
                    for j in 0..n {
                        for k in 0..d {
                            add_tension_grad(j, k, grad_logit[j], &mut grad);
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

/// One update with the first transform.
pub fn darfu_step(space: &FeatureSpace, unit: &DarfuUnit) -> Result<(FeatureSpace, TensionMatrix)> {
    unit.step(space, 0)
}

pub fn evolve(space: &FeatureSpace, unit: &DarfuUnit) -> Result<EvolutionTrace> {
    unit.evolve(space)
}

/// States `S^(0)..S^(M)` and the tension matrices `T^(0)..T^(M-1)` used to produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub states: Vec<FeatureSpace>,
    pub tensions: Vec<TensionMatrix>,
}

impl EvolutionTrace {
    pub fn final_state(&self) -> &FeatureSpace {
        self.states.last().expect("trace always holds the initial state")
    }

    /// `T^(M-1)`; with zero iterations, the tension of the initial state.
    pub fn final_tension(&self) -> TensionMatrix {
        match self.tensions.last() {
            Some(t) => t.clone(),
            None => compute_tension(&self.states[0]),
        }
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            tag: self.states[0].tag,
            iterations: self
                .tensions
                .iter()
                .zip(&self.states)
                .map(|(t, s)| IterationSummary { scalar_tension: t.scalar_rows(), feature_norms: s.norms() })
                .collect(),
            final_feature_norms: self.final_state().norms(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionTape {
    pub trace: EvolutionTrace,
    weights: Vec<AttractionWeights>,
    tapes: Vec<Vec<MlpTape>>,
}

/// Human-readable view of a trace: per-iteration scalar tensions and input norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub tag: SpaceTag,
    pub iterations: Vec<IterationSummary>,
    pub final_feature_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub scalar_tension: Vec<Vec<f64>>,
    pub feature_norms: Vec<f64>,
}

/// The maximal-tension pair of `T'` and `concat(f_i', f_j')`.
pub fn extract_conflict(trace: &EvolutionTrace) -> Result<((usize, usize), Vec<f64>)> {
    let tension = trace.final_tension();
    let (i, j) = tension.argmax_pair().ok_or_else(|| Error::config("a conflict pair needs at least two features"))?;
    let s = trace.final_state();
    Ok(((i, j), ops::concat(&[&s.features[i], &s.features[j]])))
}

pub fn extract_consensus(trace: &EvolutionTrace) -> Vec<f64> {
    trace.final_state().mean()
}

/// `g_std(concat(conflict, consensus))`.
pub fn standardize(g_std: &Mlp, conflict: &[f64], consensus: &[f64]) -> Result<Vec<f64>> {
    if g_std.in_dim() != conflict.len() + consensus.len() || conflict.len() != 2 * consensus.len() {
        return Err(Error::config(format!(
            "standardizer expects {} inputs, got conflict {} + consensus {}",
            g_std.in_dim(),
            conflict.len(),
            consensus.len()
        )));
    }
    g_std.forward(&ops::concat(&[conflict, consensus]))
}

/// Which metric-extraction parts feed the standardizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSwitches {
    pub conflict: bool,
    pub consensus: bool,
}

impl Default for MetricSwitches {
    fn default() -> Self {
        Self { conflict: true, consensus: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictConsensus {
    pub pair: (usize, usize),
    /// Scalar tension of `pair` in `T'`.
    pub pair_tension: f64,
    pub conflict: Vec<f64>,
    pub consensus: Vec<f64>,
    pub standardized: Vec<f64>,
}

/// One space's evolution unit and standardizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionField {
    pub unit: DarfuUnit,
    pub standardizer: Mlp,
    pub switches: MetricSwitches,
}

#[derive(Debug, Clone)]
pub struct TensionFieldTape {
    pub evolution: EvolutionTape,
    pub output: ConflictConsensus,
    standardizer: MlpTape,
}

impl TensionField {
    /// Standardizer is `3d -> d_v (relu) -> d_v (identity)`.
    pub fn new(unit: DarfuUnit, d_v: usize, rng: &mut Rng) -> Result<Self> {
        let d = unit.dim();
        let standardizer = Mlp::new(&[3 * d, d_v, d_v], Activation::Relu, Activation::Identity, rng)?;
        Ok(Self { unit, standardizer, switches: MetricSwitches::default() })
    }

    fn standardizer_input(&self, conflict: &[f64], consensus: &[f64]) -> Vec<f64> {
        let mut input = ops::concat(&[conflict, consensus]);
        let split = conflict.len();
        if !self.switches.conflict {
            input[..split].iter_mut().for_each(|v| *v = 0.0);
        }
        if !self.switches.consensus {
            input[split..].iter_mut().for_each(|v| *v = 0.0);
        }
        input
    }

    fn extract(&self, trace: &EvolutionTrace) -> Result<((usize, usize), f64, Vec<f64>, Vec<f64>)> {
        let (pair, conflict) = extract_conflict(trace)?;
        let tension = trace.final_tension().scalar(pair.0, pair.1);
        Ok((pair, tension, conflict, extract_consensus(trace)))
    }

    pub fn forward(&self, space: &FeatureSpace) -> Result<(ConflictConsensus, EvolutionTrace)> {
        let trace = self.unit.evolve(space)?;
        let (pair, pair_tension, conflict, consensus) = self.extract(&trace)?;
        let standardized = self.standardizer.forward(&self.standardizer_input(&conflict, &consensus))?;
        Ok((ConflictConsensus { pair, pair_tension, conflict, consensus, standardized }, trace))
    }

    pub fn forward_tape(&self, space: &FeatureSpace) -> Result<TensionFieldTape> {
        let evolution = self.unit.evolve_tape(space)?;
        let (pair, pair_tension, conflict, consensus) = self.extract(&evolution.trace)?;
        let (standardized, standardizer) =
            self.standardizer.forward_tape(&self.standardizer_input(&conflict, &consensus))?;
        Ok(TensionFieldTape {
            evolution,
            output: ConflictConsensus { pair, pair_tension, conflict, consensus, standardized },
            standardizer,
        })
    }

    /// Given `dL/dV`, accumulates standardizer and transform gradients and
    /// returns `dL/dS^(0)`. The selected pair is a constant of the pass.
    pub fn backward(&mut self, tape: &TensionFieldTape, grad_v: &[f64]) -> Result<Vec<Vec<f64>>> {
        let grad_in = self.standardizer.backward(&tape.standardizer, grad_v)?;
        let final_state = tape.evolution.trace.final_state();
        let (n, d) = (final_state.len(), final_state.dim());
        let mut grad = vec![vec![0.0; d]; n];
        let (i, j) = tape.output.pair;
        if self.switches.conflict {
            ops::axpy(&mut grad[i], 1.0, &grad_in[..d]);
            ops::axpy(&mut grad[j], 1.0, &grad_in[d..2 * d]);
        }
        if self.switches.consensus {
            let share = 1.0 / n as f64;
            for g in grad.iter_mut() {
                ops::axpy(g, share, &grad_in[2 * d..]);
            }
        }
        self.unit.backward(&tape.evolution, grad)
    }
}

impl Parameterized for TensionField {
    fn layers(&self) -> Vec<&DenseLayer> {
        self.unit.transforms.iter().chain(std::iter::once(&self.standardizer)).flat_map(|m| m.layers().iter()).collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        self.unit
            .transforms
            .iter_mut()
            .chain(std::iter::once(&mut self.standardizer))
            .flat_map(|m| m.layers_mut().iter_mut())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{check_gradients, FD_STEP};

    fn random_space(rng: &mut Rng, n: usize, d: usize) -> FeatureSpace {
        FeatureSpace::new((0..n).map(|_| rng.normal_vec(d, 1.0)).collect(), SpaceTag::Fact).unwrap()
    }

    fn zero_unit(d: usize, iterations: usize) -> DarfuUnit {
        let g = Mlp::from_layers(vec![
            DenseLayer::zeros(d, d, Activation::Relu).unwrap(),
            DenseLayer::zeros(d, d, Activation::Identity).unwrap(),
        ])
        .unwrap();
        DarfuUnit::from_transforms(vec![g], 1.5, iterations, TensionMode::Elementwise).unwrap()
    }

    #[test]
    fn identical_features_have_zero_tension() {
        let s = FeatureSpace::new(vec![vec![0.3, -1.0]; 2], SpaceTag::Fact).unwrap();
        let t = compute_tension(&s);
        assert_eq!(t.elementwise(0, 1), &[0.0, 0.0]);
        assert_eq!(t.scalar(0, 1), 0.0);
    }

    #[test]
    fn unit_difference_tension() {
        let s = FeatureSpace::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], SpaceTag::Fact).unwrap();
        let t = compute_tension(&s);
        assert_eq!(t.elementwise(0, 1), &[1.0, 1.0]);
        assert_eq!(t.scalar(0, 1), 1.0);
    }

    #[test]
    fn tension_matches_triple_loop() {
        let mut rng = Rng::new(31);
        let s = random_space(&mut rng, 4, 8);
        let t = compute_tension(&s);
        for i in 0..4 {
            for j in 0..4 {
                let mut total = 0.0;
                for k in 0..8 {
                    let e = (s.features[i][k] - s.features[j][k]).powi(2);
                    assert_eq!(t.elementwise(i, j)[k], e);
                    total += e;
                }
                assert_eq!(t.scalar(i, j), total / 8.0);
            }
        }
    }

    #[test]
    fn weights_uniform_for_identical_features() {
        let s = FeatureSpace::new(vec![vec![2.0, 1.0, 0.0]; 3], SpaceTag::Fact).unwrap();
        let w = tension_to_weights(&compute_tension(&s), 1.5, TensionMode::Elementwise);
        for i in 0..3 {
            for j in 0..3 {
                for v in w.weight(i, j) {
                    assert!((v - 1.0 / 3.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn two_feature_weights_match_softmax_oracle() {
        // Per-dim tension [0, t] with t / tau = 1.
        let tau: f64 = 1.5;
        let s = FeatureSpace::new(vec![vec![0.0], vec![tau.sqrt()]], SpaceTag::Fact).unwrap();
        let w = tension_to_weights(&compute_tension(&s), tau, TensionMode::Elementwise);
        assert!((w.weight(0, 0)[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((w.weight(0, 1)[0] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn single_feature_weight_is_one() {
        let s = FeatureSpace::new(vec![vec![4.0, 5.0]], SpaceTag::Sentiment).unwrap();
        for mode in [TensionMode::Elementwise, TensionMode::Scalar] {
            let w = tension_to_weights(&compute_tension(&s), 0.7, mode);
            assert_eq!(w.weight(0, 0), &[1.0, 1.0]);
        }
    }

    #[test]
    fn zero_transform_is_pure_residual() {
        let mut rng = Rng::new(2);
        let s = random_space(&mut rng, 3, 4);
        let unit = zero_unit(4, 3);
        let (next, _) = darfu_step(&s, &unit).unwrap();
        assert_eq!(next, s);
        let trace = evolve(&s, &unit).unwrap();
        assert!(trace.states.iter().all(|st| *st == s));
    }

    #[test]
    fn homogeneous_space_stays_homogeneous() {
        let mut rng = Rng::new(5);
        let unit = DarfuUnit::new(4, 1.5, 4, TensionMode::Elementwise, true, &mut rng).unwrap();
        let f = rng.normal_vec(4, 1.0);
        let s = FeatureSpace::new(vec![f.clone(); 3], SpaceTag::Fact).unwrap();
        let (next, _) = darfu_step(&s, &unit).unwrap();
        let mut expected = f.clone();
        ops::axpy(&mut expected, 1.0, &unit.transforms[0].forward(&f).unwrap());
        for g in &next.features {
            for (a, b) in g.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    /// Scalar-loop reimplementation of one update.
    fn oracle_step(s: &FeatureSpace, g: &Mlp, tau: f64, mode: TensionMode) -> Vec<Vec<f64>> {
        let n = s.len();
        let d = s.dim();
        let mut out = Vec::new();
        for i in 0..n {
            let mut agg = vec![0.0; d];
            for k in 0..d {
                let tk = |j: usize| -> f64 {
                    match mode {
                        TensionMode::Elementwise => (s.features[i][k] - s.features[j][k]).powi(2),
                        TensionMode::Scalar => {
                            (0..d).map(|q| (s.features[i][q] - s.features[j][q]).powi(2)).sum::<f64>() / d as f64
                        }
                    }
                };
                let denom: f64 = (0..n).map(|j| (-tk(j) / tau).exp()).sum();
                for j in 0..n {
                    agg[k] += (-tk(j) / tau).exp() / denom * s.features[j][k];
                }
            }
            let shift = g.forward(&agg).unwrap();
            out.push((0..d).map(|k| s.features[i][k] + shift[k]).collect());
        }
        out
    }

    #[test]
    fn step_matches_loop_oracle() {
        let mut rng = Rng::new(9);
        for mode in [TensionMode::Elementwise, TensionMode::Scalar] {
            let unit = DarfuUnit::new(5, 1.5, 1, mode, true, &mut rng).unwrap();
            let s = random_space(&mut rng, 4, 5);
            let (next, _) = darfu_step(&s, &unit).unwrap();
            let want = oracle_step(&s, &unit.transforms[0], 1.5, mode);
            for (a, b) in next.features.iter().flatten().zip(want.iter().flatten()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_bookkeeping_and_composition() {
        let mut rng = Rng::new(10);
        let unit = DarfuUnit::new(3, 1.5, 1, TensionMode::Elementwise, true, &mut rng).unwrap();
        let s = random_space(&mut rng, 3, 3);
        let trace = evolve(&s, &unit).unwrap();
        assert_eq!(trace.states.len(), 2);
        assert_eq!(trace.tensions.len(), 1);

        let unit = DarfuUnit { iterations: 4, ..unit };
        let trace = evolve(&s, &unit).unwrap();
        let mut manual = s.clone();
        for _ in 0..4 {
            manual = darfu_step(&manual, &unit).unwrap().0;
        }
        assert_eq!(*trace.final_state(), manual);
        assert_eq!(trace.final_tension(), trace.tensions[3]);
        assert_eq!(trace.tensions[3], compute_tension(&trace.states[3]));
    }

    #[test]
    fn zero_iterations_use_initial_tension() {
        let mut rng = Rng::new(10);
        let unit = DarfuUnit::new(3, 1.5, 0, TensionMode::Elementwise, true, &mut rng).unwrap();
        let s = random_space(&mut rng, 3, 3);
        let trace = evolve(&s, &unit).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert_eq!(trace.final_tension(), compute_tension(&s));
    }

    fn trace_with_scalar_tensions(values: &[((usize, usize), f64)], n: usize) -> TensionMatrix {
        let mut scalar = vec![0.0; n * n];
        for &((i, j), v) in values {
            scalar[i * n + j] = v;
            scalar[j * n + i] = v;
        }
        TensionMatrix { n, d: 1, elementwise: scalar.clone(), scalar }
    }

    #[test]
    fn argmax_picks_largest_and_breaks_ties_lexicographically() {
        let t = trace_with_scalar_tensions(&[((0, 1), 0.2), ((0, 2), 0.9), ((1, 2), 0.4)], 3);
        assert_eq!(t.argmax_pair(), Some((0, 2)));
        let t = trace_with_scalar_tensions(&[((0, 1), 0.5), ((0, 2), 0.1), ((1, 2), 0.5)], 3);
        assert_eq!(t.argmax_pair(), Some((0, 1)));
    }

    #[test]
    fn two_features_force_the_pair() {
        let mut rng = Rng::new(3);
        let unit = DarfuUnit::new(3, 1.5, 2, TensionMode::Elementwise, true, &mut rng).unwrap();
        let trace = evolve(&random_space(&mut rng, 2, 3), &unit).unwrap();
        let (pair, conflict) = extract_conflict(&trace).unwrap();
        assert_eq!(pair, (0, 1));
        let s = trace.final_state();
        assert_eq!(conflict, ops::concat(&[&s.features[0], &s.features[1]]));
    }

    #[test]
    fn single_feature_has_no_conflict() {
        let mut rng = Rng::new(3);
        let unit = DarfuUnit::new(3, 1.5, 2, TensionMode::Elementwise, true, &mut rng).unwrap();
        let trace = evolve(&random_space(&mut rng, 1, 3), &unit).unwrap();
        assert!(extract_conflict(&trace).is_err());
    }

    #[test]
    fn consensus_cases() {
        let unit = zero_unit(2, 1);
        let s = FeatureSpace::new(vec![vec![1.0, 3.0], vec![3.0, 5.0]], SpaceTag::Fact).unwrap();
        assert_eq!(extract_consensus(&evolve(&s, &unit).unwrap()), vec![2.0, 4.0]);
        let same = FeatureSpace::new(vec![vec![0.1, 0.7]; 4], SpaceTag::Fact).unwrap();
        assert_eq!(extract_consensus(&evolve(&same, &unit).unwrap()), vec![0.1, 0.7]);

        let mut rng = Rng::new(4);
        let s = random_space(&mut rng, 5, 3);
        let c = extract_consensus(&evolve(&s, &zero_unit(3, 1)).unwrap());
        for k in 0..3 {
            let mut sum = 0.0;
            for i in 0..5 {
                sum += s.features[i][k];
            }
            assert!((c[k] - sum / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_cases() {
        let d = 2;
        let identity = Mlp::from_layers(vec![DenseLayer::identity(3 * d, Activation::Identity).unwrap()]).unwrap();
        let conflict = [1.0, 2.0, 3.0, 4.0];
        let consensus = [5.0, 6.0];
        assert_eq!(standardize(&identity, &conflict, &consensus).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let mut zero = Mlp::from_layers(vec![DenseLayer::zeros(3 * d, 3, Activation::Identity).unwrap()]).unwrap();
        zero.layers_mut()[0].bias = vec![0.5, 0.0, -0.5];
        assert_eq!(standardize(&zero, &conflict, &consensus).unwrap(), vec![0.5, 0.0, -0.5]);

        let mut rng = Rng::new(7);
        let g = Mlp::new(&[6, 4, 4], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let direct = g.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(standardize(&g, &conflict, &consensus).unwrap(), direct);
        assert!(matches!(standardize(&g, &conflict[..2], &consensus), Err(Error::Config(_))));
    }

    fn field_gradcheck(mode: TensionMode, weighting: Weighting, switches: MetricSwitches, n: usize, shared: bool) {
        let mut rng = Rng::new(41);
        let mut unit = DarfuUnit::new(4, 1.5, 2, mode, shared, &mut rng).unwrap();
        unit.weighting = weighting;
        let mut field = TensionField::new(unit, 3, &mut rng).unwrap();
        field.switches = switches;
        let space = random_space(&mut rng, n, 4);
        let probe = rng.normal_vec(3, 1.0);
        let tape = field.forward_tape(&space).unwrap();
        let grad_space = field.backward(&tape, &probe).unwrap();
        let loss =
            |f: &TensionField, s: &FeatureSpace| -> Result<f64> { Ok(ops::dot(&f.forward(s)?.0.standardized, &probe)) };
        let report = check_gradients(&field, |f| loss(f, &space), FD_STEP).unwrap();
        assert!(report.passes(1e-4), "{mode:?} {weighting:?} {switches:?}: {report:?}");

        // Input gradient.
        for i in 0..n {
            for k in 0..4 {
                let mut p = space.clone();
                p.features[i][k] += FD_STEP;
                let mut m = space.clone();
                m.features[i][k] -= FD_STEP;
                let fd = (loss(&field, &p).unwrap() - loss(&field, &m).unwrap()) / (2.0 * FD_STEP);
                let rel = crate::numcore::relative_error(grad_space[i][k], fd);
                assert!(rel < 1e-4, "input grad {i},{k}: {} vs {fd}", grad_space[i][k]);
            }
        }
    }

    #[test]
    fn field_gradients_match_finite_differences() {
        let all = MetricSwitches::default();
        field_gradcheck(TensionMode::Elementwise, Weighting::Tension, all, 2, true);
        field_gradcheck(TensionMode::Elementwise, Weighting::Tension, all, 4, true);
        field_gradcheck(TensionMode::Scalar, Weighting::Tension, all, 3, true);
        field_gradcheck(TensionMode::Elementwise, Weighting::Uniform, all, 3, true);
        field_gradcheck(TensionMode::Elementwise, Weighting::Tension, all, 3, false);
        field_gradcheck(
            TensionMode::Elementwise,
            Weighting::Tension,
            MetricSwitches { conflict: false, consensus: true },
            2,
            true,
        );
        field_gradcheck(
            TensionMode::Elementwise,
            Weighting::Tension,
            MetricSwitches { conflict: true, consensus: false },
            2,
            true,
        );
    }
}
