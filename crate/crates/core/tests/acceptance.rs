//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test --release --test acceptance`.

use std::time::{Duration, Instant};

use dccf::data::{self, Dataset, Split, SynthSpec};
use dccf::harness::ablation::{run_variant, table_variants};
use dccf::harness::gradcheck::{pipeline_gradcheck, GradCheckSettings};
use dccf::harness::{self, compute_metrics, Checkpoint, TrainOutcome};
use dccf::numcore::Rng;
use dccf::tensionfield::{
    compute_tension, evolve, extract_consensus, tension_to_weights, DarfuUnit, FeatureSpace, SpaceTag, TensionMode,
};
use dccf::{Label, TrainConfig};

const SEEDS: u64 = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn benchmark(seed: u64, spec: SynthSpec) -> Dataset {
    let config = TrainConfig { seed, ..TrainConfig::default() };
    let spec = SynthSpec { seed, ..spec };
    data::split(&data::generate_synthetic(&spec).unwrap(), config.split_fractions(), seed).unwrap()
}

/// Full-model runs on the standard benchmark, shared by several criteria.
struct FullRuns {
    datasets: Vec<Dataset>,
    outcomes: Vec<TrainOutcome>,
    accuracies: Vec<f64>,
    durations: Vec<Duration>,
}

fn full_runs() -> FullRuns {
    let mut runs = FullRuns { datasets: vec![], outcomes: vec![], accuracies: vec![], durations: vec![] };
    for seed in 0..SEEDS {
        let ds = benchmark(seed, SynthSpec::default());
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let start = Instant::now();
        let o = harness::train(&config, &ds).unwrap();
        runs.durations.push(start.elapsed());
        runs.accuracies.push(harness::evaluate(&o.model, &ds, Split::Test).unwrap().accuracy);
        runs.datasets.push(ds);
        runs.outcomes.push(o);
    }
    runs
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (mode, shared) in [(TensionMode::Elementwise, true), (TensionMode::Scalar, false)] {
        let s = GradCheckSettings { tension_mode: mode, shared_transform: shared, ..GradCheckSettings::default() };
        let r = pipeline_gradcheck(&s).unwrap();
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-4 && secs < 120.0, format!("{checked} parameters, max relative error {worst:.2e}, {secs:.1}s"))
}

fn random_space(rng: &mut Rng, n: usize, d: usize) -> FeatureSpace {
    FeatureSpace::new((0..n).map(|_| rng.normal_vec(d, 1.0)).collect(), SpaceTag::Fact).unwrap()
}

fn random_unit(rng: &mut Rng, d: usize, mode: TensionMode) -> DarfuUnit {
    DarfuUnit::new(d, 1.5, 3, mode, rng.bernoulli(0.5), rng).unwrap()
}

fn mechanism_invariants() -> Outcome {
    const TRIALS: usize = 200;
    let mut rng = Rng::new(2024);
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    for trial in 0..TRIALS {
        let n = 2 + trial % 5;
        let d = 1 + trial % 6;
        let mode = if trial % 2 == 0 { TensionMode::Elementwise } else { TensionMode::Scalar };
        let space = random_space(&mut rng, n, d);
        let t = compute_tension(&space);

        let w = tension_to_weights(&t, rng.uniform(0.1, 3.0), mode);
        let normalized =
            (0..n).all(|i| (0..d).all(|k| ((0..n).map(|j| w.weight(i, j)[k]).sum::<f64>() - 1.0).abs() <= 1e-9));
        check("weight normalization", normalized);

        let symmetric = (0..n).all(|i| {
            t.scalar(i, i) == 0.0
                && t.elementwise(i, i).iter().all(|&x| x == 0.0)
                && (0..n).all(|j| t.scalar(i, j) == t.scalar(j, i) && t.elementwise(i, j) == t.elementwise(j, i))
        });
        check("tension symmetry / zero diagonal", symmetric);

        let unit = random_unit(&mut rng, d, mode);
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let permuted =
            FeatureSpace::new(perm.iter().map(|&p| space.features[p].clone()).collect(), SpaceTag::Fact).unwrap();
        let a = evolve(&space, &unit).unwrap();
        let b = evolve(&permuted, &unit).unwrap();
        let equivariant = perm.iter().enumerate().all(|(i, &p)| {
            a.final_state().features[p].iter().zip(&b.final_state().features[i]).all(|(x, y)| (x - y).abs() <= 1e-6)
        });
        check("permutation equivariance", equivariant);
        let (pa, pb) = (a.final_tension().argmax_pair().unwrap(), b.final_tension().argmax_pair().unwrap());
        let mapped = {
            let (x, y) = (perm[pb.0], perm[pb.1]);
            (x.min(y), x.max(y))
        };
        // Only meaningful when the maximum is unique.
        let ta = a.final_tension();
        let max = ta.scalar(pa.0, pa.1);
        let unique =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| ta.scalar(i, j) == max).count() == 1;
        check("conflict pair maps through permutation", !unique || mapped == pa);

        let f = rng.normal_vec(d, 1.0);
        let homogeneous = FeatureSpace::new(vec![f; n], SpaceTag::Fact).unwrap();
        let h = evolve(&homogeneous, &unit).unwrap();
        let first = &h.final_state().features[0];
        check("homogeneity preservation", h.final_state().features.iter().all(|g| g == first));

        let consensus = extract_consensus(&a);
        let exact = (0..d).all(|k| {
            let m = a.final_state().features.iter().map(|g| g[k]).sum::<f64>() / n as f64;
            (consensus[k] - m).abs() <= 1e-12
        });
        check("consensus exactness", exact);

        let v = rng.normal_vec(d, 1.0);
        let tied =
            FeatureSpace::new(vec![vec![0.0; d], v.clone(), v.iter().map(|x| -x).collect()], SpaceTag::Fact).unwrap();
        // Four pairs share the maximum here; the smallest must win.
        let top_tie = FeatureSpace::new(vec![vec![0.0; d], v.clone(), vec![0.0; d], v], SpaceTag::Fact).unwrap();
        check("argmax tie-breaking", compute_tension(&tied).argmax_pair() == Some((1, 2)));
        check("argmax tie-breaking", compute_tension(&top_tie).argmax_pair() == Some((0, 1)));
    }
    failures.sort();
    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{TRIALS} random instances per property, all hold")
        } else {
            format!("violated: {}", failures.join(", "))
        },
    )
}

fn separability(runs: &FullRuns) -> Outcome {
    let acc = mean(&runs.accuracies);
    let slowest = runs.durations.iter().max().unwrap().as_secs_f64();
    let epochs: Vec<usize> = runs.outcomes.iter().map(|o| o.history.len()).collect();
    outcome(
        acc >= 0.95 && slowest < 300.0 && epochs.iter().all(|&e| e <= 50),
        format!(
            "mean test accuracy {acc:.4} over {SEEDS} seeds {:?}, epochs {epochs:?}, slowest run {slowest:.1}s",
            runs.accuracies
        ),
    )
}

fn conflict_localization(runs: &FullRuns) -> Outcome {
    const TRIALS: usize = 500;
    let model = &runs.outcomes[0].model;
    let ds = &runs.datasets[0];
    let test = ds.indices(Split::Test);
    let unit = &model.fact_field.unit;
    let mut rng = Rng::new(77);
    let (mut argmax_hits, mut strict_hits) = (0, 0);
    for _ in 0..TRIALS {
        let a = &ds.samples[test[rng.below(test.len())]];
        let b = &ds.samples[test[rng.below(test.len())]];
        let center = model.heads.project(&a.raw).unwrap().fact_text;
        let other = model.heads.project(&b.raw).unwrap().fact_image;
        let scale = (center.iter().map(|x| x * x).sum::<f64>() / center.len() as f64).sqrt().max(1e-3);
        let outlier_at = rng.below(4);
        let features: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                if i == outlier_at {
                    // Another post's feature, pushed to at least the center's scale away.
                    let gap: f64 = center.iter().zip(&other).map(|(c, o)| (c - o).powi(2)).sum::<f64>().sqrt();
                    let lift = if gap < scale { scale / gap.max(1e-9) } else { 1.0 };
                    center.iter().zip(&other).map(|(c, o)| c + lift * (o - c)).collect()
                } else {
                    center.iter().map(|c| c + 0.05 * scale * rng.normal()).collect()
                }
            })
            .collect();
        let space = FeatureSpace::new(features, SpaceTag::Fact).unwrap();
        let t = evolve(&space, unit).unwrap().final_tension();
        let (i, j) = t.argmax_pair().unwrap();
        if i == outlier_at || j == outlier_at {
            argmax_hits += 1;
        }
        let inliers: Vec<usize> = (0..4).filter(|&k| k != outlier_at).collect();
        let min_out = inliers.iter().map(|&k| t.scalar(k, outlier_at)).fold(f64::INFINITY, f64::min);
        let max_in = inliers
            .iter()
            .flat_map(|&x| inliers.iter().map(move |&y| (x, y)))
            .filter(|(x, y)| x < y)
            .map(|(x, y)| t.scalar(x, y))
            .fold(0.0, f64::max);
        if min_out > max_in {
            strict_hits += 1;
        }
    }
    let rate = argmax_hits as f64 / TRIALS as f64;
    outcome(
        rate >= 0.9,
        format!(
            "argmax pair holds the outlier in {argmax_hits}/{TRIALS} ({rate:.3}); every outlier tension above every inlier tension in {strict_hits}/{TRIALS}"
        ),
    )
}

fn ablation_direction(runs: &FullRuns) -> Outcome {
    let full = mean(&runs.accuracies);
    let mut rows = Vec::new();
    let mut not_above = 0;
    let mut lower = 0;
    for variant in table_variants() {
        let accs: Vec<f64> = (0..SEEDS as usize)
            .map(|s| {
                let config = TrainConfig { seed: s as u64, ..TrainConfig::default() };
                run_variant(&config, &runs.datasets[s], &variant).unwrap().metrics.accuracy
            })
            .collect();
        let delta = mean(&accs) - full;
        if delta <= 0.0 {
            not_above += 1;
        }
        if delta <= -0.005 {
            lower += 1;
        }
        rows.push(format!("{} {:+.4}", variant.name, delta));
    }
    let n = rows.len();
    outcome(
        not_above == n && lower >= 5,
        format!(
            "full {full:.4}; {not_above}/{n} variants at or below full, {lower}/{n} lower by >= 0.005; deltas: {}",
            rows.join(", ")
        ),
    )
}

fn pairwise_auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == Label::Fake && lj == Label::Real {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| num / pairs)
}

fn metric_oracles() -> Outcome {
    let mut rng = Rng::new(99);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = 1 + rng.below(50);
        let labels: Vec<Label> = (0..n).map(|_| if rng.bernoulli(0.5) { Label::Fake } else { Label::Real }).collect();
        // Coarse grid so ties are common, including ties at the threshold.
        let scores: Vec<f64> = (0..n).map(|_| rng.below(11) as f64 / 10.0).collect();
        let m = compute_metrics(&scores, &labels);
        let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
        for (s, l) in scores.iter().zip(&labels) {
            match (*s >= 0.5, *l == Label::Fake) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, false) => tn += 1.0,
                (false, true) => fn_ += 1.0,
            }
        }
        let f1 = |a: f64, b: f64, c: f64| if 2.0 * a + b + c == 0.0 { 0.0 } else { 2.0 * a / (2.0 * a + b + c) };
        if m.auc != pairwise_auc(&scores, &labels)
            || m.f1_fake != f1(tp, fp, fn_)
            || m.f1_real != f1(tn, fn_, fp)
            || m.accuracy != (tp + tn) / n as f64
        {
            mismatches += 1;
        }
    }

    let mut aucs = Vec::new();
    for seed in 0..20 {
        let ds = benchmark(seed, SynthSpec { conflict_strength: 0.0, ..SynthSpec::default() });
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let o = harness::train(&config, &ds).unwrap();
        aucs.push(harness::evaluate(&o.model, &ds, Split::Test).unwrap().auc.unwrap());
    }
    let null_auc = mean(&aucs);
    outcome(
        mismatches == 0 && (0.45..=0.55).contains(&null_auc),
        format!("{mismatches}/200 oracle mismatches; null-signal mean AUC {null_auc:.4} over 20 seeds"),
    )
}

fn determinism_and_persistence() -> Outcome {
    let ds = benchmark(11, SynthSpec { n_samples: 400, ..SynthSpec::default() });
    let config = TrainConfig { seed: 11, max_epochs: 4, ..TrainConfig::default() };
    let a = harness::train(&config, &ds).unwrap();
    let b = harness::train(&config, &ds).unwrap();
    let ck_a = Checkpoint::new(config.clone(), a.model.clone(), a.optimizer.clone()).to_json();
    let ck_b = Checkpoint::new(config.clone(), b.model, b.optimizer).to_json();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::new(config, a.model.clone(), a.optimizer).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let before = harness::evaluate(&a.model, &ds, Split::Test).unwrap();
    let after = harness::evaluate(&loaded.model, &ds, Split::Test).unwrap();
    let bits = |m: &harness::MetricsReport| {
        (m.accuracy.to_bits(), m.f1_fake.to_bits(), m.f1_real.to_bits(), m.auc.map(f64::to_bits))
    };
    let identical = ck_a == ck_b;
    let round_trip = before == after && bits(&before) == bits(&after) && loaded.model == a.model;
    outcome(
        identical && round_trip,
        format!("repeat run identical checkpoint: {identical}; save/load reproduces metrics bit-exactly: {round_trip}"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    record("gradient fidelity", gradient_fidelity());
    record("mechanism invariants", mechanism_invariants());
    record("metric oracles", metric_oracles());
    record("determinism and persistence", determinism_and_persistence());
    let runs = full_runs();
    record("synthetic separability", separability(&runs));
    record("conflict localization", conflict_localization(&runs));
    record("ablation direction", ablation_direction(&runs));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
