//! Train briefly, then print the attribution report for one real and one
//! fake post.
//!
//! `cargo run --release --example explain`

use dccf::data::{self, Split};
use dccf::{harness, Label, SynthSpec, TrainConfig};

fn main() -> dccf::Result<()> {
    let config = TrainConfig { max_epochs: 15, ..TrainConfig::default() };
    let spec = SynthSpec { n_samples: 1000, ..SynthSpec::default() };
    let ds = data::split(&data::generate_synthetic(&spec)?, config.split_fractions(), config.seed)?;
    let model = harness::train(&config, &ds)?.model;

    for wanted in [Label::Real, Label::Fake] {
        let i = ds
            .indices(Split::Test)
            .into_iter()
            .find(|&i| ds.samples[i].label == wanted)
            .expect("both classes in the test split");
        let report = harness::explain(&model, &ds.samples[i])?;
        println!(
            "{}: p(fake) {:.3}, predicted {:?}, fact tension {:.4}, sentiment tension {:.4}",
            report.id, report.prob_fake, report.label, report.fact.conflict_tension, report.sentiment.conflict_tension
        );
        println!("{}", report.to_json());
    }
    Ok(())
}
