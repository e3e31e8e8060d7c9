//! Save a trained model, load it back and check that evaluation is unchanged.
//!
//! `cargo run --release --example checkpoint`

use dccf::data::{self, Split};
use dccf::harness::{self, Checkpoint};
use dccf::{SynthSpec, TrainConfig};

fn main() -> dccf::Result<()> {
    let config = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let spec = SynthSpec { n_samples: 600, ..SynthSpec::default() };
    let ds = data::split(&data::generate_synthetic(&spec)?, config.split_fractions(), config.seed)?;
    let outcome = harness::train(&config, &ds)?;

    let path = std::env::temp_dir().join("dccf-example-checkpoint.json");
    Checkpoint::new(config.clone(), outcome.model.clone(), outcome.optimizer).save(&path)?;
    let loaded = Checkpoint::load(&path)?;

    let before = harness::evaluate(&outcome.model, &ds, Split::Test)?;
    let after = harness::evaluate(&loaded.model, &ds, Split::Test)?;
    println!("checkpoint {} ({} optimizer steps)", path.display(), loaded.optimizer.step_count);
    println!("config hash {}", loaded.config.hash());
    println!("accuracy before {:.4}, after {:.4}, identical: {}", before.accuracy, after.accuracy, before == after);
    std::fs::remove_file(&path)?;
    Ok(())
}
