//! Generate a synthetic benchmark, train the full detector and report test metrics.
//!
//! `cargo run --release --example quickstart -- [seed] [n_samples]`

use std::time::Instant;

use dccf::{data, harness, SynthSpec, TrainConfig};

fn main() -> dccf::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_samples: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);

    let spec = SynthSpec { seed, n_samples, ..SynthSpec::default() };
    let config = TrainConfig { seed, ..TrainConfig::default() };
    let ds = data::split(&data::generate_synthetic(&spec)?, config.split_fractions(), seed)?;

    let start = Instant::now();
    let outcome = harness::train(&config, &ds)?;
    for r in &outcome.history {
        println!(
            "epoch {:>3}  loss {:.4}  val_acc {:.4}{}",
            r.epoch,
            r.train_loss,
            r.val_accuracy,
            if r.improved { "  *" } else { "" }
        );
    }
    let m = harness::evaluate(&outcome.model, &ds, data::Split::Test)?;
    println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
