//! Train the full detector and every component-removal variant on the same
//! synthetic benchmark, averaging test accuracy over several seeds.
//!
//! `cargo run --release --example ablation -- [n_seeds]`

use dccf::harness::ablation::{render_table, run_ablation, table_variants, AblationVariant, VariantReport};
use dccf::{data, SynthSpec, TrainConfig};

fn main() -> dccf::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut variants = vec![AblationVariant::full()];
    variants.extend(table_variants());

    let mut sums = vec![0.0; variants.len()];
    let mut last: Vec<VariantReport> = Vec::new();
    for seed in 0..n_seeds {
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let spec = SynthSpec { seed, ..SynthSpec::default() };
        let ds = data::split(&data::generate_synthetic(&spec)?, config.split_fractions(), seed)?;
        let reports = run_ablation(&config, &ds, &variants)?;
        for (s, r) in sums.iter_mut().zip(&reports) {
            *s += r.metrics.accuracy;
        }
        println!("seed {seed}\n{}", render_table(&reports));
        last = reports;
    }

    println!("mean test accuracy over {n_seeds} seeds");
    let full = sums[0] / n_seeds as f64;
    for (r, s) in last.iter().zip(&sums) {
        let mean = s / n_seeds as f64;
        println!("{:<22} {:.4} {:+.4}", r.name, mean, mean - full);
    }
    Ok(())
}
