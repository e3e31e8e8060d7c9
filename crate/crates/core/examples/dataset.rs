//! Generate a synthetic dataset, split it, write it as JSON lines and read it
//! back.
//!
//! `cargo run --example dataset -- [path]`

use dccf::data::{self, FakeType, Split};
use dccf::SynthSpec;

fn main() -> dccf::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dccf-example.jsonl"));
    let spec = SynthSpec { n_samples: 500, ..SynthSpec::default() };
    let generated = data::generate_synthetic_detailed(&spec)?;
    let ds = data::split(&generated.dataset, [0.8, 0.1, 0.1], spec.seed)?;

    for t in [FakeType::FactMismatch, FakeType::SentimentMismatch, FakeType::Both] {
        let count = generated.fake_types.iter().filter(|x| **x == Some(t)).count();
        println!("{t:?}: {count}");
    }
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split:?}: {} samples", ds.indices(split).len());
    }

    data::save_dataset(&ds, &path)?;
    let back = data::load_dataset(&path)?;
    println!("wrote {} and read it back identical: {}", path.display(), back == ds);
    Ok(())
}
