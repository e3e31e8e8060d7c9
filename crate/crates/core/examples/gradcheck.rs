//! Compare analytic gradients of the whole detector with central finite
//! differences, for each tension mode and each ablation row.
//!
//! `cargo run --release --example gradcheck`

use dccf::harness::ablation::table_variants;
use dccf::harness::gradcheck::{pipeline_gradcheck, GradCheckSettings};
use dccf::tensionfield::TensionMode;

fn main() -> dccf::Result<()> {
    let mut cases = vec![
        ("elementwise, shared g".to_string(), GradCheckSettings::default()),
        (
            "scalar, per-iteration g".to_string(),
            GradCheckSettings { tension_mode: TensionMode::Scalar, shared_transform: false, ..Default::default() },
        ),
    ];
    for v in table_variants() {
        cases.push((v.name.clone(), GradCheckSettings { ablation: v.flags, ..Default::default() }));
    }
    for (name, settings) in cases {
        let r = pipeline_gradcheck(&settings)?;
        println!(
            "{name:<26} {:>5} params  max rel error {:.2e}  {}",
            r.checked,
            r.max_rel_error,
            if r.passes(1e-4) { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
