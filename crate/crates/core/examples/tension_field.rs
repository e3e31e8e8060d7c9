//! Evolve a small feature space by hand and watch the tension between an
//! outlier and its neighbours.
//!
//! `cargo run --example tension_field`

use dccf::numcore::Rng;
use dccf::tensionfield::{
    compute_tension, evolve, extract_conflict, extract_consensus, tension_to_weights, DarfuUnit, FeatureSpace,
    SpaceTag, TensionMode,
};

fn print_matrix(rows: &[Vec<f64>]) {
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:8.4}")).collect();
        println!("    {}", cells.join(" "));
    }
}

fn main() -> dccf::Result<()> {
    let mut rng = Rng::new(7);
    let d = 6;
    let center = rng.normal_vec(d, 1.0);
    let mut features: Vec<Vec<f64>> = (0..3).map(|_| center.iter().map(|c| c + 0.1 * rng.normal()).collect()).collect();
    features.push(rng.normal_vec(d, 1.5));
    let space = FeatureSpace::new(features, SpaceTag::Fact)?;

    let t0 = compute_tension(&space);
    println!("initial scalar tension (feature 3 is the outlier):");
    print_matrix(&t0.scalar_rows());

    let w = tension_to_weights(&t0, 1.5, TensionMode::Scalar);
    println!("attraction weights of feature 0 on each feature, dimension 0:");
    let row: Vec<f64> = (0..space.len()).map(|j| w.weight(0, j)[0]).collect();
    print_matrix(&[row]);

    let unit = DarfuUnit::new(d, 1.5, 4, TensionMode::Elementwise, true, &mut rng)?;
    let trace = evolve(&space, &unit)?;
    for (t, tension) in trace.tensions.iter().enumerate() {
        println!("iteration {t}: tension used for the update");
        print_matrix(&tension.scalar_rows());
    }
    let (pair, _) = extract_conflict(&trace)?;
    let consensus = extract_consensus(&trace);
    println!("conflict pair {pair:?}, consensus norm {:.4}", dccf::numcore::ops::norm(&consensus));
    Ok(())
}
