//! Cut-points and level distributions of the ordinal scoring head.
//!
//! `cargo run --example ordinal_layer`

use likeness_judge::odl::{cutpoints, level_probs};
use likeness_judge::Result;

pub fn run_example() -> Result<Vec<Vec<f64>>> {
    let scale = 2.1;
    println!("cut-points at s = {scale}: {:?}", cutpoints(scale, 5)?);
    let mut table = Vec::new();
    println!(
        "{:>6}  {:>7} {:>7} {:>7} {:>7} {:>7}",
        "z", "P(1)", "P(2)", "P(3)", "P(4)", "P(5)"
    );
    for z in [-3.0, -1.0, -0.35, 0.0, 0.35, 1.0, 3.0] {
        let (cat, _) = level_probs(z, scale, 5)?;
        println!(
            "{z:>6.2}  {}",
            cat.iter()
                .map(|p| format!("{p:>7.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        table.push(cat);
    }
    // a larger scale spreads the cut-points and sharpens the middle levels
    let (wide, _) = level_probs(0.0, 12.0, 5)?;
    println!("z = 0 at s = 12: {wide:.4?}");
    Ok(table)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
