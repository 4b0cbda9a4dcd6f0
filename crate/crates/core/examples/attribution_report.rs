//! Explain individual decisions: per-dimension contributions and the top 8.
//!
//! `cargo run --release --example attribution_report`

use likeness_judge::attribution::AttributionReport;
use likeness_judge::registry::DimensionRegistry;
use likeness_judge::synth::{generate, SynthConfig};
use likeness_judge::Result;

pub fn run_example() -> Result<Vec<AttributionReport>> {
    let data = generate(&SynthConfig {
        n_train: 20,
        n_val: 10,
        n_test: 10,
        ..SynthConfig::default()
    })?;
    // The planted model is a complete judge, so no training is needed here.
    let model = data.truth.model();
    let registry = DimensionRegistry::standard();
    let mut reports = Vec::new();
    for e in data
        .embeddings
        .iter()
        .filter(|e| e.id.starts_with("syn-test"))
        .take(2)
    {
        let r = model.judge(e, &registry)?;
        print!("{}", r.to_table(&registry));
        let sum: f64 = r.contributions.iter().sum();
        println!("sum of contributions {sum:+.6}\n");
        reports.push(r);
    }
    Ok(reports)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
