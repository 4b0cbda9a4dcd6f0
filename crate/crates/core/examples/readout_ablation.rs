//! Compare the mean, last-token and fused readouts on the same data.
//!
//! `cargo run --release --example readout_ablation`

use likeness_judge::datamodel::Split;
use likeness_judge::pipeline::{evaluate, train_model, TrainConfig};
use likeness_judge::readout::ReadoutKind;
use likeness_judge::synth::{generate, SynthConfig};
use likeness_judge::Result;

pub fn run_example() -> Result<Vec<(ReadoutKind, f64, f64)>> {
    // The planted head reads the mean vector; the last-token vector is a noisier copy.
    let data = generate(&SynthConfig {
        n_train: 400,
        n_val: 150,
        n_test: 150,
        last_noise: 1.5,
        ..SynthConfig::default()
    })?;
    let (ds, _) = data.dataset()?;
    let mut rows = Vec::new();
    for kind in [ReadoutKind::Mean, ReadoutKind::Last, ReadoutKind::Fused] {
        let mut cfg = TrainConfig::default();
        cfg.odl.readout = kind;
        cfg.odl.lr = 1e-2;
        cfg.odl.dropout = 0.0;
        cfg.odl.max_epochs = 60;
        let (model, log) = train_model(&ds, &cfg)?;
        let report = evaluate(&model, &ds, Split::Test)?;
        let exact = report.fine_grained.map(|f| f.overall.exact).unwrap_or(0.0);
        let gate = model
            .odl
            .readout
            .fusion()
            .map(|f| format!("{:.3?}", f.coefficients()))
            .unwrap_or_default();
        println!(
            "{kind:<6} val nll {:.4}  exact level {exact:.4}  binary {:.4} {gate}",
            log.odl.best_val_loss, report.overall_acc
        );
        rows.push((kind, log.odl.best_val_loss, exact));
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
