//! Train both stages on a planted synthetic dataset and compare against the
//! generator's Bayes accuracies.
//!
//! `cargo run --release --example train_synthetic`

use likeness_judge::datamodel::Split;
use likeness_judge::pipeline::{evaluate, train_model, TrainConfig};
use likeness_judge::synth::{generate, SynthConfig};
use likeness_judge::Result;

pub struct Outcome {
    pub level_acc: f64,
    pub bayes_level_acc: f64,
    pub binary_acc: f64,
    pub bayes_binary_acc: f64,
}

pub fn run_example() -> Result<Outcome> {
    let data = generate(&SynthConfig {
        n_train: 600,
        n_val: 200,
        n_test: 200,
        seed: 7,
        ..SynthConfig::default()
    })?;
    let (ds, _) = data.dataset()?;
    let mut cfg = TrainConfig::default().with_seed(7);
    cfg.odl.lr = 1e-2;
    cfg.odl.dropout = 0.0;
    let (model, log) = train_model(&ds, &cfg)?;
    println!(
        "scoring head stopped at epoch {} (best {}), classifier best epoch {}",
        log.odl.epochs.len(),
        log.odl.best_epoch,
        log.clf.best_epoch
    );
    let report = evaluate(&model, &ds, Split::Test)?;
    print!("{}", report.to_tables(&ds.registry));
    let out = Outcome {
        level_acc: report.fine_grained.map(|f| f.overall.exact).unwrap_or(0.0),
        bayes_level_acc: data.truth.bayes_level_accuracy,
        binary_acc: report.overall_acc,
        bayes_binary_acc: data.truth.bayes_binary_accuracy,
    };
    println!(
        "exact level accuracy {:.4} (Bayes {:.4}); binary accuracy {:.4} (Bayes {:.4})",
        out.level_acc, out.bayes_level_acc, out.binary_acc, out.bayes_binary_acc
    );
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
