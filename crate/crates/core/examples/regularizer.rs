//! Effect of the row-symmetry penalty `λ ‖W_1 + W_2‖₂` on a classifier fit
//! to fixed scores.
//!
//! `cargo run --release --example regularizer`

use likeness_judge::classifier::{accuracy, sym_reg, train_clf, ClfConfig};
use likeness_judge::datamodel::Label;
use likeness_judge::synth::{generate, SynthConfig};
use likeness_judge::Result;

pub fn run_example() -> Result<Vec<(f64, f64, f64)>> {
    let data = generate(&SynthConfig {
        n_train: 300,
        n_val: 100,
        n_test: 100,
        ..SynthConfig::default()
    })?;
    // Scores from the planted head stand in for a trained one.
    let scored = |prefix: &str| -> Result<Vec<(Vec<f64>, Label)>> {
        data.labels
            .iter()
            .zip(&data.embeddings)
            .filter(|(l, _)| l.id.starts_with(prefix))
            .map(|(l, e)| Ok((data.truth.true_odl.scores(e)?, l.label)))
            .collect()
    };
    let (train, val, test) = (
        scored("syn-train")?,
        scored("syn-val")?,
        scored("syn-test")?,
    );
    let mut rows = Vec::new();
    for lambda in [0.0, 0.1, 10.0, 1e6] {
        let (p, _) = train_clf(
            &train,
            &val,
            &ClfConfig {
                lambda,
                lr: 1e-2,
                ..ClfConfig::default()
            },
        )?;
        let r = sym_reg(&p.weights);
        let acc = accuracy(&test, &p)?;
        println!("λ = {lambda:<8e} ‖W1+W2‖ = {r:.2e}  test accuracy {acc:.4}");
        rows.push((lambda, r, acc));
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
