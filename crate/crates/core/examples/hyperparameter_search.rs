//! Small random search over learning rates, batch sizes, dropout and the
//! initial cut-point scale, followed by a sensitivity table.
//!
//! `cargo run --release --example hyperparameter_search`

use likeness_judge::pipeline::TrainConfig;
use likeness_judge::search::{
    run_search, sensitivity, sensitivity_table, SearchResult, SearchSpace, Strategy,
};
use likeness_judge::synth::{generate, SynthConfig};
use likeness_judge::Result;

pub fn run_example() -> Result<SearchResult> {
    let data = generate(&SynthConfig {
        n_train: 300,
        n_val: 100,
        n_test: 100,
        ..SynthConfig::default()
    })?;
    let (ds, _) = data.dataset()?;
    let space = SearchSpace {
        odl_lr: vec![1e-3, 1e-2],
        odl_batch: vec![32, 64],
        scale: (1.0, 10.0, 0.01),
        dropout: vec![0.0, 0.3],
        clf_lr: vec![1e-2],
        clf_batch: vec![64],
        budget: 4,
        strategy: Strategy::UniformRandom,
        seed: 1,
    };
    let mut base = TrainConfig::default();
    base.odl.max_epochs = 40;
    base.clf.max_epochs = 60;
    let result = run_search(&space, &base, &ds, |t| {
        println!(
            "trial {}: lr {:e} batch {} s0 {:.2} dropout {} → val acc {:.4}",
            t.index,
            t.params.odl_lr,
            t.params.odl_batch,
            t.params.scale_init,
            t.params.dropout,
            t.val_accuracy
        );
        Ok(())
    })?;
    println!("ranking {:?}", result.ranking);
    print!("{}", sensitivity_table(&sensitivity(&result.trials)));
    Ok(result)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
