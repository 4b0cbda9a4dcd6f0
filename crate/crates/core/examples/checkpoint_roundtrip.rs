//! Save a judge to a checkpoint, load it back and check that scores are
//! reproduced bit for bit.
//!
//! `cargo run --example checkpoint_roundtrip`

use likeness_judge::synth::{generate, SynthConfig};
use likeness_judge::{Model, Result};

pub fn run_example() -> Result<bool> {
    let data = generate(&SynthConfig {
        n_train: 10,
        n_val: 4,
        n_test: 4,
        ..SynthConfig::default()
    })?;
    let model = data.truth.model();
    let dir = std::env::temp_dir().join(format!("likeness-judge-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| likeness_judge::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join("model.json");
    model.save(&path)?;
    let back = Model::load(&path)?;
    let same = data
        .embeddings
        .iter()
        .map(|e| Ok(model.score(e)? == back.score(e)?))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .all(|b| b);
    let text = model.to_string_pretty();
    println!("{} bytes, first lines:", text.len());
    for line in text.lines().take(6) {
        println!("  {line}");
    }
    println!(
        "identical parameters: {}, identical scores: {same}",
        back == model
    );
    let _ = std::fs::remove_dir_all(&dir);
    Ok(same && back == model)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
