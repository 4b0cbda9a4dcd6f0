//! Evaluation metrics on hand-made inputs, including trend tests over
//! accuracy-by-duration bins of a published Turing-test study.
//!
//! `cargo run --example metrics`

use likeness_judge::datamodel::Label::{Human as H, Machine as M};
use likeness_judge::eval::{
    cochran_armitage, fine_grained_accuracy, roc_auc, success_rate, TrendBin, TrendTest,
};
use likeness_judge::Result;

/// (accuracy, count) per 5-second bin from 20 s to 60 s.
const DURATION_BINS: [(&str, [(f64, u64); 8]); 3] = [
    (
        "H-H",
        [
            (0.4, 5),
            (0.78, 50),
            (0.6513, 152),
            (0.7033, 246),
            (0.6839, 174),
            (0.7179, 78),
            (0.8421, 76),
            (0.7234, 141),
        ],
    ),
    (
        "H-M",
        [
            (0.0, 0),
            (0.7742, 31),
            (0.8333, 126),
            (0.8642, 162),
            (0.8498, 273),
            (0.8564, 195),
            (0.7737, 137),
            (0.7907, 43),
        ],
    ),
    (
        "PH",
        [
            (0.6624, 157),
            (0.6654, 257),
            (0.6337, 243),
            (0.6087, 92),
            (0.62, 50),
            (0.6333, 60),
            (0.5349, 43),
            (0.0, 0),
        ],
    ),
];

/// Non-empty bins scored by their position in the table.
pub fn duration_bins(rows: &[(f64, u64)]) -> Vec<TrendBin> {
    rows.iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(i, &(acc, n))| TrendBin {
            n,
            successes: (acc * n as f64).round() as u64,
            score: (i + 1) as f64,
        })
        .collect()
}

pub fn run_example() -> Result<Vec<(String, TrendTest)>> {
    let auc = roc_auc(&[0.9, 0.7, 0.7, 0.2, 0.1], &[M, M, H, H, H])?;
    println!("ROC-AUC {auc:.4}");

    let pred = vec![vec![5, 3, 1], vec![2, 4, 4]];
    let truth = vec![vec![4, 2, 1], vec![2, 5, 1]];
    let fg = fine_grained_accuracy(&pred, &truth, 5)?;
    println!(
        "levels: exact {:.3}, grouped {:.3}, within one {:.3}",
        fg.overall.exact, fg.overall.grouped, fg.overall.nearby
    );

    let judged: Vec<(&str, bool)> = (0..15)
        .map(|i| ("human speaker", i < 13))
        .chain((0..10).map(|i| ("system A", i < 3)))
        .collect();
    for (sys, r) in success_rate(&judged) {
        println!("{sys:<14} success {:.3} over {} trials", r.rate, r.trials);
    }

    let mut out = Vec::new();
    for (group, rows) in DURATION_BINS {
        let t = cochran_armitage(&duration_bins(&rows))?;
        println!("{group:<4} Z = {:+.4}  p = {:.5}", t.z, t.p);
        out.push((group.to_string(), t));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
