//! Evaluation metrics: per-source binary accuracy, ROC-AUC, fine-grained
//! level agreement, Turing-test success rates and the Cochran–Armitage
//! trend test.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::datamodel::{Label, Source};
use crate::error::{Error, Result};
use crate::registry::DimensionRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAccuracy {
    /// Sources with no examples are absent.
    pub by_source: BTreeMap<Source, f64>,
    pub counts: BTreeMap<Source, usize>,
    /// Accuracy over all examples pooled, not the mean of the per-source values.
    pub overall: f64,
}

pub fn binary_accuracy(
    preds: &[Label],
    labels: &[Label],
    sources: &[Source],
) -> Result<BinaryAccuracy> {
    if preds.len() != labels.len() || preds.len() != sources.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            actual: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut hits: BTreeMap<Source, (usize, usize)> = BTreeMap::new();
    for ((p, y), s) in preds.iter().zip(labels).zip(sources) {
        let e = hits.entry(*s).or_default();
        e.1 += 1;
        if p == y {
            e.0 += 1;
        }
    }
    let correct: usize = hits.values().map(|(c, _)| c).sum();
    Ok(BinaryAccuracy {
        by_source: hits
            .iter()
            .map(|(s, (c, n))| (*s, *c as f64 / *n as f64))
            .collect(),
        counts: hits.iter().map(|(s, (_, n))| (*s, *n)).collect(),
        overall: correct as f64 / preds.len() as f64,
    })
}

/// Probability that a random machine example scores above a random human
/// one, ties counting one half. Computed from mid-ranks.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|l| l.is_machine()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("ROC-AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid
            * idx[i..j]
                .iter()
                .filter(|&&k| labels[k].is_machine())
                .count() as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelAgreement {
    pub exact: f64,
    pub grouped: f64,
    pub nearby: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineGrained {
    pub per_dim: Vec<LevelAgreement>,
    pub overall: LevelAgreement,
    pub n: usize,
}

/// Machine-like, unclear or human-like bucket of a level on an `r`-point scale.
/// For the 5-point scale: {1,2}, {3}, {4,5}.
pub fn level_bucket(level: u8, levels: usize) -> u8 {
    let twice = 2 * level as usize;
    let mid = levels + 1;
    match twice.cmp(&mid) {
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => 1,
        std::cmp::Ordering::Greater => 2,
    }
}

pub fn fine_grained_accuracy(
    pred: &[Vec<u8>],
    truth: &[Vec<u8>],
    levels: usize,
) -> Result<FineGrained> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("no rated predictions to score"));
    }
    let k = truth[0].len();
    let mut counts = vec![[0usize; 3]; k];
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != k || t.len() != k {
            return Err(Error::Shape {
                expected: k,
                actual: p.len().min(t.len()),
            });
        }
        for d in 0..k {
            if p[d] == 0 || t[d] == 0 || p[d] as usize > levels || t[d] as usize > levels {
                return Err(Error::invalid(format!("level outside 1..={levels}")));
            }
            let c = &mut counts[d];
            c[0] += (p[d] == t[d]) as usize;
            c[1] += (level_bucket(p[d], levels) == level_bucket(t[d], levels)) as usize;
            c[2] += (p[d].abs_diff(t[d]) <= 1) as usize;
        }
    }
    let n = pred.len() as f64;
    let per_dim: Vec<LevelAgreement> = counts
        .iter()
        .map(|c| LevelAgreement {
            exact: c[0] as f64 / n,
            grouped: c[1] as f64 / n,
            nearby: c[2] as f64 / n,
        })
        .collect();
    let tot = counts
        .iter()
        .fold([0usize; 3], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2]]);
    let cells = n * k as f64;
    Ok(FineGrained {
        per_dim,
        overall: LevelAgreement {
            exact: tot[0] as f64 / cells,
            grouped: tot[1] as f64 / cells,
            nearby: tot[2] as f64 / cells,
        },
        n: pred.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub rate: f64,
    pub trials: usize,
    /// Judged human more often than not.
    pub passes: bool,
}

/// Fraction of trials in which each system was judged human. Systems with
/// no trials do not appear.
pub fn success_rate<S: AsRef<str>>(judgments: &[(S, bool)]) -> BTreeMap<String, SuccessRate> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (sys, human) in judgments {
        let e = acc.entry(sys.as_ref().to_string()).or_default();
        e.1 += 1;
        e.0 += *human as usize;
    }
    acc.into_iter()
        .map(|(s, (h, n))| {
            let rate = h as f64 / n as f64;
            (
                s,
                SuccessRate {
                    rate,
                    trials: n,
                    passes: rate > 0.5,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendBin {
    pub n: u64,
    pub successes: u64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub z: f64,
    /// Two-sided, standard normal tail.
    pub p: f64,
}

/// Cochran–Armitage test for a linear trend in proportions across ordered bins.
pub fn cochran_armitage(bins: &[TrendBin]) -> Result<TrendTest> {
    if bins.len() < 2 {
        return Err(Error::Degenerate(
            "trend test needs at least two bins".into(),
        ));
    }
    if let Some(b) = bins.iter().find(|b| b.successes > b.n) {
        return Err(Error::invalid(format!(
            "bin has {} successes out of {}",
            b.successes, b.n
        )));
    }
    let total: u64 = bins.iter().map(|b| b.n).sum();
    let succ: u64 = bins.iter().map(|b| b.successes).sum();
    if total == 0 {
        return Err(Error::Degenerate("trend test bins are empty".into()));
    }
    if succ == 0 || succ == total {
        return Err(Error::Degenerate("pooled proportion is 0 or 1".into()));
    }
    let n_tot = total as f64;
    let pbar = succ as f64 / n_tot;
    let (mut t_stat, mut snt, mut snt2) = (0.0, 0.0, 0.0);
    for b in bins {
        let n = b.n as f64;
        t_stat += b.score * (b.successes as f64 - n * pbar);
        snt += n * b.score;
        snt2 += n * b.score * b.score;
    }
    let var = pbar * (1.0 - pbar) * (snt2 - snt * snt / n_tot);
    if !(var > 0.0) {
        return Err(Error::Degenerate("bin scores do not vary".into()));
    }
    let z = t_stat / var.sqrt();
    Ok(TrendTest {
        z,
        p: erfc(z.abs() / std::f64::consts::SQRT_2),
    })
}

/// Groups `(value, success)` observations into fixed-width bins aligned to
/// multiples of `width`, scoring non-empty bins by their integer index
/// (1 for the lowest bin).
pub fn width_bins(obs: &[(f64, bool)], width: f64) -> Vec<TrendBin> {
    if obs.is_empty() || !(width > 0.0) {
        return Vec::new();
    }
    let start = obs
        .iter()
        .map(|o| (o.0 / width).floor())
        .fold(f64::INFINITY, f64::min);
    let mut bins: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for (v, ok) in obs {
        let idx = ((v / width).floor() - start) as i64;
        let e = bins.entry(idx).or_default();
        e.0 += 1;
        e.1 += *ok as u64;
    }
    bins.into_iter()
        .map(|(i, (n, s))| TrendBin {
            n,
            successes: s,
            score: (i + 1) as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub group: String,
    pub bins: Vec<TrendBin>,
    pub test: Option<TrendTest>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n: usize,
    pub acc_by_source: BTreeMap<Source, f64>,
    pub count_by_source: BTreeMap<Source, usize>,
    pub overall_acc: f64,
    /// Absent when only one class is present.
    pub roc_auc: Option<f64>,
    pub fine_grained: Option<FineGrained>,
    pub success_rate_by_system: BTreeMap<String, SuccessRate>,
    pub trend_tests: Vec<TrendResult>,
}

impl EvalReport {
    /// Text tables: binary accuracy by source, then per-dimension level agreement.
    pub fn to_tables(&self, registry: &DimensionRegistry) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "binary accuracy ({} split, {} dialogues)",
            self.split, self.n
        );
        let _ = writeln!(s, "{:<14} {:>8} {:>8}", "data type", "acc", "count");
        for src in Source::ALL {
            let name = match src {
                Source::HH => "Human-Human",
                Source::HM => "Human-Machine",
                Source::PH => "Pseudo Human",
            };
            match self.acc_by_source.get(&src) {
                Some(a) => {
                    let _ = writeln!(s, "{name:<14} {a:>8.4} {:>8}", self.count_by_source[&src]);
                }
                None => {
                    let _ = writeln!(s, "{name:<14} {:>8} {:>8}", "--", 0);
                }
            }
        }
        let _ = writeln!(
            s,
            "{:<14} {:>8.4} {:>8}",
            "Overall", self.overall_acc, self.n
        );
        match self.roc_auc {
            Some(a) => {
                let _ = writeln!(s, "ROC-AUC {a:.4}");
            }
            None => {
                let _ = writeln!(s, "ROC-AUC --");
            }
        }
        if let Some(fg) = &self.fine_grained {
            let _ = writeln!(s);
            let _ = writeln!(s, "level agreement ({} rated dialogues)", fg.n);
            let _ = writeln!(
                s,
                "{:<4} {:>8} {:>8} {:>8}",
                "dim", "exact", "group", "nearby"
            );
            for (k, a) in fg.per_dim.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{:<4} {:>8.4} {:>8.4} {:>8.4}",
                    registry.code(k),
                    a.exact,
                    a.grouped,
                    a.nearby
                );
            }
            let o = fg.overall;
            let _ = writeln!(
                s,
                "{:<4} {:>8.4} {:>8.4} {:>8.4}",
                "all", o.exact, o.grouped, o.nearby
            );
        }
        if !self.success_rate_by_system.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>8} {:>6}",
                "system", "success", "trials", "> 0.5"
            );
            for (sys, r) in &self.success_rate_by_system {
                let _ = writeln!(
                    s,
                    "{sys:<10} {:>8.4} {:>8} {:>6}",
                    r.rate,
                    r.trials,
                    if r.passes { "yes" } else { "no" }
                );
            }
        }
        if !self.trend_tests.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<6} {:>9} {:>9}", "group", "Z", "p");
            for t in &self.trend_tests {
                match &t.test {
                    Some(tt) => {
                        let _ = writeln!(s, "{:<6} {:>9.4} {:>9.5}", t.group, tt.z, tt.p);
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "{:<6} {:>9} {:>9}  {}",
                            t.group,
                            "--",
                            "--",
                            t.note.as_deref().unwrap_or("")
                        );
                    }
                }
            }
        }
        s
    }
}
