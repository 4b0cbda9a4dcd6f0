//! Per-dimension contributions behind a single human/machine decision.
//!
//! `c_k = z̃_k · w_k`, where `z̃` is the score vector standardized with the
//! training-set statistics and `w` the machine-direction weight. Positive
//! contributions push towards "machine", negative ones towards "human".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, ClfParams};
use crate::datamodel::Label;
use crate::error::{Error, Result};
use crate::numerics::apply_standardizer;
use crate::registry::DimensionRegistry;

/// Number of dimensions listed in a report.
pub const DEFAULT_TOP: usize = 8;

/// Which weight vector multiplies the standardized scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// `W_machine - W_human`.
    #[default]
    Difference,
    /// The raw machine row.
    MachineRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    MachineEvidence,
    HumanEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub dim_id: usize,
    pub code: String,
    pub contribution: f64,
    pub sign: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub id: String,
    pub decision: Label,
    pub prob_machine: f64,
    pub margin: f64,
    pub contributions: Vec<f64>,
    pub top: Vec<TopEntry>,
}

pub fn contributions(z: &[f64], p: &ClfParams, source: WeightSource) -> Result<Vec<f64>> {
    if p.standardizer.dim() == 0 {
        return Err(Error::invalid("classifier has no fitted standardizer"));
    }
    let zt = apply_standardizer(z, &p.standardizer)?;
    let w = match source {
        WeightSource::Difference => p.margin_weights(),
        WeightSource::MachineRow => p.machine_row().to_vec(),
    };
    Ok(zt.iter().zip(&w).map(|(a, b)| a * b).collect())
}

/// Dimension ids ordered by `|c_k|` descending, ties by id.
pub fn rank(c: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].abs().total_cmp(&c[a].abs()).then(a.cmp(&b)));
    idx
}

pub fn top_k(c: &[f64], k: usize, registry: &DimensionRegistry) -> Vec<TopEntry> {
    rank(c)
        .into_iter()
        .take(k)
        .map(|d| TopEntry {
            dim_id: d,
            code: registry.code(d),
            contribution: c[d],
            sign: if c[d] > 0.0 {
                Evidence::MachineEvidence
            } else {
                Evidence::HumanEvidence
            },
        })
        .collect()
}

/// Classifies `z` and explains the decision.
pub fn explain(
    id: &str,
    z: &[f64],
    p: &ClfParams,
    source: WeightSource,
    k: usize,
    registry: &DimensionRegistry,
) -> Result<AttributionReport> {
    let d = classify(z, p)?;
    let c = contributions(z, p, source)?;
    Ok(AttributionReport {
        id: id.to_string(),
        decision: d.label,
        prob_machine: d.prob_machine,
        margin: d.margin,
        top: top_k(&c, k, registry),
        contributions: c,
    })
}

impl AttributionReport {
    /// Aligned text table of the top entries.
    pub fn to_table(&self, registry: &DimensionRegistry) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "dialogue {}  decision {}  p(machine) {:.4}  margin {:+.4}",
            self.id, self.decision, self.prob_machine, self.margin
        );
        let _ = writeln!(
            s,
            "{:>4}  {:<4} {:<28} {:>10}  evidence",
            "rank", "code", "dimension", "c_k"
        );
        for (i, e) in self.top.iter().enumerate() {
            let name = registry
                .get(e.dim_id)
                .map(|d| d.name.as_str())
                .unwrap_or("");
            let ev = match e.sign {
                Evidence::MachineEvidence => "machine",
                Evidence::HumanEvidence => "human",
            };
            let _ = writeln!(
                s,
                "{:>4}  {:<4} {:<28} {:>+10.4}  {}",
                i + 1,
                e.code,
                name,
                e.contribution,
                ev
            );
        }
        s
    }
}
