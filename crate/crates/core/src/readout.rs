//! Turns the two pooled embedding sources into the single vector the
//! scoring head projects.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::datamodel::EmbeddingPair;
use crate::error::Error;

/// Logits of the two-way softmax gate used by fused pooling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FusionParams {
    pub w_first: f64,
    pub w_last: f64,
}

impl FusionParams {
    /// Gate coefficients `(α_first, α_last)`, positive and summing to one.
    pub fn coefficients(&self) -> (f64, f64) {
        let m = self.w_first.max(self.w_last);
        let a = (self.w_first - m).exp();
        let b = (self.w_last - m).exp();
        let s = a + b;
        (a / s, b / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    Mean,
    Last,
    Fused,
}

impl fmt::Display for ReadoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReadoutKind::Mean => "mean",
            ReadoutKind::Last => "last",
            ReadoutKind::Fused => "fused",
        })
    }
}

impl FromStr for ReadoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(ReadoutKind::Mean),
            "last" => Ok(ReadoutKind::Last),
            "fused" => Ok(ReadoutKind::Fused),
            other => Err(Error::invalid(format!(
                "unknown readout {other:?} (expected mean, last or fused)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ReadoutMode {
    Mean,
    Last,
    Fused(FusionParams),
}

impl ReadoutMode {
    /// Mode of the given kind with a neutral gate for `Fused`.
    pub fn from_kind(kind: ReadoutKind) -> Self {
        match kind {
            ReadoutKind::Mean => ReadoutMode::Mean,
            ReadoutKind::Last => ReadoutMode::Last,
            ReadoutKind::Fused => ReadoutMode::Fused(FusionParams::default()),
        }
    }

    pub fn kind(&self) -> ReadoutKind {
        match self {
            ReadoutMode::Mean => ReadoutKind::Mean,
            ReadoutMode::Last => ReadoutKind::Last,
            ReadoutMode::Fused(_) => ReadoutKind::Fused,
        }
    }

    pub fn fusion(&self) -> Option<FusionParams> {
        match self {
            ReadoutMode::Fused(f) => Some(*f),
            _ => None,
        }
    }
}

/// `h` for one dialogue.
pub fn readout(e: &EmbeddingPair, mode: &ReadoutMode) -> Vec<f64> {
    match mode {
        ReadoutMode::Mean => e.first_mean.clone(),
        ReadoutMode::Last => e.last.clone(),
        ReadoutMode::Fused(f) => {
            let (a, b) = f.coefficients();
            e.first_mean
                .iter()
                .zip(&e.last)
                .map(|(x, y)| a * x + b * y)
                .collect()
        }
    }
}
