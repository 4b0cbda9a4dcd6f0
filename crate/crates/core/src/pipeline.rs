//! End-to-end training, scoring, judging and evaluation on a [`Dataset`].

use serde::{Deserialize, Serialize};

use crate::attribution::{explain, AttributionReport, WeightSource, DEFAULT_TOP};
use crate::checkpoint::Model;
use crate::classifier::{classify, train_clf, ClfConfig, ClfTrainingLog};
use crate::datamodel::{Dataset, EmbeddingPair, Label, Split};
use crate::error::{Error, Result};
use crate::eval::{
    binary_accuracy, cochran_armitage, fine_grained_accuracy, roc_auc, success_rate, width_bins,
    EvalReport, TrendResult,
};
use crate::odl::{distribution, predict_levels, train_odl, OdlConfig, OdlParams, OdlTrainingLog};
use crate::registry::DimensionRegistry;

/// Width of the duration bins used by the trend tests, in seconds.
pub const TREND_BIN_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub odl: OdlConfig,
    pub clf: ClfConfig,
}

impl TrainConfig {
    /// Uses one seed for both stages.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.odl.seed = seed;
        self.clf.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub odl: OdlTrainingLog,
    pub clf: ClfTrainingLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub z: Vec<f64>,
    pub levels: Vec<u8>,
}

fn embedding<'a>(ds: &'a Dataset, id: &str) -> Result<&'a EmbeddingPair> {
    ds.embedding(id)
        .ok_or_else(|| Error::invalid(format!("no embedding for {id}")))
}

/// Frozen scores and labels of every example in a split.
pub fn split_scores(odl: &OdlParams, ds: &Dataset, split: Split) -> Result<Vec<(Vec<f64>, Label)>> {
    ds.split(split)
        .map(|ex| Ok((odl.scores(embedding(ds, &ex.id)?)?, ex.label)))
        .collect()
}

/// Trains the scoring head on the rated examples, freezes it, then trains
/// the classifier on the scores of all train and validation examples.
pub fn train_model(ds: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainingSummary)> {
    let (odl, odl_log) = train_odl(ds, &cfg.odl)?;
    log::info!(
        "scoring head: best epoch {} val nll {:.5}",
        odl_log.best_epoch,
        odl_log.best_val_loss
    );
    let train = split_scores(&odl, ds, Split::Train)?;
    let val = split_scores(&odl, ds, Split::Val)?;
    let (clf, clf_log) = train_clf(&train, &val, &cfg.clf)?;
    log::info!(
        "classifier: best epoch {} val acc {:.4}",
        clf_log.best_epoch,
        clf_log.best_val_accuracy
    );
    Ok((
        Model { odl, clf },
        TrainingSummary {
            odl: odl_log,
            clf: clf_log,
        },
    ))
}

impl Model {
    pub fn score(&self, e: &EmbeddingPair) -> Result<ScoreRecord> {
        let z = self.odl.scores(e)?;
        let levels = predict_levels(&distribution(&z, &self.odl)?);
        Ok(ScoreRecord {
            id: e.id.clone(),
            z,
            levels,
        })
    }

    pub fn judge(
        &self,
        e: &EmbeddingPair,
        registry: &DimensionRegistry,
    ) -> Result<AttributionReport> {
        let z = self.odl.scores(e)?;
        explain(
            &e.id,
            &z,
            &self.clf,
            WeightSource::Difference,
            DEFAULT_TOP,
            registry,
        )
    }
}

/// Metrics of `model` on one split.
///
/// Success rates count a dialogue as passing when it is judged human; they
/// are keyed by source. Trend tests relate binary correctness to dialogue
/// duration, per source, whenever every example of that source has one.
pub fn evaluate(model: &Model, ds: &Dataset, split: Split) -> Result<EvalReport> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut sources = Vec::new();
    let mut margins = Vec::new();
    let mut pred_levels = Vec::new();
    let mut true_levels = Vec::new();
    let mut judgments = Vec::new();
    let mut by_source: std::collections::BTreeMap<String, Vec<Option<(f64, bool)>>> =
        Default::default();
    for ex in ds.split(split) {
        let e = embedding(ds, &ex.id)?;
        let z = model.odl.scores(e)?;
        let d = classify(&z, &model.clf)?;
        preds.push(d.label);
        labels.push(ex.label);
        sources.push(ex.source);
        margins.push(d.margin);
        judgments.push((ex.source.to_string(), d.label == Label::Human));
        by_source
            .entry(ex.source.to_string())
            .or_default()
            .push(ex.duration.map(|t| (t, d.label == ex.label)));
        if let Some(r) = &ex.ratings {
            pred_levels.push(predict_levels(&distribution(&z, &model.odl)?));
            true_levels.push(r.clone());
        }
    }
    if preds.is_empty() {
        return Err(Error::invalid(format!("the {split} split is empty")));
    }
    let acc = binary_accuracy(&preds, &labels, &sources)?;
    let both = labels.iter().any(|l| l.is_machine()) && labels.iter().any(|l| !l.is_machine());
    let auc = if both {
        Some(roc_auc(&margins, &labels)?)
    } else {
        None
    };
    let fine = if pred_levels.is_empty() {
        None
    } else {
        Some(fine_grained_accuracy(
            &pred_levels,
            &true_levels,
            ds.levels,
        )?)
    };
    let mut trend_tests = Vec::new();
    for (group, obs) in by_source {
        let Some(obs) = obs.into_iter().collect::<Option<Vec<_>>>() else {
            continue;
        };
        let bins = width_bins(&obs, TREND_BIN_SECONDS);
        let (test, note) = match cochran_armitage(&bins) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        trend_tests.push(TrendResult {
            group,
            bins,
            test,
            note,
        });
    }
    Ok(EvalReport {
        split: split.to_string(),
        n: preds.len(),
        acc_by_source: acc.by_source,
        count_by_source: acc.counts,
        overall_acc: acc.overall,
        roc_auc: auc,
        fine_grained: fine,
        success_rate_by_system: success_rate(&judgments),
        trend_tests,
    })
}
