//! Synthetic datasets drawn from a planted scoring head and classifier.
//!
//! Dialogue representations `h` are Gaussian with class means `±(m/2)·u`,
//! where the separating direction `u` is chosen so the Bayes-optimal rule
//! is linear in the planted scores `z = W h + b`. Each dimension's rating is
//! sampled from the planted cumulative-link distribution, so the ordinal
//! likelihood has a known optimum. Embeddings are rounded to `f32` before
//! anything else is computed, which makes the written files the exact
//! source of truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::Model;
use crate::classifier::{classify, ClfParams};
use crate::datamodel::{
    assemble, save_embeddings, save_labels, AssemblyReport, Dataset, EmbeddingPair, Label,
    LabeledExample, Language, Source, Split,
};
use crate::error::{Error, Result};
use crate::numerics::Standardizer;
use crate::odl::{cutpoints, distribution, predict_levels, OdlParams};
use crate::readout::ReadoutMode;
use crate::registry::NUM_DIMENSIONS;

pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Distance between the two class means of `h`.
    pub class_margin: f64,
    /// Per-coordinate standard deviation of `h` around its class mean.
    pub noise_std: f64,
    /// Standard deviation of the extra noise on the last-token vector.
    pub last_noise: f64,
    /// Planted projection rows have norm close to this.
    pub z_gain: f64,
    /// Planted scales are drawn uniformly from this range.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 16,
            k: NUM_DIMENSIONS,
            r: 5,
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            class_margin: 6.0,
            noise_std: 1.0,
            last_noise: 0.5,
            z_gain: 1.5,
            scale_range: (3.0, 6.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 3 || self.r > u8::MAX as usize {
            return Err(Error::invalid(format!(
                "r must be in 3..=255, got {}",
                self.r
            )));
        }
        if self.d == 0 || self.k == 0 {
            return Err(Error::invalid("d and k must be positive"));
        }
        if self.k != NUM_DIMENSIONS {
            return Err(Error::invalid(format!(
                "label files carry {NUM_DIMENSIONS} ratings, so k must be {NUM_DIMENSIONS} (got {})",
                self.k
            )));
        }
        if self.n_train < 2 || self.n_val < 2 || self.n_test < 2 {
            return Err(Error::invalid("each split needs at least 2 examples"));
        }
        for (name, v) in [
            ("class_margin", self.class_margin),
            ("noise_std", self.noise_std),
            ("last_noise", self.last_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        if self.noise_std == 0.0 && self.class_margin == 0.0 {
            return Err(Error::Degenerate(
                "noise_std and class_margin are both zero".into(),
            ));
        }
        if !(self.z_gain > 0.0 && self.z_gain.is_finite()) {
            return Err(Error::invalid("z_gain must be positive"));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(format!("bad scale_range ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// The planted model and the accuracies it achieves on the emitted test split.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub true_odl: OdlParams,
    pub true_clf: ClfParams,
    /// Exact-level accuracy of the planted head's most likely level against
    /// the emitted test ratings.
    pub bayes_level_accuracy: f64,
    /// Accuracy of the planted classifier on the emitted test labels.
    pub bayes_binary_accuracy: f64,
}

impl SynthTruth {
    pub fn model(&self) -> Model {
        Model {
            odl: self.true_odl.clone(),
            clf: self.true_clf.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub config: SynthConfig,
    pub embeddings: Vec<EmbeddingPair>,
    pub labels: Vec<LabeledExample>,
    pub truth: SynthTruth,
}

impl SynthData {
    pub fn dataset(&self) -> Result<(Dataset, AssemblyReport)> {
        assemble(self.embeddings.clone(), self.labels.clone(), self.config.r)
    }
}

/// Samples one level (1-based) from the cumulative-link distribution by
/// inverting the CDF.
pub fn sample_level(z: f64, scale: f64, levels: usize, rng: &mut impl Rng) -> Result<u8> {
    let u: f64 = rng.random();
    let cuts = cutpoints(scale, levels)?;
    let level = cuts
        .iter()
        .position(|c| u < crate::numerics::sigmoid(c - z))
        .map_or(levels, |i| i + 1);
    Ok(level as u8)
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d, k, r) = (cfg.d, cfg.k, cfg.r);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut odl = OdlParams::zeros(k, d, r, 1.0, ReadoutMode::Mean);
    let row_std = cfg.z_gain / (d as f64).sqrt();
    for w in odl.weights.iter_mut() {
        *w = row_std * unit.sample(&mut rng);
    }
    for b in odl.bias.iter_mut() {
        *b = rng.random_range(-0.5..0.5);
    }
    for s in odl.log_scale.iter_mut() {
        let (lo, hi) = cfg.scale_range;
        *s = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
        .ln();
    }

    // u ∝ Wᵀa for a random a, so u·h = aᵀ(z − b) / ‖Wᵀa‖. Making b ⟂ a
    // turns that into aᵀz, a rule the intercept-free classifier can express.
    let a: Vec<f64> = (0..k).map(|_| unit.sample(&mut rng)).collect();
    let ab = a.iter().zip(&odl.bias).map(|(x, y)| x * y).sum::<f64>()
        / a.iter().map(|x| x * x).sum::<f64>();
    for (b, ai) in odl.bias.iter_mut().zip(&a) {
        *b -= ab * ai;
    }
    let wta: Vec<f64> = (0..d)
        .map(|j| (0..k).map(|i| a[i] * odl.weights[i * d + j]).sum())
        .collect();
    let norm = wta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("planted class direction vanished".into()));
    }
    let u: Vec<f64> = wta.iter().map(|x| x / norm).collect();
    // Posterior log-odds are m·(u·h)/σ²; with σ = 0 any positive multiple is optimal.
    let gain = if cfg.noise_std > 0.0 {
        cfg.class_margin / (cfg.noise_std * cfg.noise_std)
    } else {
        1.0
    };
    let w: Vec<f64> = a.iter().map(|ai| gain * ai / norm).collect();
    let clf = ClfParams::new(
        w.iter().map(|x| -x / 2.0).collect(),
        w.iter().map(|x| x / 2.0).collect(),
        Standardizer {
            mean: odl.bias.clone(),
            std: vec![1.0; k],
        },
    )?;

    let mut embeddings = Vec::new();
    let mut labels = Vec::new();
    let (mut level_hits, mut level_total, mut bin_hits) = (0usize, 0usize, 0usize);
    let splits = [
        (Split::Train, cfg.n_train),
        (Split::Val, cfg.n_val),
        (Split::Test, cfg.n_test),
    ];
    for (split, n) in splits {
        for i in 0..n {
            let label = if i % 2 == 0 {
                Label::Human
            } else {
                Label::Machine
            };
            let sign = if label.is_machine() { 0.5 } else { -0.5 };
            let h: Vec<f64> = u
                .iter()
                .map(|uj| {
                    round_f32(sign * cfg.class_margin * uj + cfg.noise_std * unit.sample(&mut rng))
                })
                .collect();
            let last: Vec<f64> = h
                .iter()
                .map(|x| round_f32(x + cfg.last_noise * unit.sample(&mut rng)))
                .collect();
            let id = format!("syn-{split}-{i:05}");
            let pair = EmbeddingPair::new(id.clone(), h, last)?;
            let z = odl.scores(&pair)?;
            let mut ratings = Vec::with_capacity(k);
            for (kk, zk) in z.iter().enumerate() {
                ratings.push(sample_level(*zk, odl.scale(kk), r, &mut rng)?);
            }
            let source = match (label, split) {
                (Label::Human, _) => Source::HH,
                (Label::Machine, Split::Test) if i % 4 == 3 => Source::PH,
                (Label::Machine, _) => Source::HM,
            };
            let duration = (rng.random_range(10.0..90.0_f64) * 10.0).round() / 10.0;
            if split == Split::Test {
                let best = predict_levels(&distribution(&z, &odl)?);
                level_hits += best.iter().zip(&ratings).filter(|(p, t)| p == t).count();
                level_total += k;
                bin_hits += (classify(&z, &clf)?.label == label) as usize;
            }
            labels.push(LabeledExample {
                id,
                label,
                source,
                language: if i % 3 == 0 {
                    Language::Zh
                } else {
                    Language::En
                },
                split,
                ratings: Some(ratings),
                duration: Some(duration),
            });
            embeddings.push(pair);
        }
    }
    Ok(SynthData {
        config: cfg.clone(),
        embeddings,
        labels,
        truth: SynthTruth {
            true_odl: odl,
            true_clf: clf,
            bayes_level_accuracy: level_hits as f64 / level_total as f64,
            bayes_binary_accuracy: bin_hits as f64 / cfg.n_test as f64,
        },
    })
}

/// Paths of the files written by [`write_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    pub truth: PathBuf,
}

/// Writes embeddings, labels and a truth sidecar (planted model in
/// checkpoint form plus the Bayes accuracies) into `dir`.
pub fn write_synth(data: &SynthData, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles {
        embeddings: dir.join(EMBEDDINGS_FILE),
        labels: dir.join(LABELS_FILE),
        truth: dir.join(TRUTH_FILE),
    };
    save_embeddings(&files.embeddings, &data.embeddings)?;
    save_labels(&files.labels, &data.labels)?;
    let truth = json!({
        "config": data.config,
        "bayes_level_accuracy": data.truth.bayes_level_accuracy,
        "bayes_binary_accuracy": data.truth.bayes_binary_accuracy,
        "model": data.truth.model().to_json(),
    });
    let mut text = serde_json::to_string_pretty(&truth)?;
    text.push('\n');
    std::fs::write(&files.truth, text).map_err(|e| Error::io(&files.truth, e))?;
    Ok(files)
}

/// Reads back a truth sidecar.
pub fn load_truth(path: impl AsRef<Path>) -> Result<SynthTruth> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let model = Model::from_json(&v["model"])?;
    let acc = |key: &str| {
        v[key]
            .as_f64()
            .ok_or_else(|| Error::invalid(format!("{}: missing {key}", path.display())))
    };
    Ok(SynthTruth {
        true_odl: model.odl,
        true_clf: model.clf,
        bayes_level_accuracy: acc("bayes_level_accuracy")?,
        bayes_binary_accuracy: acc("bayes_binary_accuracy")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odl::level_probs;
    use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 40,
            n_val: 20,
            n_test: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn files_are_deterministic_and_valid() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small();
        let fa = write_synth(&generate(&cfg).unwrap(), a.path()).unwrap();
        let fb = write_synth(&generate(&cfg).unwrap(), b.path()).unwrap();
        for (x, y) in [
            (&fa.embeddings, &fb.embeddings),
            (&fa.labels, &fb.labels),
            (&fa.truth, &fb.truth),
        ] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let (ds, report) =
            crate::datamodel::load_dataset(&fa.embeddings, &fa.labels, cfg.r).unwrap();
        assert!(report.warnings().is_empty(), "{:?}", report.warnings());
        assert_eq!(ds.len(), 80);
        assert!(ds.split(Split::Test).any(|e| e.source == Source::PH));

        let data = generate(&cfg).unwrap();
        let truth = load_truth(&fa.truth).unwrap();
        assert_eq!(truth, data.truth);
        // loaded embeddings equal the generated ones bit for bit
        let loaded = crate::datamodel::load_embeddings(&fa.embeddings).unwrap();
        assert_eq!(loaded, data.embeddings);
    }

    #[test]
    fn separable_construction_is_perfect() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            class_margin: 10.0,
            ..small()
        };
        assert_eq!(generate(&cfg).unwrap().truth.bayes_binary_accuracy, 1.0);
    }

    #[test]
    fn degenerate_configs() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            class_margin: 0.0,
            ..small()
        };
        assert!(matches!(generate(&cfg), Err(Error::Degenerate(_))));
        assert!(generate(&SynthConfig { r: 2, ..small() }).is_err());
        assert!(generate(&SynthConfig {
            n_test: 0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn planted_rule_matches_class_direction() {
        // decision margin w·z equals (m/σ²)·u·h for every emitted dialogue
        let data = generate(&small()).unwrap();
        let t = &data.truth;
        for e in &data.embeddings {
            let z = t.true_odl.scores(e).unwrap();
            let margin = classify(&z, &t.true_clf).unwrap().margin;
            let zc: Vec<f64> = z.iter().zip(&t.true_odl.bias).map(|(a, b)| a - b).collect();
            let w = t.true_clf.margin_weights();
            let centred: f64 = w.iter().zip(&zc).map(|(a, b)| a * b).sum();
            assert!((margin - centred).abs() < 1e-9 * (1.0 + margin.abs()));
        }
    }

    #[test]
    fn planted_classifier_is_symmetric() {
        let t = generate(&small()).unwrap().truth;
        let s: f64 = t
            .true_clf
            .human_row()
            .iter()
            .zip(t.true_clf.machine_row())
            .map(|(a, b)| (a + b).abs())
            .sum();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn cutpoint_score_splits_evenly() {
        // z at the cut-point between levels 2 and 3 → P(Y ≤ 2) = 1/2
        let scale = 4.2;
        let z = cutpoints(scale, 5).unwrap()[1];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000u64;
        let low = (0..n)
            .filter(|_| sample_level(z, scale, 5, &mut rng).unwrap() <= 2)
            .count() as u64;
        let b = Binomial::new(0.5, n).unwrap();
        let p = 2.0 * b.cdf(low.min(n - low));
        assert!(p > 0.01, "low={low} p={p}");
    }

    #[test]
    fn empirical_frequencies_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (z, scale) in [(0.3, 2.1), (-1.2, 5.0), (2.5, 1.0)] {
            let (cat, _) = level_probs(z, scale, 5).unwrap();
            let n = 10_000;
            let mut counts = [0u64; 5];
            for _ in 0..n {
                counts[sample_level(z, scale, 5, &mut rng).unwrap() as usize - 1] += 1;
            }
            let chi2: f64 = counts
                .iter()
                .zip(&cat)
                .map(|(&o, &p)| {
                    let e = p * n as f64;
                    (o as f64 - e).powi(2) / e
                })
                .sum();
            let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
            assert!(p > 0.01, "z={z} s={scale} chi2={chi2}");
        }
    }
}
