//! Dialogue embeddings, labels and ratings, their line-delimited file
//! formats, and the joined [`Dataset`] the trainers consume.
//!
//! Embedding records carry two little-endian `f32` vectors encoded as
//! base64. They are widened to `f64` on load and narrowed again on save, so a
//! load/save cycle reproduces the payload bytes exactly.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{DimensionRegistry, NUM_DIMENSIONS};

/// Default number of ordinal rating levels.
pub const DEFAULT_LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub id: String,
    pub dim: usize,
    /// Mean of the first-step token states.
    pub first_mean: Vec<f64>,
    /// State of the most recent token.
    pub last: Vec<f64>,
}

impl EmbeddingPair {
    pub fn new(id: impl Into<String>, first_mean: Vec<f64>, last: Vec<f64>) -> Result<Self> {
        let pair = Self {
            id: id.into(),
            dim: first_mean.len(),
            first_mean,
            last,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid(format!(
                "embedding {}: dim must be positive",
                self.id
            )));
        }
        for (name, v) in [("first_mean", &self.first_mean), ("last", &self.last)] {
            if v.len() != self.dim {
                return Err(Error::invalid(format!(
                    "embedding {}: {name} has {} values, dim is {}",
                    self.id,
                    v.len(),
                    self.dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding {}: {name}", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    dim: usize,
    first_mean: String,
    last: String,
}

fn encode_f32s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f32s(s: &str, dim: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(s).map_err(|e| format!("bad base64: {e}"))?;
    if bytes.len() != dim * 4 {
        return Err(format!(
            "payload holds {} bytes, expected {} for dim {dim}",
            bytes.len(),
            dim * 4
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingPair>> {
    let path = path.as_ref();
    let mut out: Vec<EmbeddingPair> = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in read_lines(path)? {
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if let Some(first) = out.first() {
            if rec.dim != first.dim {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "dim {} differs from earlier records (dim {})",
                        rec.dim, first.dim
                    ),
                ));
            }
        }
        if !seen.insert(rec.id.clone()) {
            return Err(parse_err(
                path,
                lineno,
                format!("duplicate id {:?}", rec.id),
            ));
        }
        let first_mean = decode_f32s(&rec.first_mean, rec.dim)
            .map_err(|m| parse_err(path, lineno, format!("first_mean: {m}")))?;
        let last = decode_f32s(&rec.last, rec.dim)
            .map_err(|m| parse_err(path, lineno, format!("last: {m}")))?;
        let pair = EmbeddingPair {
            id: rec.id,
            dim: rec.dim,
            first_mean,
            last,
        };
        pair.validate()
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        out.push(pair);
    }
    Ok(out)
}

/// Serializes one embedding as a single line (no trailing newline).
pub fn embedding_line(pair: &EmbeddingPair) -> String {
    let rec = EmbeddingRecord {
        id: pair.id.clone(),
        dim: pair.dim,
        first_mean: encode_f32s(&pair.first_mean),
        last: encode_f32s(&pair.last),
    };
    serde_json::to_string(&rec).expect("embedding record serializes")
}

pub fn save_embeddings(path: impl AsRef<Path>, pairs: &[EmbeddingPair]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for p in pairs {
        writeln!(w, "{}", embedding_line(p)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Machine,
}

impl Label {
    /// Row of this class in the classifier weight matrix.
    pub fn index(self) -> usize {
        match self {
            Label::Human => 0,
            Label::Machine => 1,
        }
    }

    pub fn is_machine(self) -> bool {
        self == Label::Machine
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Human => "human",
            Label::Machine => "machine",
        })
    }
}

/// Dialogue type: human-human, human-machine, or TTS pseudo-human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    HH,
    HM,
    PH,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::HH, Source::HM, Source::PH];
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::HH => "HH",
            Source::HM => "HM",
            Source::PH => "PH",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Zh,
    En,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub id: String,
    pub label: Label,
    pub source: Source,
    pub language: Language,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<Vec<u8>>,
    /// Dialogue length in seconds, used only for duration-binned trend tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl LabeledExample {
    pub fn validate(&self, levels: usize) -> Result<()> {
        if let Some(r) = &self.ratings {
            if r.len() != NUM_DIMENSIONS {
                return Err(Error::invalid(format!(
                    "example {}: ratings has {} entries, expected {NUM_DIMENSIONS}",
                    self.id,
                    r.len()
                )));
            }
            if let Some((k, v)) = r
                .iter()
                .enumerate()
                .find(|(_, &v)| v == 0 || v as usize > levels)
            {
                return Err(Error::invalid(format!(
                    "example {}: rating {v} for dimension {k} outside 1..={levels}",
                    self.id
                )));
            }
        }
        if self.source == Source::PH && self.split != Split::Test {
            return Err(Error::invalid(format!(
                "example {}: pseudo-human dialogues may only appear in the test split (found {})",
                self.id, self.split
            )));
        }
        if let Some(d) = self.duration {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::invalid(format!(
                    "example {}: bad duration {d}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if levels < 3 {
        return Err(Error::invalid(format!(
            "ordinal level count must be at least 3, got {levels}"
        )));
    }
    if levels > u8::MAX as usize {
        return Err(Error::invalid(format!(
            "ordinal level count {levels} too large"
        )));
    }
    Ok(())
}

pub fn load_labels(path: impl AsRef<Path>, levels: usize) -> Result<Vec<LabeledExample>> {
    check_levels(levels)?;
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in read_lines(path)? {
        let ex: LabeledExample =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        ex.validate(levels)
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if !seen.insert(ex.id.clone()) {
            return Err(parse_err(path, lineno, format!("duplicate id {:?}", ex.id)));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn save_labels(path: impl AsRef<Path>, examples: &[LabeledExample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for ex in examples {
        let line = serde_json::to_string(ex)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// What [`assemble`] had to drop and how the splits came out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub missing_embeddings: Vec<String>,
    pub unlabeled_embeddings: usize,
    pub counts: BTreeMap<Split, usize>,
    pub rated_counts: BTreeMap<Split, usize>,
}

impl AssemblyReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.missing_embeddings.is_empty() {
            w.push(format!(
                "{} labeled examples have no embedding and were dropped",
                self.missing_embeddings.len()
            ));
        }
        if self.unlabeled_embeddings > 0 {
            w.push(format!(
                "{} embeddings have no label",
                self.unlabeled_embeddings
            ));
        }
        w
    }
}

/// Labels joined with embeddings. Immutable once assembled; iteration order
/// is by id so every downstream pass is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: BTreeMap<String, LabeledExample>,
    pub embeddings: BTreeMap<String, EmbeddingPair>,
    pub levels: usize,
    pub dim: usize,
    pub registry: DimensionRegistry,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledExample> {
        self.examples.values().filter(move |e| e.split == split)
    }

    /// Examples of a split that carry ratings.
    pub fn rated(&self, split: Split) -> impl Iterator<Item = &LabeledExample> {
        self.split(split).filter(|e| e.ratings.is_some())
    }

    pub fn embedding(&self, id: &str) -> Option<&EmbeddingPair> {
        self.embeddings.get(id)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

pub fn assemble(
    embeddings: Vec<EmbeddingPair>,
    labels: Vec<LabeledExample>,
    levels: usize,
) -> Result<(Dataset, AssemblyReport)> {
    check_levels(levels)?;
    let mut report = AssemblyReport::default();
    let dim = embeddings.first().map(|e| e.dim).unwrap_or(0);
    let mut emb = BTreeMap::new();
    for e in embeddings {
        if e.dim != dim {
            return Err(Error::invalid(format!(
                "embedding {} has dim {}, expected {dim}",
                e.id, e.dim
            )));
        }
        e.validate()?;
        if emb.contains_key(&e.id) {
            return Err(Error::invalid(format!("duplicate embedding id {:?}", e.id)));
        }
        emb.insert(e.id.clone(), e);
    }
    let mut examples = BTreeMap::new();
    for ex in labels {
        ex.validate(levels)?;
        if !emb.contains_key(&ex.id) {
            report.missing_embeddings.push(ex.id);
            continue;
        }
        *report.counts.entry(ex.split).or_default() += 1;
        if ex.ratings.is_some() {
            *report.rated_counts.entry(ex.split).or_default() += 1;
        }
        if examples.insert(ex.id.clone(), ex).is_some() {
            return Err(Error::invalid("duplicate label id"));
        }
    }
    report.unlabeled_embeddings = emb.keys().filter(|id| !examples.contains_key(*id)).count();
    if report.counts.get(&Split::Train).copied().unwrap_or(0) == 0 {
        return Err(Error::invalid(
            "no training example could be joined with an embedding",
        ));
    }
    Ok((
        Dataset {
            examples,
            embeddings: emb,
            levels,
            dim,
            registry: DimensionRegistry::standard(),
        },
        report,
    ))
}

/// Reads both files and joins them.
pub fn load_dataset(
    embeddings: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    levels: usize,
) -> Result<(Dataset, AssemblyReport)> {
    let emb = load_embeddings(embeddings)?;
    let lab = load_labels(labels, levels)?;
    assemble(emb, lab, levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn b64(v: &[f32]) -> String {
        B64.encode(v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>())
    }

    fn rec(id: &str, v: &[f32]) -> String {
        format!(
            r#"{{"id":"{id}","dim":{},"first_mean":"{}","last":"{}"}}"#,
            v.len(),
            b64(v),
            b64(v)
        )
    }

    fn example(id: &str, split: Split, ratings: Option<Vec<u8>>) -> LabeledExample {
        LabeledExample {
            id: id.into(),
            label: Label::Human,
            source: Source::HH,
            language: Language::En,
            split,
            ratings,
            duration: None,
        }
    }

    #[test]
    fn decodes_a_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.jsonl",
            &format!("{}\n", rec("d1", &[1.0, 0.0, 0.0, 0.0])),
        );
        let e = load_embeddings(&p).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].first_mean[0], 1.0);
        assert_eq!(e[0].dim, 4);
    }

    #[test]
    fn empty_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.jsonl", "");
        assert!(load_embeddings(&p).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\n{}\n", rec("d1", &[1.0]), rec("d1", &[2.0]));
        let p = write(&dir, "e.jsonl", &body);
        let err = load_embeddings(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_and_mismatched_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.jsonl",
            &format!("{}\nnot json\n", rec("a", &[1.0])),
        );
        assert!(matches!(
            load_embeddings(&p).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
        let p = write(
            &dir,
            "b.jsonl",
            &format!("{}\n{}\n", rec("a", &[1.0]), rec("b", &[1.0, 2.0])),
        );
        assert!(load_embeddings(&p).unwrap_err().to_string().contains("dim"));
        let short = r#"{"id":"x","dim":3,"first_mean":"AACAPw==","last":"AACAPw=="}"#;
        let p = write(&dir, "c.jsonl", short);
        assert!(load_embeddings(&p).is_err());
        let p = write(&dir, "d.jsonl", &rec("nan", &[f32::NAN]));
        assert!(load_embeddings(&p).is_err());
    }

    #[test]
    fn payload_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{}\n{}\n",
            rec("a", &[1.5, -0.1, f32::MIN_POSITIVE, 3.4e38]),
            rec("b", &[0.0, -0.0, 1e-45, 7.0])
        );
        let p = write(&dir, "e.jsonl", &body);
        let loaded = load_embeddings(&p).unwrap();
        let q = dir.path().join("out.jsonl");
        save_embeddings(&q, &loaded).unwrap();
        assert_eq!(std::fs::read_to_string(&q).unwrap(), body);
    }

    #[test]
    fn labels_accept_and_reject() {
        let dir = tempfile::tempdir().unwrap();
        let fives = vec![5u8; 18];
        let ok = format!(
            r#"{{"id":"a","label":"human","source":"HH","language":"en","split":"train","ratings":{:?}}}"#,
            fives
        );
        let p = write(&dir, "ok.jsonl", &ok);
        let l = load_labels(&p, 5).unwrap();
        assert_eq!(l[0].ratings.as_deref(), Some(&fives[..]));

        let mut zero = fives.clone();
        zero[4] = 0;
        let bad = ok.replace(&format!("{fives:?}"), &format!("{zero:?}"));
        let p = write(&dir, "zero.jsonl", &bad);
        assert!(load_labels(&p, 5)
            .unwrap_err()
            .to_string()
            .contains("outside"));

        let six = ok.replace("[5, 5, 5", "[6, 5, 5");
        assert!(load_labels(write(&dir, "six.jsonl", &six), 5).is_err());

        let short = ok.replace(&format!("{fives:?}"), "[5,5,5]");
        assert!(load_labels(write(&dir, "short.jsonl", &short), 5).is_err());

        let ph = r#"{"id":"p","label":"machine","source":"PH","language":"zh","split":"train"}"#;
        let err = load_labels(write(&dir, "ph.jsonl", ph), 5).unwrap_err();
        assert!(err.to_string().contains("pseudo-human"), "{err}");

        let unknown = ok.replace(r#""label":"human""#, r#""label":"robot""#);
        assert!(load_labels(write(&dir, "u.jsonl", &unknown), 5).is_err());
        let unknown = ok.replace(r#""source":"HH""#, r#""source":"XX""#);
        assert!(load_labels(write(&dir, "s.jsonl", &unknown), 5).is_err());

        assert!(load_labels(write(&dir, "r.jsonl", &ok), 2).is_err());
    }

    #[test]
    fn assemble_reports_missing_and_counts() {
        let e = vec![
            EmbeddingPair::new("a", vec![1.0, 2.0], vec![0.0, 0.0]).unwrap(),
            EmbeddingPair::new("b", vec![1.0, 2.0], vec![0.0, 0.0]).unwrap(),
            EmbeddingPair::new("orphan", vec![1.0, 2.0], vec![0.0, 0.0]).unwrap(),
        ];
        let l = vec![
            example("a", Split::Train, Some(vec![3; 18])),
            example("b", Split::Val, None),
            example("c", Split::Train, Some(vec![3; 18])),
        ];
        let (ds, rep) = assemble(e, l, 5).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(rep.missing_embeddings, vec!["c".to_string()]);
        assert_eq!(rep.unlabeled_embeddings, 1);
        assert_eq!(rep.counts[&Split::Train], 1);
        assert_eq!(rep.rated_counts.get(&Split::Val), None);
        assert_eq!(rep.warnings().len(), 2);
        for ex in ds.rated(Split::Train) {
            assert!(ds.embedding(&ex.id).is_some());
        }
    }

    #[test]
    fn assemble_needs_training_data() {
        let e = vec![EmbeddingPair::new("a", vec![1.0], vec![0.0]).unwrap()];
        assert!(assemble(e.clone(), vec![example("a", Split::Val, None)], 5).is_err());
        assert!(assemble(e, vec![example("z", Split::Train, None)], 5).is_err());
    }
}
