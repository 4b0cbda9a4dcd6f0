//! Command-line front end. The binary only calls [`main_with_args`].
//!
//! Every successful command ends by printing one JSON object on its own
//! line to stdout, with at least `command` and `status` keys. Exit code 0 is
//! success, 1 a validation error (bad flags, config or input files), 2 a
//! runtime failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::checkpoint::Model;
use crate::classifier::sym_reg;
use crate::datamodel::{load_dataset, load_embeddings, Split, DEFAULT_LEVELS};
use crate::error::{Error, Result};
use crate::pipeline::{evaluate, train_model, TrainConfig};
use crate::readout::ReadoutKind;
use crate::registry::DimensionRegistry;
use crate::search::{
    append_trial, run_search, sensitivity, sensitivity_table, SearchSpace, Strategy,
};
use crate::synth::{generate, write_synth, SynthConfig};

pub const LOG_ENV: &str = "LIKENESS_JUDGE_LOG";

/// Structured run configuration; the `--config` file has this shape.
/// Command-line flags override the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub readout: Option<ReadoutKind>,
    pub levels: Option<usize>,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub search: SearchSpace,
}

#[derive(Debug, Parser)]
#[command(
    name = "likeness-judge",
    version,
    about = "Interpretable human-likeness judge for dialogue embeddings"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Embeddings file (JSON lines).
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Labels file (JSON lines).
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Checkpoint to write (train) or read (score, judge, eval, inspect).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["mean", "last", "fused"])]
    readout: Option<String>,
    /// Weight of the row-symmetry penalty.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Initial cut-point scale.
    #[arg(long = "scale-init", global = true)]
    scale_init: Option<f64>,
    #[arg(long = "lr-odl", global = true)]
    lr_odl: Option<f64>,
    #[arg(long = "lr-clf", global = true)]
    lr_clf: Option<f64>,
    #[arg(long = "batch-odl", global = true)]
    batch_odl: Option<usize>,
    #[arg(long = "batch-clf", global = true)]
    batch_clf: Option<usize>,
    /// Dropout rate on the dialogue representation.
    #[arg(long, global = true)]
    dropout: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its planted truth into --out.
    Synth,
    /// Train the scoring head and classifier; write one checkpoint.
    Train,
    /// Per-dialogue dimension scores and levels.
    Score,
    /// Label, probability and top attributions per dialogue.
    Judge {
        /// Only judge this dialogue.
        #[arg(long)]
        id: Option<String>,
    },
    /// Evaluation report against labels, written into --out.
    Eval {
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
    },
    /// Hyperparameter search; trial log and rankings go into --out.
    Search {
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_parser = ["grid", "uniform_random"])]
        strategy: Option<String>,
    },
    /// Summary of a checkpoint.
    Inspect,
}

impl RunConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    fn merge(mut self, c: &Common) -> Result<Self> {
        macro_rules! over {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        over!(self.embeddings, c.embeddings.clone().map(Some));
        over!(self.labels, c.labels.clone().map(Some));
        over!(self.checkpoint, c.checkpoint.clone().map(Some));
        over!(self.out, c.out.clone().map(Some));
        over!(self.seed, c.seed.map(Some));
        if let Some(r) = &c.readout {
            self.readout = Some(r.parse()?);
        }
        over!(self.train.clf.lambda, c.lambda);
        over!(self.train.odl.scale_init, c.scale_init);
        over!(self.train.odl.lr, c.lr_odl);
        over!(self.train.clf.lr, c.lr_clf);
        over!(self.train.odl.batch_size, c.batch_odl);
        over!(self.train.clf.batch_size, c.batch_clf);
        over!(self.train.odl.dropout, c.dropout);
        if let Some(r) = self.readout {
            self.train.odl.readout = r;
        }
        if let Some(l) = self.levels {
            self.train.odl.levels = l;
            self.synth.r = l;
        }
        if let Some(s) = self.seed {
            self.train = self.train.with_seed(s);
            self.synth.seed = s;
            self.search.seed = s;
        }
        self.train.odl.validate()?;
        self.train.clf.validate()?;
        Ok(self)
    }

    fn levels(&self) -> usize {
        self.levels.unwrap_or(DEFAULT_LEVELS)
    }
}

fn input<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("--{flag} is required")))?;
    if !p.exists() {
        return Err(Error::invalid(format!(
            "--{flag}: {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

fn output<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::invalid(format!("--{flag} is required")))
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn pretty(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes JSON lines to a file, or to stdout when no path is given.
fn emit_lines(out: Option<&Path>, lines: &[String]) -> Result<()> {
    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    match out {
        Some(p) => write_text(p, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn summary(command: &str, fields: Value) -> Value {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("status".into(), json!("ok"));
    if let Value::Object(f) = fields {
        m.extend(f);
    }
    Value::Object(m)
}

fn run(cli: Cli) -> Result<Value> {
    let base = match &cli.common.config {
        Some(p) => RunConfig::load(input(&Some(p.clone()), "config")?)?,
        None => RunConfig::default(),
    };
    let cfg = base.merge(&cli.common)?;
    match cli.command {
        Command::Synth => {
            let out = output(&cfg.out, "out")?;
            let data = generate(&cfg.synth)?;
            let files = write_synth(&data, out)?;
            Ok(summary(
                "synth",
                json!({
                    "embeddings": files.embeddings,
                    "labels": files.labels,
                    "truth": files.truth,
                    "n": data.labels.len(),
                    "bayes_level_accuracy": data.truth.bayes_level_accuracy,
                    "bayes_binary_accuracy": data.truth.bayes_binary_accuracy,
                }),
            ))
        }
        Command::Train => {
            let emb = input(&cfg.embeddings, "embeddings")?;
            let lab = input(&cfg.labels, "labels")?;
            let ckpt = output(&cfg.checkpoint, "checkpoint")?;
            let (ds, report) = load_dataset(emb, lab, cfg.levels())?;
            for w in report.warnings() {
                log::warn!("{w}");
            }
            let (model, log) = train_model(&ds, &cfg.train)?;
            model.save(ckpt)?;
            if let Some(out) = &cfg.out {
                write_text(out, &pretty(&log)?)?;
            }
            Ok(summary(
                "train",
                json!({
                    "checkpoint": ckpt,
                    "odl_best_epoch": log.odl.best_epoch,
                    "odl_val_nll": log.odl.best_val_loss,
                    "clf_best_epoch": log.clf.best_epoch,
                    "clf_val_accuracy": log.clf.best_val_accuracy,
                    "row_sum_norm": sym_reg(&model.clf.weights),
                }),
            ))
        }
        Command::Score => {
            let emb = input(&cfg.embeddings, "embeddings")?;
            let model = Model::load(input(&cfg.checkpoint, "checkpoint")?)?;
            let lines = load_embeddings(emb)?
                .iter()
                .map(|e| Ok(serde_json::to_string(&model.score(e)?)?))
                .collect::<Result<Vec<_>>>()?;
            emit_lines(cfg.out.as_deref(), &lines)?;
            Ok(summary("score", json!({ "n": lines.len() })))
        }
        Command::Judge { id } => {
            let emb = input(&cfg.embeddings, "embeddings")?;
            let model = Model::load(input(&cfg.checkpoint, "checkpoint")?)?;
            let registry = DimensionRegistry::standard();
            let pairs: Vec<_> = load_embeddings(emb)?
                .into_iter()
                .filter(|e| id.as_ref().is_none_or(|i| &e.id == i))
                .collect();
            if let Some(i) = &id {
                if pairs.is_empty() {
                    return Err(Error::invalid(format!("no embedding with id {i:?}")));
                }
            }
            let mut machine = 0;
            let mut lines = Vec::new();
            for e in &pairs {
                let r = model.judge(e, &registry)?;
                machine += r.decision.is_machine() as usize;
                lines.push(serde_json::to_string(&r)?);
            }
            emit_lines(cfg.out.as_deref(), &lines)?;
            Ok(summary(
                "judge",
                json!({ "n": lines.len(), "machine": machine }),
            ))
        }
        Command::Eval { split } => {
            let emb = input(&cfg.embeddings, "embeddings")?;
            let lab = input(&cfg.labels, "labels")?;
            let model = Model::load(input(&cfg.checkpoint, "checkpoint")?)?;
            let out = output(&cfg.out, "out")?;
            let split: Split = serde_json::from_value(json!(split))?;
            let (ds, assembly) = load_dataset(emb, lab, cfg.levels())?;
            for w in assembly.warnings() {
                log::warn!("{w}");
            }
            let report = evaluate(&model, &ds, split)?;
            ensure_dir(out)?;
            write_text(&out.join("report.json"), &pretty(&report)?)?;
            write_text(&out.join("report.txt"), &report.to_tables(&ds.registry))?;
            Ok(summary(
                "eval",
                json!({
                    "split": report.split,
                    "n": report.n,
                    "overall_acc": report.overall_acc,
                    "roc_auc": report.roc_auc,
                    "exact_level_acc": report.fine_grained.as_ref().map(|f| f.overall.exact),
                    "report": out.join("report.json"),
                }),
            ))
        }
        Command::Search { budget, strategy } => {
            let emb = input(&cfg.embeddings, "embeddings")?;
            let lab = input(&cfg.labels, "labels")?;
            let out = output(&cfg.out, "out")?;
            let mut space = cfg.search.clone();
            if let Some(b) = budget {
                space.budget = b;
            }
            if let Some(s) = strategy {
                space.strategy = serde_json::from_value::<Strategy>(json!(s))?;
            }
            let (ds, _) = load_dataset(emb, lab, cfg.levels())?;
            ensure_dir(out)?;
            let log_path = out.join("trials.jsonl");
            write_text(&log_path, "")?;
            let result = run_search(&space, &cfg.train, &ds, |t| append_trial(&log_path, t))?;
            let ranked: Vec<_> = result.ranking.iter().map(|&i| &result.trials[i]).collect();
            write_text(&out.join("ranking.json"), &pretty(&ranked)?)?;
            write_text(&out.join("best_config.json"), &pretty(&result.best)?)?;
            write_text(
                &out.join("sensitivity.txt"),
                &sensitivity_table(&sensitivity(&result.trials)),
            )?;
            let best = ranked[0];
            Ok(summary(
                "search",
                json!({
                    "trials": result.trials.len(),
                    "best_trial": best.index,
                    "best_val_accuracy": best.val_accuracy,
                    "best_val_loss": best.val_loss,
                    "trial_log": log_path,
                }),
            ))
        }
        Command::Inspect => {
            let path = input(&cfg.checkpoint, "checkpoint")?;
            let m = Model::load(path)?;
            let fusion = m.odl.readout.fusion().map(|f| f.coefficients());
            Ok(summary(
                "inspect",
                json!({
                    "d": m.odl.dim,
                    "K": m.odl.num_dims,
                    "r": m.odl.levels,
                    "readout": m.odl.readout.kind().to_string(),
                    "fusion_coefficients": fusion,
                    "scales": m.odl.scales(),
                    "classifier_bias": m.clf.bias.is_some(),
                    "row_sum_norm": sym_reg(&m.clf.weights),
                }),
            ))
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(line) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
