//! Command-line interface: `synth`, `train`, `eval`, `perturb`, `explain`, `gradcheck`.
//!
//! Runs are described by a TOML file (see [`RunConfig`]); flags override it.
//! Exit status is 0 on success, 1 on validation failures and 2 on I/O errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, class_weights, split_dataset, DatasetSplit, EcgRecord};
use crate::dsp::{self, Interferer};
use crate::error::{MinaError, Result};
use crate::harness::{self, export_explanation, robustness_sweep, train_with, Perturbation, TrainConfig};
use crate::model::{ForwardOptions, Mina, ModelConfig, ModelParams, Variant};
use crate::nn::{finite_diff_check, read_checkpoint, write_checkpoint, Checkpoint, GradCheckConfig, Parameters};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn default_split() -> [f64; 3] {
    [0.75, 0.10, 0.15]
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Record CSV (`id,label,samples...`).
    pub data: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub variant: Variant,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    /// Optional band file (`low high` per line) replacing `model.bands`.
    pub bands_file: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            output: PathBuf::from("run"),
            seed: 1,
            variant: Variant::Mina,
            split: default_split(),
            bands_file: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            // Unknown keys are quoted in the message; otherwise name the key the error points at.
            let quoted = e.message().split('`').nth(1).map(str::to_string);
            let at_span = e.span().and_then(|span| {
                let line = text[..span.start].rsplit('\n').next()?;
                let key = line.split('=').next()?.trim();
                (!key.is_empty()).then(|| key.to_string())
            });
            let field = quoted.or(at_span).unwrap_or_else(|| "config".into());
            MinaError::config(field, e.message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MinaError::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MinaError::config("config", e.to_string()))
    }

    /// The model configuration actually used: the top-level variant wins, and
    /// baselines always see a single full-band channel.
    pub fn resolved_model(&self) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        if let Some(path) = &self.bands_file {
            m.bands = dsp::read_bands(path)?;
        }
        m.variant = self.variant;
        if self.variant != Variant::Mina {
            m.bands = ModelConfig::for_variant(self.variant).bands;
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.split;
        if [a, b, c].iter().any(|v| v.is_nan() || *v <= 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(MinaError::config("split", "fractions must be positive and sum to 1"));
        }
        self.train.validate()?;
        self.resolved_model().map(|_| ())
    }
}

/// Stored in the checkpoint header so later commands can rebuild the model and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub seed: u64,
    pub split: [f64; 3],
    pub best_epoch: usize,
}

pub fn save_model(path: &Path, meta: &CheckpointMeta, params: &ModelParams) -> Result<()> {
    let header = serde_json::to_string(meta).map_err(|e| MinaError::Checkpoint(e.to_string()))?;
    write_checkpoint(path, &Checkpoint::from_params(header, params))
}

pub fn load_model(path: &Path) -> Result<(CheckpointMeta, Mina, ModelParams)> {
    let ck = read_checkpoint(path)?;
    let meta: CheckpointMeta =
        serde_json::from_str(&ck.header).map_err(|e| MinaError::Checkpoint(format!("bad header: {e}")))?;
    let model = Mina::new(meta.model.clone())?;
    let mut params = ModelParams::zeros(&meta.model);
    ck.load_into(&mut params)?;
    Ok((meta, model, params))
}

#[derive(Debug, Parser)]
#[command(
    name = "mina",
    version,
    about = "Multilevel knowledge-guided attention for single-lead ECG classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Train a model and save the best checkpoint with its history.
    Train(TrainArgs),
    /// Report ROC-AUC, PR-AUC and F1 of a checkpoint on one split.
    Eval(EvalArgs),
    /// Sweep interferer amplitudes and report the PR-AUC drop.
    Perturb(PerturbArgs),
    /// Export attention weights of one record as JSON.
    Explain(ExplainArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    /// Fraction of records in the irregular (positive) class.
    #[arg(long, default_value_t = 0.5)]
    pub balance: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = dataset::DEFAULT_LENGTH)]
    pub n: usize,
    #[arg(long, default_value_t = dataset::DEFAULT_SAMPLING_RATE)]
    pub sampling_rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub bands: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub kind: Interferer,
    /// Comma-separated ascending amplitudes starting at 0.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 2.0])]
    pub amps: Vec<f64>,
    /// Interpret amplitudes as multiples of the split's signal standard deviation.
    #[arg(long)]
    pub relative: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub record: String,
    /// Perturbation to compare against, e.g. `wander:0.5` or `noise:0.1`.
    #[arg(long)]
    pub perturb: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// TOML run configuration whose `[model]` block is checked; the small
    /// verification configuration is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Debugging aid: perturb the analytic gradient before comparing.
    #[arg(long)]
    pub corrupt_gradient: bool,
}

/// Exit status for an error.
pub fn exit_code(err: &MinaError) -> i32 {
    if err.is_io() {
        2
    } else {
        1
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| MinaError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| MinaError::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Perturb(a) => cmd_perturb(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let records = dataset::synth_dataset(a.count, a.balance, a.seed, a.n, a.sampling_rate)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| MinaError::io(dir, e))?;
    }
    dataset::write_dataset(&a.out, &records)?;
    eprintln!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

/// Applies flag overrides on top of the optional config file.
pub fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut rc = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &a.data {
        rc.data = Some(d.clone());
    }
    if let Some(o) = &a.out {
        rc.output = o.clone();
    }
    if let Some(s) = a.seed {
        rc.seed = s;
    }
    if let Some(v) = a.variant {
        rc.variant = v;
    }
    if let Some(e) = a.epochs {
        rc.train.max_epochs = e;
        rc.train.patience = rc.train.patience.min(e);
    }
    if let Some(b) = a.batch_size {
        rc.train.batch_size = b;
    }
    if let Some(lr) = a.lr {
        rc.train.lr = lr;
    }
    if let Some(p) = a.patience {
        rc.train.patience = p;
    }
    if let Some(b) = &a.bands {
        rc.bands_file = Some(b.clone());
    }
    rc.validate()?;
    Ok(rc)
}

fn load_split(data: &Path, model: &ModelConfig, split: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let records = dataset::load_dataset(data, model.n)?;
    split_dataset(&records, (split[0], split[1], split[2]), seed)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let rc = resolve_train_config(a)?;
    let data = rc
        .data
        .clone()
        .ok_or_else(|| MinaError::config("data", "no dataset path given"))?;
    if !data.exists() {
        return Err(MinaError::config("data", format!("{} does not exist", data.display())));
    }
    let model = rc.resolved_model()?;
    let split = load_split(&data, &model, rc.split, rc.seed)?;
    let quiet = a.quiet;
    let (params, history) = train_with(&split, &model, &rc.train, rc.seed, |e| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.5}  val roc {:.4}  pr {:.4}  f1 {:.4}",
                e.epoch, e.train_loss, e.validation.roc_auc, e.validation.pr_auc, e.validation.f1
            );
        }
    })?;
    let out = &rc.output;
    fs::create_dir_all(out).map_err(|e| MinaError::io(out, e))?;
    let meta = CheckpointMeta {
        model,
        seed: rc.seed,
        split: rc.split,
        best_epoch: history.best_epoch,
    };
    save_model(&out.join("checkpoint.txt"), &meta, &params)?;
    write_file(&out.join("history.csv"), &history.to_csv())?;
    write_file(&out.join("run.toml"), &rc.to_toml()?)?;
    split.write_manifest(&out.join("split"))?;
    eprintln!("best epoch {}; wrote {}", history.best_epoch, out.display());
    Ok(())
}

fn select(split: DatasetSplit, which: SplitName) -> Vec<EcgRecord> {
    match which {
        SplitName::Train => split.train,
        SplitName::Validation => split.validation,
        SplitName::Test => split.test,
        SplitName::All => split
            .train
            .into_iter()
            .chain(split.validation)
            .chain(split.test)
            .collect(),
    }
}

fn load_for(a: &DataArgs) -> Result<(Mina, ModelParams, Vec<EcgRecord>)> {
    let (meta, model, params) = load_model(&a.checkpoint)?;
    let split = load_split(&a.data, &meta.model, meta.split, meta.seed)?;
    Ok((model, params, select(split, a.split)))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (model, params, records) = load_for(&a.data)?;
    let m = harness::evaluate(&model, &params, &records)?;
    let json = serde_json::to_string_pretty(&m).map_err(|e| MinaError::InvalidInput(e.to_string()))? + "\n";
    emit(a.out.as_deref(), &json)
}

pub fn cmd_perturb(a: &PerturbArgs) -> Result<()> {
    let (model, params, records) = load_for(&a.data)?;
    let scale = if a.relative { harness::signal_std(&records) } else { 1.0 };
    let amps: Vec<f64> = a.amps.iter().map(|x| x * scale).collect();
    let curve = robustness_sweep(&model, &params, &records, a.kind, &amps, a.seed)?;
    emit(a.out.as_deref(), &curve.to_csv())
}

/// Parses `kind:amp`.
pub fn parse_perturbation(spec: &str, seed: u64) -> Result<Perturbation> {
    let (kind, amp) = spec
        .split_once(':')
        .ok_or_else(|| MinaError::config("perturb", "expected `kind:amp`"))?;
    let amp: f64 = amp
        .trim()
        .parse()
        .map_err(|_| MinaError::config("perturb", format!("bad amplitude `{amp}`")))?;
    if !amp.is_finite() || amp < 0.0 {
        return Err(MinaError::config(
            "perturb",
            "amplitude must be finite and non-negative",
        ));
    }
    Ok(Perturbation {
        kind: kind.trim().parse()?,
        amp,
        seed,
    })
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let (meta, model, params) = load_model(&a.checkpoint)?;
    let records = dataset::load_dataset(&a.data, meta.model.n)?;
    let record = records
        .iter()
        .find(|r| r.id == a.record)
        .ok_or_else(|| MinaError::InvalidInput(format!("no record with id `{}`", a.record)))?;
    let perturbation = a
        .perturb
        .as_deref()
        .map(|s| parse_perturbation(s, a.seed))
        .transpose()?;
    let doc = export_explanation(&model, &params, record, perturbation)?;
    emit(a.out.as_deref(), &(doc.to_json()? + "\n"))
}

/// Runs the gradient check and returns the printable report and whether it passed.
pub fn gradcheck_report(model_config: &ModelConfig, seed: u64, corrupt: bool) -> Result<(String, bool)> {
    let model = Mina::new(model_config.clone())?;
    let params = model.init_params(seed);
    let record = dataset::synth_ecg((seed % 2) as usize, seed, model_config.n, model_config.sampling_rate)?;
    let prep = model.prepare(&record)?;
    let labels = [0, 1];
    let weights = class_weights(&labels, 2)?.0;
    let mut weights = weights;
    weights.resize(model_config.num_classes, 1.0);
    let opts = ForwardOptions::inference();
    let mut grads = params.zeros_like();
    model.loss_and_grad(&params, &prep, &weights, &opts, 1.0, &mut grads)?;
    if corrupt {
        for t in grads.tensors_mut() {
            t.scale(1.5);
            if let Some(v) = t.data_mut().first_mut() {
                *v += 1e-3;
            }
        }
    }
    let report = finite_diff_check(
        &params,
        &grads,
        |p| model.loss(p, &prep, &weights, &opts),
        &GradCheckConfig {
            seed,
            ..GradCheckConfig::default()
        },
    )?;
    let mut text = format!(
        "{:<28}{:>8}{:>8}{:>16}{:>16}{:>12}\n",
        "tensor", "checked", "worst", "analytic", "numeric", "rel_err"
    );
    for t in &report.per_tensor {
        text += &format!(
            "{:<28}{:>8}{:>8}{:>16.8e}{:>16.8e}{:>12.3e}\n",
            t.name, t.checked, t.worst_index, t.analytic, t.numeric, t.rel_error
        );
    }
    let pass = report.max_rel_error <= GRADCHECK_TOLERANCE;
    text += &format!(
        "max_rel_error {:.3e} over {} coordinates ({})\n",
        report.max_rel_error,
        report.coords_checked,
        if pass { "ok" } else { "FAILED" }
    );
    Ok((text, pass))
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => RunConfig::load(p)?.resolved_model()?,
        None => ModelConfig::tiny(),
    };
    let (text, pass) = gradcheck_report(&config, a.seed, a.corrupt_gradient)?;
    print!("{text}");
    if pass {
        Ok(())
    } else {
        Err(MinaError::GradCheck(format!(
            "relative error above {GRADCHECK_TOLERANCE:e}"
        )))
    }
}
