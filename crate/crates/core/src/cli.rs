//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 usage error, 2 data error, 3 numeric error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::densenet::{
    init_params, read_checkpoint, train, write_checkpoint, ModelConfig, ModelError, Params,
    Pipeline, TrainConfig,
};
use crate::desk::{
    class_indices, corpus_specs, evaluate, labeled_segments, predict_images, segment_images,
    stratified_split, DeskError, Evaluation,
};
use crate::ecg_io::{
    load_manifest, parse_csv_record, parse_wfdb_header, parse_wfdb_subset, write_csv_record,
    write_manifest, DatasetManifest, EcgRecord, ManifestEntry, ManifestKind,
};
use crate::label::{Label, MODEL_CLASSES};
use crate::metrics::MetricsError;
use crate::preprocess::{extract_lead, split_segments, synth_dataset, PreprocessError};
use crate::study::http::{serve, AppState};
use crate::study::{items_from_manifest, NewStudy, StudyError, StudyService};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "leadone",
    version,
    about = "Lead-I ECG rhythm classification and reader-study tooling"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory holding study logs.
    #[arg(long, global = true, default_value = "leadone-data")]
    pub data_dir: PathBuf,
    #[arg(short, long, global = true)]
    pub verbose: bool,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate every record of a manifest.
    Import {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a labeled synthetic corpus and its training manifest.
    Synth {
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split every record into 10–30 s lead-I segments and count them.
    Split {
        #[arg(long)]
        manifest: PathBuf,
    },
    Train(TrainArgs),
    /// Classify every segment of one record.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A `.hea` header or a single-record `.csv`.
        #[arg(long)]
        record: PathBuf,
        /// Sampling rate for CSV records.
        #[arg(long)]
        fs: Option<f64>,
    },
    /// Score a checkpoint on a labeled corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    #[command(subcommand)]
    Study(StudyCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Bearer token for analyze and study creation.
        #[arg(long, env = "LEADONE_SERVICE_TOKEN")]
        token: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Train a checkpoint on a corpus manifest.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training history and held-out scores as JSON.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Hold out every k-th segment of each class; 0 trains on everything.
    #[arg(long, default_value_t = 0)]
    pub holdout_every: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// 1 block × 2 layers on 8×16 inputs.
    #[arg(long)]
    pub reduced: bool,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Create a study from a reference manifest.
    Create {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        raters: Vec<String>,
        #[arg(long)]
        study_id: Option<String>,
    },
    /// Record model predictions for every item.
    ModelRun {
        #[arg(long)]
        study: String,
        #[arg(long)]
        admin_token: String,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    Report {
        #[arg(long)]
        study: String,
        #[arg(long)]
        admin_token: String,
        /// Write markdown tables here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numeric(_) | ModelError::Diverged { .. } => Self::Numeric(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<DeskError> for CliError {
    fn from(e: DeskError) -> Self {
        match e {
            DeskError::Model(m) => m.into(),
            DeskError::Pipeline(p) if p.model_error.is_some() => {
                p.model_error.expect("checked").into()
            }
            other => Self::Data(other.to_string()),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Data(e.to_string())
            }
        }
    )*};
}
data_error!(
    crate::ecg_io::EcgIoError,
    PreprocessError,
    MetricsError,
    StudyError,
    serde_json::Error
);

type CliResult<T> = Result<T, CliError>;

fn io<T>(path: &Path, r: std::io::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn plural(n: usize, word: &str) -> String {
    format!("{n} {word}{}", if n == 1 { "" } else { "s" })
}

struct Output<'a> {
    out: &'a mut dyn Write,
    json: bool,
}

impl Output<'_> {
    /// JSON document in `--json` mode, the human text otherwise.
    fn emit(&mut self, doc: &impl Serialize, human: impl FnOnce() -> String) -> CliResult<()> {
        let text = if self.json {
            serde_json::to_string_pretty(doc)?
        } else {
            human()
        };
        writeln!(self.out, "{}", text.trim_end())
            .map_err(|e| CliError::Data(format!("stdout: {e}")))
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    let mut output = Output {
        out,
        json: cli.json,
    };
    match dispatch(&cli, &mut output) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut Output) -> CliResult<()> {
    match &cli.command {
        Command::Import { manifest } => import(manifest, out),
        Command::Synth {
            per_class,
            out: dir,
        } => synth(*per_class, cli.seed, dir, out),
        Command::Split { manifest } => split(manifest, out),
        Command::Train(args) => train_cmd(args, cli.seed, out),
        Command::Predict {
            checkpoint,
            record,
            fs,
        } => predict(checkpoint, record, *fs, out),
        Command::Eval {
            checkpoint,
            manifest,
        } => eval(checkpoint, manifest, out),
        Command::Study(cmd) => study(cmd, cli, out),
        Command::Serve {
            addr,
            token,
            checkpoint,
        } => serve_cmd(addr, token, checkpoint.as_deref(), &cli.data_dir),
    }
}

fn load_checked_manifest(path: &Path) -> CliResult<(DatasetManifest, Vec<EcgRecord>)> {
    let manifest = load_manifest(path)?;
    let records = manifest.load_records()?;
    Ok((manifest, records))
}

fn import(path: &Path, out: &mut Output) -> CliResult<()> {
    let (manifest, records) = load_checked_manifest(path)?;
    let rows: Vec<_> = manifest
        .entries
        .iter()
        .zip(&records)
        .map(|(e, r)| {
            json!({
                "record_id": r.record_id(),
                "label": e.label,
                "leads": r.lead_names(),
                "sampling_rate_hz": r.sampling_rate_hz(),
                "duration_s": r.duration_s(),
            })
        })
        .collect();
    let doc = json!({ "dataset": manifest.dataset_name, "records": rows });
    out.emit(&doc, || {
        let mut s = format!(
            "{}: {} valid\n",
            manifest.dataset_name,
            plural(records.len(), "record")
        );
        for (e, r) in manifest.entries.iter().zip(&records) {
            s.push_str(&format!(
                "  {}  {}  {} lead(s)  {} Hz  {:.1} s\n",
                r.record_id(),
                e.label,
                r.n_leads(),
                r.sampling_rate_hz(),
                r.duration_s()
            ));
        }
        s
    })
}

fn synth(per_class: usize, seed: u64, dir: &Path, out: &mut Output) -> CliResult<()> {
    if per_class == 0 {
        return Err(CliError::Usage("--per-class must be at least 1".into()));
    }
    let records = synth_dataset(&corpus_specs(per_class, seed))?;
    let rec_dir = dir.join("records");
    io(&rec_dir, fs::create_dir_all(&rec_dir))?;
    let mut entries = Vec::with_capacity(records.len());
    for r in &records {
        let rel = PathBuf::from("records").join(format!("{}.csv", r.record.record_id()));
        let path = dir.join(&rel);
        io(&path, fs::write(&path, write_csv_record(&r.record)))?;
        entries.push(ManifestEntry {
            record_id: r.record.record_id().to_string(),
            path: rel,
            label: r.class,
            sampling_rate_hz: Some(r.record.sampling_rate_hz()),
        });
    }
    let manifest = dir.join("manifest.csv");
    io(
        &manifest,
        fs::write(&manifest, write_manifest(ManifestKind::Training, &entries)),
    )?;
    let doc = json!({ "records": records.len(), "per_class": per_class, "seed": seed, "manifest": manifest });
    out.emit(&doc, || {
        format!(
            "wrote {} ({} per class, seed {seed}) and {}",
            plural(records.len(), "record"),
            per_class,
            manifest.display()
        )
    })
}

fn split(path: &Path, out: &mut Output) -> CliResult<()> {
    let (_, records) = load_checked_manifest(path)?;
    let mut rows = Vec::new();
    for r in &records {
        let segments = split_segments(&extract_lead(r, "I")?)?;
        let bounds: Vec<(f64, f64)> = segments
            .iter()
            .map(|s| (s.start_s, s.start_s + s.duration_s))
            .collect();
        rows.push((r.record_id().to_string(), bounds));
    }
    let total: usize = rows.iter().map(|(_, b)| b.len()).sum();
    let doc = json!({
        "records": records.len(),
        "segments": total,
        "per_record": rows.iter().map(|(id, b)| json!({ "record_id": id, "segments": b })).collect::<Vec<_>>(),
    });
    out.emit(&doc, || {
        let mut s = format!(
            "{} → {}\n",
            plural(records.len(), "record"),
            plural(total, "segment")
        );
        for (id, b) in &rows {
            let spans: Vec<String> = b.iter().map(|(a, e)| format!("{a:.1}–{e:.1} s")).collect();
            s.push_str(&format!("  {id}: {}\n", spans.join(", ")));
        }
        s
    })
}

/// Segments and four-way classes of every record in a manifest.
fn corpus(path: &Path) -> CliResult<(Vec<crate::preprocess::Segment>, Vec<Label>)> {
    let (manifest, records) = load_checked_manifest(path)?;
    let labeled: Vec<(EcgRecord, Label)> = records
        .into_iter()
        .zip(manifest.entries.iter().map(|e| e.label))
        .collect();
    Ok(labeled_segments(&labeled)?.into_iter().unzip())
}

fn read_params(path: &Path) -> CliResult<Params> {
    let bytes = io(path, fs::read(path))?;
    Ok(read_checkpoint(&bytes)?)
}

fn eval_text(e: &Evaluation) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{:.1}", 100.0 * v));
    let mut s = format!("{} segments, accuracy {}\n\n", e.n, pct(Some(e.accuracy)));
    s.push_str("class   precision  recall  F1     support\n");
    for c in &e.per_class {
        s.push_str(&format!(
            "{:<7} {:>9}  {:>6}  {:>5}  {:>7}\n",
            c.class.as_str(),
            pct(c.precision),
            pct(c.recall),
            pct(c.f1),
            c.support
        ));
    }
    if let Some(k) = &e.kappa {
        s.push_str(&format!(
            "\nkappa {:.2} (SE {:.3}, 95% CI {:.2} to {:.2}, {})\n",
            k.kappa, k.se, k.ci_low, k.ci_high, k.band
        ));
    }
    let aucs: Vec<String> = e
        .roc
        .iter()
        .map(|c| format!("{} {:.3}", c.target, c.auc))
        .collect();
    s.push_str(&format!("AUC: {}\n", aucs.join(", ")));
    s.push_str("\nconfusion (rows: truth)\n");
    for (r, row) in e.matrix.reference_classes().iter().zip(e.matrix.counts()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>5}")).collect();
        s.push_str(&format!("{:<7}{}\n", r.as_str(), cells.join("")));
    }
    s
}

fn train_cmd(args: &TrainArgs, seed: u64, out: &mut Output) -> CliResult<()> {
    let config = if args.reduced {
        ModelConfig::reduced()
    } else {
        ModelConfig::default()
    };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        lr: args.lr.unwrap_or(defaults.lr),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        seed,
        ..defaults
    };
    let (segments, classes) = corpus(&args.manifest)?;
    let images = segment_images(&config, &segments)?;
    let labels = class_indices(&classes)?;
    let (train_idx, held_idx) = stratified_split(&classes, args.holdout_every);
    let pick = |idx: &[usize]| idx.iter().map(|&i| images[i].clone()).collect::<Vec<_>>();
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let params = init_params(&config, seed)?;
    let (trained, history) = train(&params, &pick(&train_idx), &train_labels, &tc)?;
    io(&args.out, fs::write(&args.out, write_checkpoint(&trained)?))?;

    let held_out = if held_idx.is_empty() {
        None
    } else {
        let truth: Vec<Label> = held_idx.iter().map(|&i| classes[i]).collect();
        Some(evaluate(
            &predict_images(&trained, &pick(&held_idx))?,
            &truth,
        )?)
    };
    let doc = json!({
        "model_version": trained.model_version,
        "train_segments": train_idx.len(),
        "held_out_segments": held_idx.len(),
        "config": tc,
        "history": history,
        "held_out": held_out,
    });
    if let Some(h) = &args.history {
        io(h, fs::write(h, serde_json::to_string_pretty(&doc)?))?;
    }
    out.emit(&doc, || {
        let mut s = String::new();
        for h in &history {
            s.push_str(&format!(
                "epoch {:>3}  loss {:.4}  acc {:.3}\n",
                h.epoch, h.loss, h.accuracy
            ));
        }
        s.push_str(&format!(
            "wrote {} ({})\n",
            args.out.display(),
            trained.model_version
        ));
        if let Some(e) = &held_out {
            s.push_str("\nheld-out\n");
            s.push_str(&eval_text(e));
        }
        s
    })
}

fn load_record_file(path: &Path, fs_hz: Option<f64>) -> CliResult<EcgRecord> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("record");
    match path.extension().and_then(|e| e.to_str()) {
        Some("hea") => {
            let header_text = io(path, fs::read_to_string(path))?;
            let header = parse_wfdb_header(&header_text)?;
            let dat_path = path.with_file_name(&header.leads[0].file);
            let dat = io(&dat_path, fs::read(&dat_path))?;
            Ok(parse_wfdb_subset(&header_text, &dat)?)
        }
        Some("csv") => {
            let fs_hz = fs_hz.ok_or_else(|| CliError::Usage("CSV records need --fs".into()))?;
            Ok(parse_csv_record(
                stem,
                &io(path, fs::read_to_string(path))?,
                fs_hz,
            )?)
        }
        _ => Err(CliError::Usage(format!(
            "{}: expected a .hea or .csv record",
            path.display()
        ))),
    }
}

fn predict(
    checkpoint: &Path,
    record: &Path,
    fs_hz: Option<f64>,
    out: &mut Output,
) -> CliResult<()> {
    let params = read_params(checkpoint)?;
    let record = load_record_file(record, fs_hz)?;
    let mut pipeline = Pipeline::new(&params.config);
    let mut rows = Vec::new();
    for seg in split_segments(&extract_lead(&record, "I")?)? {
        let p = pipeline
            .predict(&params, &seg)
            .map_err(|e| match e.model_error {
                Some(m) => CliError::from(m),
                None => CliError::Data(e.to_string()),
            })?;
        rows.push(json!({
            "record_id": record.record_id(),
            "segment_index": seg.segment_index,
            "start_s": seg.start_s,
            "duration_s": seg.duration_s,
            "class": p.predicted_class,
            "probabilities": MODEL_CLASSES.iter().zip(p.probabilities)
                .map(|(l, v)| (l.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
            "model_version": p.model_version,
        }));
    }
    let doc = json!({ "predictions": rows });
    out.emit(&doc, || {
        rows.iter()
            .map(|r| {
                format!(
                    "{} #{} @{:.1} s: {} {}",
                    r["record_id"].as_str().unwrap_or(""),
                    r["segment_index"],
                    r["start_s"].as_f64().unwrap_or(0.0),
                    r["class"].as_str().unwrap_or(""),
                    r["probabilities"]
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    })
}

fn eval(checkpoint: &Path, manifest: &Path, out: &mut Output) -> CliResult<()> {
    let params = read_params(checkpoint)?;
    let (segments, classes) = corpus(manifest)?;
    let images = segment_images(&params.config, &segments)?;
    let e = evaluate(&predict_images(&params, &images)?, &classes)?;
    out.emit(&e, || eval_text(&e))
}

fn study(cmd: &StudyCommand, cli: &Cli, out: &mut Output) -> CliResult<()> {
    let mut service = StudyService::open(&cli.data_dir)?;
    match cmd {
        StudyCommand::Create {
            manifest,
            raters,
            study_id,
        } => {
            let items = items_from_manifest(&load_manifest(manifest)?)?;
            let created = service.create_study(NewStudy {
                study_id: study_id.clone(),
                seed: cli.seed,
                raters: raters.clone(),
                items,
            })?;
            out.emit(&created, || {
                let mut s = format!(
                    "created {} with {}\nadmin token: {}\n",
                    created.study_id,
                    plural(created.items, "item"),
                    created.admin_token
                );
                for r in &created.raters {
                    s.push_str(&format!("rater {}: {}\n", r.rater_id, r.token));
                }
                s
            })
        }
        StudyCommand::ModelRun {
            study,
            admin_token,
            checkpoint,
        } => {
            let params = read_params(checkpoint)?;
            let summary = service.run_model(study, admin_token, &params)?;
            out.emit(&summary, || {
                let mut s = format!(
                    "{}: {} predicted with {}, {} failed\n",
                    summary.run_id,
                    summary.predicted,
                    summary.model_version,
                    summary.failures.len()
                );
                for f in &summary.failures {
                    s.push_str(&format!("  {} ({}): {}\n", f.item_id, f.stage, f.message));
                }
                s
            })
        }
        StudyCommand::Report {
            study,
            admin_token,
            out: path,
        } => {
            let report = service.report(study, admin_token)?;
            let md = report.to_markdown();
            if let Some(p) = path {
                io(p, fs::write(p, &md))?;
            }
            out.emit(&report, || {
                if path.is_some() {
                    String::new()
                } else {
                    md.clone()
                }
            })
        }
    }
}

fn serve_cmd(addr: &str, token: &str, checkpoint: Option<&Path>, data_dir: &Path) -> CliResult<()> {
    if token.trim().is_empty() {
        return Err(CliError::Usage("--token must not be empty".into()));
    }
    let model = checkpoint.map(read_params).transpose()?;
    if model.is_none() {
        log::warn!("no checkpoint given; analyze and model-run will answer 503");
    }
    let state = Arc::new(AppState::new(
        StudyService::open(data_dir)?,
        model,
        token.to_string(),
    ));
    let runtime =
        tokio::runtime::Runtime::new().map_err(|e| CliError::Data(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Data(format!("{addr}: {e}")))?;
        log::info!("listening on {addr}");
        serve(listener, state)
            .await
            .map_err(|e| CliError::Data(e.to_string()))
    })
}
