//! Command-line interface: one subcommand per pipeline stage.
//!
//! Exit codes: 0 on success, 1 on an operational failure (reported as a
//! single JSON line on stderr), 2 on a usage error. Every successful
//! run prints a one-line JSON summary to stdout so scripts can chain
//! stages without scraping human-oriented text.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::corpus::{read_manifest, Task};
use crate::evaluation::{evaluate, write_report_files};
use crate::frontend::{add_deltas, decode_audio, lfcc, write_features, FeaturePipeline};
use crate::models::EmbeddingProvider;
use crate::protocol::{
    assign_voice_ids, emit_protocol, filter_degenerate, partition_disjoint, read_embeddings,
    read_protocol, select_k_elbow, spherical_kmeans, Partition,
};
use crate::synth::{synth_corpus, SynthSpec};
use crate::training::{
    fresh_run_dir, train_e2e, train_two_stage, write_run_dir, Checkpoint, ModelState, RunConfig,
    Strategy, TrainConfig,
};
use crate::{Error, Result};

/// Configs named by bare relative paths are also looked up under this
/// directory when they don't exist in the working directory.
pub const CONFIG_DIR_VAR: &str = "SPOOFTRACE_CONFIG_DIR";

#[derive(Parser)]
#[command(
    name = "spooftrace",
    version,
    about = "Spoofed-speech attribute classification and source tracing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus from a TOML spec.
    Synth {
        /// Synthesis spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for audio/ and manifest.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract full-length LFCC features for every manifest entry.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory receiving one <id>.feat file per utterance.
        #[arg(long)]
        out: PathBuf,
        /// Feature pipeline settings (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cluster voices from embeddings and emit a voice-disjoint protocol.
    BuildProtocol {
        #[arg(long)]
        manifest: PathBuf,
        /// Speaker-embedding file covering the spoofed utterances.
        #[arg(long)]
        embeddings: PathBuf,
        /// Ascending candidate cluster counts, e.g. 4,8,16 (3 or more).
        #[arg(long, value_delimiter = ',', required = true)]
        k_grid: Vec<usize>,
        /// Train,dev,eval fractions; must sum to 1.
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.15, 0.15])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop classes whose largest voice cluster holds more than this
        /// share of their samples. The flag alone uses 0.5.
        #[arg(long, num_args = 0..=1, default_missing_value = "0.5")]
        dominance: Option<f64>,
        /// Protocol TSV to write (a .meta.tsv sidecar appears next to it).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a run directory.
    Train {
        /// binary, input_type, acoustic_model or vocoder.
        #[arg(long)]
        task: String,
        /// e2e or two_stage.
        #[arg(long)]
        strategy: String,
        /// Protocol TSV from build-protocol.
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Run settings (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory base; suffixed -1, -2, ... if it already exists.
        #[arg(long)]
        out: PathBuf,
        /// two_stage only: precomputed embedding file to train the head on.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// two_stage only: checkpoint whose backbone embeds the audio.
        #[arg(long)]
        base_checkpoint: Option<PathBuf>,
    },
    /// Score a checkpoint over the protocol's eval split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        task: String,
        /// Embedding file, required by heads trained on fixtures.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Directory receiving report.json and the confusion dumps.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a training run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// Parse `argv` (including the program name) and execute. Never exits
/// the process; returns the code for the caller to exit with.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version route to stdout with code 0, usage errors to
            // stderr with code 2.
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "status": "error", "message": e.to_string() }));
            1
        }
    }
}

fn dispatch(command: Command) -> Result<serde_json::Value> {
    match command {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::ExtractFeatures { manifest, out, config } => {
            cmd_extract_features(&manifest, &out, config.as_deref())
        }
        Command::BuildProtocol {
            manifest,
            embeddings,
            k_grid,
            ratios,
            seed,
            dominance,
            out,
        } => cmd_build_protocol(&manifest, &embeddings, &k_grid, &ratios, seed, dominance, &out),
        Command::Train {
            task,
            strategy,
            protocol,
            manifest,
            config,
            out,
            embeddings,
            base_checkpoint,
        } => cmd_train(
            &task,
            &strategy,
            &protocol,
            &manifest,
            config.as_deref(),
            &out,
            embeddings.as_deref(),
            base_checkpoint.as_deref(),
        ),
        Command::Evaluate {
            checkpoint,
            protocol,
            manifest,
            task,
            embeddings,
            out,
        } => cmd_evaluate(&checkpoint, &protocol, &manifest, &task, embeddings.as_deref(), &out),
        Command::Report { run_dir } => cmd_report(&run_dir),
    }
}

/// Fall back to `$SPOOFTRACE_CONFIG_DIR/<path>` for relative config
/// paths that don't resolve from the working directory.
fn resolve_config(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(CONFIG_DIR_VAR) {
        let alt = Path::new(&dir).join(path);
        if alt.exists() {
            return alt;
        }
    }
    path.to_path_buf()
}

fn cmd_synth(spec: &Path, out: &Path) -> Result<serde_json::Value> {
    let spec = SynthSpec::load(&resolve_config(spec))?;
    let manifest = synth_corpus(&spec, out)?;
    Ok(json!({
        "status": "ok",
        "command": "synth",
        "files": manifest.len(),
        "manifest": out.join("manifest.tsv"),
    }))
}

fn cmd_extract_features(
    manifest: &Path,
    out: &Path,
    config: Option<&Path>,
) -> Result<serde_json::Value> {
    let pipeline = match config {
        Some(path) => {
            let text = crate::tsv::read_to_string(&resolve_config(path))?;
            toml::from_str::<FeaturePipeline>(&text)
                .map_err(|e| Error::InvalidConfig(format!("feature config: {e}")))?
        }
        None => FeaturePipeline::default(),
    };
    pipeline.validate()?;
    let manifest = read_manifest(manifest)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (utt, _) in manifest.entries() {
        let samples = decode_audio(Path::new(&utt.audio_path))?;
        let mut features = lfcc(&samples, crate::CANONICAL_RATE, &pipeline.lfcc)?;
        if pipeline.deltas {
            features = add_deltas(&features)?;
        }
        write_features(&out.join(format!("{}.feat", utt.id)), &features)?;
    }
    Ok(json!({
        "status": "ok",
        "command": "extract-features",
        "files": manifest.len(),
        "out": out,
    }))
}

fn cmd_build_protocol(
    manifest: &Path,
    embeddings: &Path,
    k_grid: &[usize],
    ratios: &[f64],
    seed: u64,
    dominance: Option<f64>,
    out: &Path,
) -> Result<serde_json::Value> {
    if ratios.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "expected three ratios (train,dev,eval), got {}",
            ratios.len()
        )));
    }
    let ratios = (ratios[0], ratios[1], ratios[2]);
    let mut manifest = read_manifest(manifest)?;
    let emb = read_embeddings(embeddings)?;

    let knee = select_k_elbow(&emb, k_grid, seed)?;
    let clustering = spherical_kmeans(&emb, knee.chosen_k, seed, 200, 1e-9)?;
    manifest = assign_voice_ids(&manifest, &clustering)?;

    // Degenerate classes are filtered per attribute task, vocoder first;
    // each pass sees the manifest the previous one kept.
    let mut removed_classes = BTreeMap::new();
    if let Some(threshold) = dominance {
        for task in [Task::Vocoder, Task::AcousticModel] {
            let (kept, removed) = filter_degenerate(&manifest, &clustering, task, threshold)?;
            manifest = kept;
            removed_classes.insert(task.as_str().to_string(), removed);
        }
    }

    let mut spec = partition_disjoint(&manifest, ratios, seed)?;
    spec.removed_classes = removed_classes;
    spec.dominance_threshold = dominance;
    emit_protocol(&spec, &manifest, out)?;

    let sizes: BTreeMap<&str, usize> = Partition::ALL
        .iter()
        .map(|&p| (p.as_str(), spec.ids_in(p).len()))
        .collect();
    Ok(json!({
        "status": "ok",
        "command": "build-protocol",
        "chosen_k": knee.chosen_k,
        "no_elbow": knee.no_elbow,
        "removed_classes": spec.removed_classes,
        "partition_sizes": sizes,
        "protocol": out,
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    task: &str,
    strategy: &str,
    protocol: &Path,
    manifest: &Path,
    config: Option<&Path>,
    out: &Path,
    embeddings: Option<&Path>,
    base_checkpoint: Option<&Path>,
) -> Result<serde_json::Value> {
    let task = Task::parse(task)?;
    let strategy = Strategy::parse(strategy)?;
    let run = match config {
        Some(path) => RunConfig::load(&resolve_config(path))?,
        None => RunConfig::default(),
    };
    let cfg = TrainConfig::new(task, strategy, run);
    let manifest = read_manifest(manifest)?;
    let (spec, _) = read_protocol(protocol)?;

    let ckpt = match strategy {
        Strategy::E2e => {
            if embeddings.is_some() || base_checkpoint.is_some() {
                return Err(Error::InvalidInput(
                    "--embeddings and --base-checkpoint apply to two_stage only".into(),
                ));
            }
            train_e2e(&manifest, &spec, &cfg)?
        }
        Strategy::TwoStage => {
            let provider = match (embeddings, base_checkpoint) {
                (Some(path), None) => EmbeddingProvider::Fixture(read_embeddings(path)?),
                (None, Some(path)) => {
                    let base = Checkpoint::load(path)?;
                    let backbone = match base.model {
                        ModelState::E2e { backbone, .. } => Box::new(backbone),
                        ModelState::Head {
                            backbone: Some(backbone),
                            ..
                        } => backbone,
                        ModelState::Head { backbone: None, .. } => {
                            return Err(Error::InvalidInput(format!(
                                "{}: checkpoint carries no backbone",
                                path.display()
                            )))
                        }
                    };
                    EmbeddingProvider::Backbone(backbone)
                }
                _ => {
                    return Err(Error::InvalidInput(
                        "two_stage needs exactly one of --embeddings or --base-checkpoint".into(),
                    ))
                }
            };
            train_two_stage(&manifest, &spec, &provider, &cfg)?
        }
    };

    let run_dir = fresh_run_dir(out)?;
    write_run_dir(&ckpt, &run_dir)?;
    Ok(json!({
        "status": "ok",
        "command": "train",
        "run_dir": run_dir,
        "epochs": ckpt.history.len(),
        "selection": {
            "metric": ckpt.selection.metric,
            "epoch": ckpt.selection.epoch,
            "value": ckpt.selection.value,
        },
    }))
}

fn cmd_evaluate(
    checkpoint: &Path,
    protocol: &Path,
    manifest: &Path,
    task: &str,
    embeddings: Option<&Path>,
    out: &Path,
) -> Result<serde_json::Value> {
    let task = Task::parse(task)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let manifest = read_manifest(manifest)?;
    let (spec, _) = read_protocol(protocol)?;
    let fixture = embeddings.map(|p| read_embeddings(p)).transpose()?;

    let report = evaluate(&ckpt, &manifest, &spec, task, fixture.as_ref())?;
    write_report_files(&report, out)?;
    Ok(json!({
        "status": "ok",
        "command": "evaluate",
        "n_scored": report.n_scored,
        "micro_accuracy": report.micro_accuracy,
        "macro_f1": report.macro_f1,
        "unseen_classes": report.unseen_classes,
        "out": out,
    }))
}

fn cmd_report(run_dir: &Path) -> Result<serde_json::Value> {
    let ckpt = Checkpoint::load(&run_dir.join("model.ckpt"))?;
    let last = ckpt.history.last();
    Ok(json!({
        "status": "ok",
        "command": "report",
        "run_dir": run_dir,
        "task": ckpt.task.as_str(),
        "strategy": ckpt.strategy.as_str(),
        "classes": ckpt.class_names,
        "dataset": ckpt.provenance.dataset_name,
        "seed": ckpt.provenance.seed,
        "epochs": ckpt.history.len(),
        "selection_split": ckpt.selection_split,
        "selection": {
            "metric": ckpt.selection.metric,
            "epoch": ckpt.selection.epoch,
            "value": ckpt.selection.value,
        },
        "final": last.map(|m| json!({
            "train_loss": m.train_loss,
            "dev_accuracy": m.dev_accuracy,
            "dev_macro_f1": m.dev_macro_f1,
        })),
    }))
}
