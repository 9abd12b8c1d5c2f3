//! Command-line front end. Each pipeline stage is a subcommand that reads
//! its inputs from disk and writes its artifacts into `--out`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{generate_synthetic, load_manifest, SynthSpec, Utterance};
use crate::encoder::{load_checkpoint, save_checkpoint, EmotionModel};
use crate::error::{Error, Result};
use crate::filter::{compute_mask, filter_stats, fit_residual_model, FilterMask, FilterStats, ResidualModel};
use crate::gradcheck::{run_suite, TOLERANCE};
use crate::trainer::{
    audio_init, evaluate, predict_all, train_audio, train_student, train_teacher, AudioInit, RunLog, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "emodistill", version, about = "Emotion regression with residual-gated teacher-student distillation")]
pub struct Cli {
    /// Flat TOML config: training keys for training commands, corpus keys for gen-synth.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Multimodal,
    Audio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    ValenceInText,
    AllAudio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Teacher,
    Scratch,
}

impl From<InitArg> for AudioInit {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::Teacher => AudioInit::FromTeacher,
            InitArg::Scratch => AudioInit::Scratch,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (manifests + feature files).
    GenSynth {
        #[arg(long, value_enum, default_value = "valence-in-text")]
        preset: PresetArg,
    },
    /// Train a multimodal teacher, or an audio-only baseline with `--modality audio`.
    TrainTeacher {
        /// Directory holding train.json and val.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "multimodal")]
        modality: ModalityArg,
        /// Audio-only: copy the audio encoder and head from this teacher.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Distill an audio-only student from a trained teacher.
    TrainStudent {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        /// Mask CSV from filter-stats; omit to distill on every utterance.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "teacher")]
        init: InitArg,
    },
    /// CCC, Pearson correlation and bias correction on one split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fit the residual model on the teacher's training predictions and write the mask.
    FilterStats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Finite-difference verification of all gradients.
    GradCheck {
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn train_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = read_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(data: &Path, name: &str) -> Result<Vec<Utterance>> {
    Ok(load_manifest(data.join(format!("{name}.json")))?.utterances)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    Ok(&cli.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save_run(out: &Path, model: &EmotionModel, log: &RunLog) -> Result<()> {
    save_checkpoint(model, out.join("model.ckpt"))?;
    log.write_jsonl(out.join("runlog.jsonl"))?;
    if let Some(e) = log.selected_epoch.and_then(|n| log.epochs.get(n - 1)) {
        println!(
            "selected epoch {} of {}: val CCC A={:.4} V={:.4} D={:.4}",
            e.epoch,
            log.epochs.len(),
            e.val.activation.ccc,
            e.val.valence.ccc,
            e.val.dominance.ccc
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct FilterReport<'a> {
    tau: f64,
    w: [f64; 3],
    b: [f64; 3],
    sigma: [f64; 3],
    #[serde(flatten)]
    stats: &'a FilterStats,
}

impl<'a> FilterReport<'a> {
    fn new(model: &ResidualModel, tau: f64, stats: &'a FilterStats) -> Self {
        Self {
            tau,
            w: model.dims.map(|d| d.w),
            b: model.dims.map(|d| d.b),
            sigma: model.dims.map(|d| d.sigma),
            stats,
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynth { preset } => {
            let mut spec: SynthSpec = match (&cli.config, preset) {
                (Some(_), _) => read_config(cli.config.as_deref())?,
                (None, PresetArg::ValenceInText) => SynthSpec::valence_in_text(),
                (None, PresetArg::AllAudio) => SynthSpec::all_audio(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            spec.validate()?;
            let written = generate_synthetic(&spec, out_dir(cli)?)?;
            println!("wrote {} manifests to {}", written.len(), cli.out.display());
        }
        Command::TrainTeacher {
            data,
            modality,
            init_from,
        } => {
            let cfg = train_config(cli)?;
            let (train, val) = (load_split(data, "train")?, load_split(data, "val")?);
            let (model, log) = match modality {
                ModalityArg::Multimodal => {
                    if init_from.is_some() {
                        return Err(Error::Config("--init-from applies to --modality audio only".into()));
                    }
                    train_teacher(&train, &val, &cfg)?
                }
                ModalityArg::Audio => {
                    let teacher = init_from.as_ref().map(load_checkpoint).transpose()?;
                    let kind = if teacher.is_some() {
                        AudioInit::FromTeacher
                    } else {
                        AudioInit::Scratch
                    };
                    let init = audio_init(&train, teacher.as_ref(), kind, &cfg)?;
                    train_audio(init, &train, &val, &cfg)?
                }
            };
            save_run(out_dir(cli)?, &model, &log)?;
        }
        Command::TrainStudent {
            data,
            teacher,
            mask,
            init,
        } => {
            let cfg = train_config(cli)?;
            let (train, val) = (load_split(data, "train")?, load_split(data, "val")?);
            let teacher = load_checkpoint(teacher)?;
            let mask = mask.as_ref().map(FilterMask::read_csv).transpose()?;
            let init = audio_init(&train, Some(&teacher), (*init).into(), &cfg)?;
            let (model, log) = train_student(init, &teacher, mask.as_ref(), &train, &val, &cfg)?;
            save_run(out_dir(cli)?, &model, &log)?;
        }
        Command::Evaluate { data, model, split } => {
            let model = load_checkpoint(model)?;
            let utts = load_split(data, split)?;
            let report = evaluate(&model, &utts)?;
            let out = out_dir(cli)?.join(format!("ccc_{split}.json"));
            write_json(&out, &report)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        Command::FilterStats { data, teacher, tau } => {
            let cfg = train_config(cli)?;
            let tau = tau.unwrap_or(cfg.tau);
            let teacher = load_checkpoint(teacher)?;
            let train = load_split(data, "train")?;
            let preds = predict_all(&teacher, &train)?;
            let labels: Vec<_> = train.iter().map(|u| u.label).collect();
            let ids: Vec<String> = train.iter().map(|u| u.id.clone()).collect();
            let model = fit_residual_model(&preds, &labels)?;
            let mask = compute_mask(&model, &ids, &preds, &labels, tau)?;
            let stats = filter_stats(&model, &mask)?;
            let out = out_dir(cli)?;
            write_json(&out.join("filter.json"), &FilterReport::new(&model, tau, &stats))?;
            mask.write_csv(out.join("mask.csv"))?;
            println!(
                "kept {} / {} (discarded {:.2}%), triggers A={} V={} D={}",
                stats.kept,
                stats.total,
                100.0 * stats.fraction,
                stats.triggers[0],
                stats.triggers[1],
                stats.triggers[2]
            );
        }
        Command::GradCheck { trials } => {
            let seed = cli.seed.unwrap_or(0);
            let report = run_suite(*trials, seed)?;
            let mut stdout = std::io::stdout().lock();
            for c in &report.checks {
                let verdict = if c.max_rel_error < TOLERANCE { "ok" } else { "FAIL" };
                let _ = writeln!(stdout, "{:<22} max rel error {:.3e}  {verdict}", c.name, c.max_rel_error);
            }
            if !report.passed() {
                return Err(Error::Numerical(format!(
                    "gradient check failed: worst relative error {:.3e} >= {TOLERANCE:e}",
                    report.worst()
                )));
            }
        }
    }
    Ok(())
}
