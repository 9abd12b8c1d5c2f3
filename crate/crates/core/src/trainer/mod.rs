//! Training loops for the multimodal teacher, the audio-only baseline and the
//! distilled audio-only student.
//!
//! All three share one loop: shuffled mini-batches, Adam with two learning
//! rate groups (encoder / projection+head), a plateau schedule driven by the
//! validation CCC loss, and best-epoch selection on the validation split.

mod adam;
mod config;
mod plateau;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use config::{Selection, TrainConfig};
pub use plateau::{lr_trace, PlateauScheduler};

use crate::autodiff::{Tape, Tensor};
use crate::data::{Label, Utterance};
use crate::encoder::{EmotionModel, Modality, ModelConfig, ParamGroup};
use crate::error::{Error, Result};
use crate::filter::FilterMask;
use crate::losses::{emotion_loss, student_loss, total_loss, CccReport};

/// One completed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr_head: f64,
    pub lr_encoder: f64,
    pub train_emo: f64,
    pub train_stu: f64,
    pub train_total: f64,
    pub val_emo: f64,
    pub val: CccReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were returned; `None` if no epoch ran.
    pub selected_epoch: Option<usize>,
}

impl RunLog {
    /// One JSON object per epoch, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch log serializes") + "\n")
            .collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_emo).collect()
    }
}

/// Frozen teacher embeddings and the per-utterance distillation gate.
#[derive(Clone, Debug)]
pub struct DistillTargets {
    embeddings: HashMap<String, Vec<f32>>,
    keep: HashMap<String, bool>,
}

impl DistillTargets {
    /// Teacher embeddings for every utterance in `train`; `mask` of `None`
    /// keeps everything (plain teacher-student).
    pub fn new(teacher: &EmotionModel, train: &[Utterance], mask: Option<&FilterMask>) -> Result<Self> {
        if teacher.modality() != Modality::Multimodal {
            return Err(Error::invalid("distillation teacher must be multimodal"));
        }
        let keep = match mask {
            None => train.iter().map(|u| (u.id.clone(), true)).collect(),
            Some(mask) => mask_lookup(mask, train)?,
        };
        let embeddings = train
            .iter()
            .map(|u| Ok((u.id.clone(), teacher.embed(u)?)))
            .collect::<Result<_>>()?;
        Ok(Self { embeddings, keep })
    }

    /// Explicit targets, mainly for inspecting gradients of a single batch.
    pub fn from_parts(embeddings: HashMap<String, Vec<f32>>, keep: HashMap<String, bool>) -> Self {
        Self { embeddings, keep }
    }

    pub fn is_kept(&self, id: &str) -> bool {
        self.keep.get(id).copied().unwrap_or(false)
    }

    pub fn embedding(&self, id: &str) -> Option<&[f32]> {
        self.embeddings.get(id).map(Vec::as_slice)
    }
}

fn mask_lookup(mask: &FilterMask, train: &[Utterance]) -> Result<HashMap<String, bool>> {
    let keep: HashMap<String, bool> = mask.entries.iter().map(|e| (e.id.clone(), e.keep)).collect();
    let missing: Vec<&str> = train
        .iter()
        .map(|u| u.id.as_str())
        .filter(|id| !keep.contains_key(*id))
        .collect();
    if !missing.is_empty() || keep.len() != train.len() {
        return Err(Error::data(format!(
            "mask does not match the training split ({} mask entries, {} utterances; missing: {})",
            keep.len(),
            train.len(),
            preview(&missing)
        )));
    }
    Ok(keep)
}

fn preview(ids: &[&str]) -> String {
    const MAX: usize = 10;
    let mut s = ids.iter().take(MAX).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > MAX {
        s += &format!(", ... ({} total)", ids.len());
    }
    s
}

/// Loss values and per-parameter gradients of one mini-batch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub emo: f64,
    pub stu: f64,
    pub total: f64,
    /// In [`EmotionModel::named_parameters`] order.
    pub grads: Vec<Vec<f64>>,
}

/// Forward and backward pass for one batch. Every utterance contributes to
/// the CCC loss; only utterances kept by `distill` contribute to the
/// distillation term. With `distill` of `None` (or `lambda == 0`) the
/// objective is the CCC loss alone.
pub fn batch_gradients(
    model: &EmotionModel,
    batch: &[&Utterance],
    distill: Option<&DistillTargets>,
    cfg: &TrainConfig,
) -> Result<BatchResult> {
    let loss_cfg = cfg.loss_config();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let mut preds = Vec::with_capacity(batch.len());
    let mut student = Vec::new();
    let mut teacher = Vec::new();
    for utt in batch {
        let out = bound.forward(&mut tape, utt)?;
        preds.push(out.prediction);
        if let Some(d) = distill.filter(|_| cfg.lambda > 0.0) {
            if d.is_kept(&utt.id) {
                let target = d
                    .embedding(&utt.id)
                    .ok_or_else(|| Error::data(format!("no teacher embedding for {:?}", utt.id)))?;
                student.push(out.embedding);
                teacher.push(tape.constant(&Tensor::row(target.to_vec())));
            }
        }
    }
    let pred = tape.concat(&preds, 0)?;
    let labels: Vec<f32> = batch.iter().flat_map(|u| u.label).collect();
    let label = tape.constant(&Tensor::new([batch.len(), 3], labels)?);
    let emo = emotion_loss(&mut tape, pred, label, &loss_cfg)?;

    let (stu, total) = if distill.is_some() && cfg.lambda > 0.0 {
        let stu = if student.is_empty() {
            tape.constant(&Tensor::scalar(0.0))
        } else {
            let s = tape.concat(&student, 0)?;
            let t = tape.concat(&teacher, 0)?;
            student_loss(&mut tape, t, s)?
        };
        (Some(stu), total_loss(&mut tape, emo, stu, &loss_cfg)?)
    } else {
        (None, emo)
    };

    let total_value = tape.scalar(total)?;
    if !total_value.is_finite() {
        return Err(Error::NonFinite { op: "training loss".into() });
    }
    let grads = tape.backward(total)?;
    let grads = bound
        .vars()
        .into_iter()
        .map(|v| grads.values(v).expect("trainable parameter").to_vec())
        .collect();
    Ok(BatchResult {
        emo: tape.scalar(emo)?,
        stu: stu.map(|s| tape.scalar(s)).transpose()?.unwrap_or(0.0),
        total: total_value,
        grads,
    })
}

/// Predictions for every utterance, in order.
pub fn predict_all(model: &EmotionModel, utts: &[Utterance]) -> Result<Vec<Label>> {
    utts.iter().map(|u| model.predict(u)).collect()
}

/// CCC, Pearson correlation and bias correction per dimension over the whole
/// split in one pass.
pub fn evaluate(model: &EmotionModel, utts: &[Utterance]) -> Result<CccReport> {
    if utts.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty split"));
    }
    let preds = predict_all(model, utts)?;
    let labels: Vec<Label> = utts.iter().map(|u| u.label).collect();
    CccReport::from_predictions(&preds, &labels)
}

/// Batches of shuffled indices; a trailing batch of one is dropped.
fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size).filter(|c| c.len() >= 2)
}

/// The loop shared by every model class.
fn fit(
    init: EmotionModel,
    train: &[Utterance],
    val: &[Utterance],
    distill: Option<&DistillTargets>,
    encoder_divisor: f64,
    cfg: &TrainConfig,
) -> Result<(EmotionModel, RunLog)> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::invalid(format!("training needs at least 2 utterances, got {}", train.len())));
    }
    if val.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let mut model = init;
    let mut log = RunLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }

    let (names, groups): (Vec<String>, Vec<ParamGroup>) =
        model.named_parameters().into_iter().map(|(n, g, _)| (n, g)).unzip();
    let mut adam = AdamState::new(model.named_parameters().into_iter().map(|(_, _, t)| t));
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, EmotionModel)> = None;

    for epoch in 1..=cfg.epochs {
        let lr_head = sched.lr();
        let lr_encoder = lr_head / encoder_divisor;
        let lrs: Vec<f64> = groups
            .iter()
            .map(|g| match g {
                ParamGroup::Encoder => lr_encoder,
                ParamGroup::Head => lr_head,
            })
            .collect();

        order.shuffle(&mut rng);
        let (mut emo, mut stu, mut total, mut n) = (0.0, 0.0, 0.0, 0usize);
        for idx in batches(&order, cfg.batch_size) {
            let batch: Vec<&Utterance> = idx.iter().map(|&i| &train[i]).collect();
            let res = batch_gradients(&model, &batch, distill, cfg)?;
            let grads: Vec<&[f64]> = res.grads.iter().map(Vec::as_slice).collect();
            adam_step(&mut adam, &mut model.parameters_mut(), &grads, &lrs, &names)?;
            emo += res.emo;
            stu += res.stu;
            total += res.total;
            n += 1;
        }
        let n = n as f64;

        let report = evaluate(&model, val)?;
        let val_emo = report.emotion_loss(&cfg.alpha);
        if !val_emo.is_finite() {
            return Err(Error::NonFinite { op: "validation loss".into() });
        }
        log.epochs.push(EpochLog {
            epoch,
            lr_head,
            lr_encoder,
            train_emo: emo / n,
            train_stu: stu / n,
            train_total: total / n,
            val_emo,
            val: report,
        });

        let score = match cfg.selection {
            Selection::Loss => val_emo,
            Selection::Ccc => -report.mean_ccc(),
        };
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, model.clone()));
            log.selected_epoch = Some(epoch);
        }
        sched.step(val_emo);
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, log))
}

fn check_text(train: &[Utterance], val: &[Utterance]) -> Result<()> {
    let missing: Vec<&str> = train
        .iter()
        .chain(val)
        .filter(|u| u.text.is_none())
        .map(|u| u.id.as_str())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::data(format!("utterances without text features: {}", preview(&missing))))
    }
}

fn corpus_dims(train: &[Utterance]) -> Result<(usize, usize)> {
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("training split is empty"))?;
    Ok((first.audio.dim(), first.text.as_ref().map_or(0, |t| t.dim())))
}

/// Trains the multimodal teacher from a fresh initialisation. Both parameter
/// groups use the full learning rate.
pub fn train_teacher(train: &[Utterance], val: &[Utterance], cfg: &TrainConfig) -> Result<(EmotionModel, RunLog)> {
    check_text(train, val)?;
    let (a, t) = corpus_dims(train)?;
    let init = EmotionModel::new(cfg.model_config(ModelConfig::multimodal(a, t)), cfg.seed)?;
    fit(init, train, val, None, 1.0, cfg)
}

/// How an audio-only model is initialised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AudioInit {
    /// Fresh random parameters.
    Scratch,
    /// Audio encoder and prediction head copied from the teacher; fresh
    /// audio projection.
    #[default]
    FromTeacher,
}

/// Initial audio-only model. With a teacher the sizes follow the teacher;
/// otherwise they follow `cfg` and the corpus.
pub fn audio_init(
    train: &[Utterance],
    teacher: Option<&EmotionModel>,
    init: AudioInit,
    cfg: &TrainConfig,
) -> Result<EmotionModel> {
    match (init, teacher) {
        (AudioInit::FromTeacher, Some(t)) => EmotionModel::student_from_teacher(t, cfg.seed),
        (AudioInit::FromTeacher, None) => Err(Error::invalid("teacher initialisation needs a teacher")),
        (AudioInit::Scratch, Some(t)) => EmotionModel::new(
            ModelConfig {
                modality: Modality::Audio,
                text_dim: 0,
                ..t.config().clone()
            },
            cfg.seed,
        ),
        (AudioInit::Scratch, None) => {
            let (a, _) = corpus_dims(train)?;
            EmotionModel::new(cfg.model_config(ModelConfig::audio(a)), cfg.seed)
        }
    }
}

fn check_audio(init: &EmotionModel) -> Result<()> {
    if init.modality() == Modality::Audio {
        Ok(())
    } else {
        Err(Error::invalid("audio-only training needs an audio-only model"))
    }
}

/// Audio-only baseline: the CCC loss alone, with the encoder group at
/// `lr / encoder_lr_divisor`.
pub fn train_audio(
    init: EmotionModel,
    train: &[Utterance],
    val: &[Utterance],
    cfg: &TrainConfig,
) -> Result<(EmotionModel, RunLog)> {
    check_audio(&init)?;
    fit(init, train, val, None, cfg.encoder_lr_divisor, cfg)
}

/// Audio-only student distilled from a frozen multimodal teacher. Without a
/// mask every utterance is distilled; with one, only kept utterances are.
pub fn train_student(
    init: EmotionModel,
    teacher: &EmotionModel,
    mask: Option<&FilterMask>,
    train: &[Utterance],
    val: &[Utterance],
    cfg: &TrainConfig,
) -> Result<(EmotionModel, RunLog)> {
    check_audio(&init)?;
    if init.embed_dim() != teacher.embed_dim() {
        return Err(Error::invalid(format!(
            "student embedding size {} differs from teacher's {}",
            init.embed_dim(),
            teacher.embed_dim()
        )));
    }
    let targets = DistillTargets::new(teacher, train, mask)?;
    fit(init, train, val, Some(&targets), cfg.encoder_lr_divisor, cfg)
}
