mod common;

use std::collections::HashMap;

use emodistill::data::Utterance;
use emodistill::encoder::encode_checkpoint;
use emodistill::filter::{FilterMask, MaskEntry};
use emodistill::trainer::{
    audio_init, batch_gradients, evaluate, lr_trace, train_audio, train_student, train_teacher, AudioInit,
    DistillTargets, Selection, TrainConfig,
};

fn mask_with(train: &[Utterance], keep: impl Fn(usize) -> bool) -> FilterMask {
    FilterMask {
        tau: 2.0,
        entries: train
            .iter()
            .enumerate()
            .map(|(i, u)| MaskEntry {
                id: u.id.clone(),
                residuals: [0.0; 3],
                keep: keep(i),
            })
            .collect(),
    }
}

#[test]
fn all_excluded_mask_matches_lambda_zero() {
    let (train, val, _) = common::tiny_corpus(21);
    let cfg = common::tiny_config();
    let (teacher, _) = train_teacher(&train, &val, &cfg).unwrap();
    let init = audio_init(&train, Some(&teacher), AudioInit::FromTeacher, &cfg).unwrap();

    let none_kept = mask_with(&train, |_| false);
    let (masked, masked_log) = train_student(init.clone(), &teacher, Some(&none_kept), &train, &val, &cfg).unwrap();
    let zero = TrainConfig { lambda: 0.0, ..cfg.clone() };
    let (plain, plain_log) = train_student(init, &teacher, None, &train, &val, &zero).unwrap();

    assert_eq!(encode_checkpoint(&masked), encode_checkpoint(&plain));
    for (a, b) in masked_log.epochs.iter().zip(&plain_log.epochs) {
        assert_eq!(a.train_emo, b.train_emo);
        assert_eq!(a.train_stu, 0.0);
        assert_eq!(a.val, b.val);
    }
}

#[test]
fn teacher_is_not_modified_by_student_training() {
    let (train, val, _) = common::tiny_corpus(22);
    let cfg = common::tiny_config();
    let (teacher, _) = train_teacher(&train, &val, &cfg).unwrap();
    let before = encode_checkpoint(&teacher);
    let init = audio_init(&train, Some(&teacher), AudioInit::FromTeacher, &cfg).unwrap();
    let (_, log) = train_student(init, &teacher, None, &train, &val, &cfg).unwrap();
    assert_eq!(encode_checkpoint(&teacher), before);
    assert!(log.epochs.iter().all(|e| e.train_stu > 0.0));
}

#[test]
fn learning_rate_groups_follow_the_plateau_schedule() {
    let (train, val, _) = common::tiny_corpus(23);
    let cfg = TrainConfig {
        epochs: 10,
        lr: 0.05,
        plateau_patience: 0,
        plateau_factor: 0.5,
        ..common::tiny_config()
    };
    let init = audio_init(&train, None, AudioInit::Scratch, &cfg).unwrap();
    let (_, log) = train_audio(init, &train, &val, &cfg).unwrap();
    let trace = lr_trace(&log.val_losses(), cfg.lr, cfg.plateau_factor, cfg.plateau_patience);

    let mut expected = vec![cfg.lr];
    expected.extend_from_slice(&trace[..trace.len() - 1]);
    let heads: Vec<f64> = log.epochs.iter().map(|e| e.lr_head).collect();
    assert_eq!(heads, expected);
    assert!(heads.iter().any(|&lr| lr < cfg.lr), "schedule never reduced: {heads:?}");
    for e in &log.epochs {
        assert_eq!(e.lr_encoder, e.lr_head / cfg.encoder_lr_divisor);
    }

    let (tt, tv) = (train[..16].to_vec(), train[16..].to_vec());
    let (_, tlog) = train_teacher(&tt, &tv, &cfg).unwrap();
    assert!(tlog.epochs.iter().all(|e| e.lr_encoder == e.lr_head), "teacher uses one rate");
}

#[test]
fn selection_follows_the_validation_trace() {
    let (train, val, _) = common::tiny_corpus(24);
    for selection in [Selection::Loss, Selection::Ccc] {
        let cfg = TrainConfig {
            epochs: 6,
            selection,
            ..common::tiny_config()
        };
        let (model, log) = train_teacher(&train, &val, &cfg).unwrap();
        let score = |e: &emodistill::trainer::EpochLog| match selection {
            Selection::Loss => e.val_emo,
            Selection::Ccc => -e.val.mean_ccc(),
        };
        let best = log
            .epochs
            .iter()
            .min_by(|a, b| score(a).total_cmp(&score(b)))
            .unwrap();
        assert_eq!(log.selected_epoch, Some(best.epoch));
        assert_eq!(evaluate(&model, &val).unwrap(), best.val, "{selection:?}");
    }
}

#[test]
fn selecting_on_the_training_split_tracks_training_loss() {
    let (train, _, _) = common::tiny_corpus(25);
    let cfg = TrainConfig {
        epochs: 8,
        ..common::tiny_config()
    };
    let (model, log) = train_teacher(&train, &train, &cfg).unwrap();
    let first = log.epochs[0].val_emo;
    let best = log.epochs[log.selected_epoch.unwrap() - 1].val_emo;
    assert!(best < first, "no improvement on the training split: {first} -> {best}");
    assert_eq!(evaluate(&model, &train).unwrap().emotion_loss(&cfg.alpha), best);
}

#[test]
fn teacher_training_reduces_training_loss() {
    let (train, val, _) = common::tiny_corpus(26);
    let cfg = TrainConfig {
        epochs: 15,
        ..common::tiny_config()
    };
    let (_, log) = train_teacher(&train, &val, &cfg).unwrap();
    let first = log.epochs.first().unwrap().train_emo;
    let last = log.epochs.last().unwrap().train_emo;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn distillation_gradients_need_a_kept_target() {
    let (train, _, _) = common::tiny_corpus(27);
    let cfg = TrainConfig {
        alpha: [0.0; 3],
        ..common::tiny_config()
    };
    let (teacher, _) = train_teacher(&train, &train, &common::tiny_config()).unwrap();
    let init = audio_init(&train, Some(&teacher), AudioInit::FromTeacher, &cfg).unwrap();
    let batch: Vec<&Utterance> = train.iter().take(3).collect();
    let embeddings: HashMap<String, Vec<f32>> =
        batch.iter().map(|u| (u.id.clone(), teacher.embed(u).unwrap())).collect();
    let none: HashMap<String, bool> = batch.iter().map(|u| (u.id.clone(), false)).collect();
    let r = batch_gradients(&init, &batch, Some(&DistillTargets::from_parts(embeddings, none)), &cfg).unwrap();
    assert_eq!(r.stu, 0.0);
    assert!(r.grads.iter().flatten().all(|&g| g == 0.0));
}
