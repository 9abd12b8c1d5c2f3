//! Teacher → residual filter → student on the synthetic valence-in-text
//! corpus, entirely in memory. Prints test-split CCC (A, V, D) for the
//! teacher, the audio-only baseline, the masked student and an unmasked
//! student.
//!
//! Usage: `cargo run --release --example pipeline [train_seed] [corpus_seed]`

use std::time::Instant;

use emodistill::data::{generate_corpus, SynthSpec};
use emodistill::filter::{compute_mask, filter_stats, fit_residual_model};
use emodistill::trainer::{
    audio_init, evaluate, predict_all, train_audio, train_student, train_teacher, AudioInit, TrainConfig,
};

fn main() -> emodistill::Result<()> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer seed"))
        .collect();
    let cfg = TrainConfig {
        epochs: 50,
        lr: 2e-3,
        hidden_dim: 32,
        num_layers: 1,
        embed_dim: 32,
        seed: args.first().copied().unwrap_or(11),
        ..TrainConfig::default()
    };
    let spec = SynthSpec {
        seed: args.get(1).copied().unwrap_or(7),
        ..SynthSpec::valence_in_text()
    };
    let corpus = generate_corpus(&spec)?;
    let (train, val, test) = (corpus.utterances("train"), corpus.utterances("val"), corpus.utterances("test"));
    let show = |name: &str, ccc: [f64; 3], t0: Instant| {
        println!("{name:<9} A={:.3} V={:.3} D={:.3}  ({:.1?})", ccc[0], ccc[1], ccc[2], t0.elapsed());
    };

    let t0 = Instant::now();
    let (teacher, _) = train_teacher(&train, &val, &cfg)?;
    show("teacher", evaluate(&teacher, &test)?.ccc(), t0);

    let t0 = Instant::now();
    let init = audio_init(&train, Some(&teacher), AudioInit::FromTeacher, &cfg)?;
    let (baseline, _) = train_audio(init.clone(), &train, &val, &cfg)?;
    show("baseline", evaluate(&baseline, &test)?.ccc(), t0);

    let preds = predict_all(&teacher, &train)?;
    let labels: Vec<_> = train.iter().map(|u| u.label).collect();
    let ids: Vec<String> = train.iter().map(|u| u.id.clone()).collect();
    let rm = fit_residual_model(&preds, &labels)?;
    let mask = compute_mask(&rm, &ids, &preds, &labels, cfg.tau)?;
    let stats = filter_stats(&rm, &mask)?;
    println!(
        "filter    kept {}/{} ({:.1}% discarded), triggers {:?}",
        stats.kept,
        stats.total,
        100.0 * stats.fraction,
        stats.triggers
    );

    let t0 = Instant::now();
    let (student, _) = train_student(init.clone(), &teacher, Some(&mask), &train, &val, &cfg)?;
    show("student", evaluate(&student, &test)?.ccc(), t0);

    let t0 = Instant::now();
    let (plain, _) = train_student(init, &teacher, None, &train, &val, &cfg)?;
    show("unmasked", evaluate(&plain, &test)?.ccc(), t0);
    Ok(())
}
