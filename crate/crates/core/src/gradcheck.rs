//! Finite-difference verification of every differentiable path: each tape
//! op, both losses, and the full encode → project → predict → loss chain of
//! the teacher and the student.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::autodiff::{grad_check, grad_check_many, Tape, Tensor, Var, DEFAULT_STEP};
use crate::data::{generate_corpus, SynthSpec, Utterance};
use crate::encoder::{EmotionModel, ModelConfig};
use crate::error::Result;
use crate::losses::{emotion_loss, student_loss, total_loss, LossConfig};

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub trials: usize,
    pub step: f64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < TOLERANCE
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.max_rel_error)
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Values bounded away from zero with random sign.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = normal(rng, shape);
    for v in t.data_mut() {
        *v = v.signum() * (v.abs() + 0.5);
    }
    t
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = normal(rng, shape);
    for v in t.data_mut() {
        *v = v.abs() + 0.5;
    }
    t
}

/// Reduces a tensor to a scalar through fixed random weights so that every
/// output element carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = normal(&mut rng, tape.shape(y));
    let w = tape.constant(&w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

type OpCase = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let m = rng.random_range(1..=8usize);
    let n = rng.random_range(1..=8usize);
    let k = rng.random_range(1..=8usize);
    let start = rng.random_range(0..m);
    let len = rng.random_range(1..=m - start);
    let s: f64 = StandardNormal.sample(rng);
    let unary = |f: fn(&mut Tape, Var) -> Result<Var>| -> Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>> {
        Box::new(move |t, v| f(t, v[0]))
    };
    let binary = |f: fn(&mut Tape, Var, Var) -> Result<Var>| -> Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>> {
        Box::new(move |t, v| f(t, v[0], v[1]))
    };
    vec![
        ("matmul", vec![normal(rng, &[m, k]), normal(rng, &[k, n])], binary(Tape::matmul)),
        ("add", vec![normal(rng, &[m, n]), normal(rng, &[m, n])], binary(Tape::add)),
        ("add_row_broadcast", vec![normal(rng, &[m, n]), normal(rng, &[n])], binary(Tape::add)),
        ("sub", vec![normal(rng, &[m, n]), normal(rng, &[1, n])], binary(Tape::sub)),
        ("mul", vec![normal(rng, &[m, n]), normal(rng, &[m, n])], binary(Tape::mul)),
        ("div", vec![normal(rng, &[m, n]), away_from_zero(rng, &[m, n])], binary(Tape::div)),
        ("tanh", vec![normal(rng, &[m, n])], unary(Tape::tanh)),
        ("sigmoid", vec![normal(rng, &[m, n])], unary(Tape::sigmoid)),
        ("square", vec![normal(rng, &[m, n])], unary(Tape::square)),
        ("sqrt", vec![positive(rng, &[m, n])], unary(Tape::sqrt)),
        ("scale", vec![normal(rng, &[m, n])], Box::new(move |t, v| t.scale(v[0], s))),
        ("add_scalar", vec![normal(rng, &[m, n])], Box::new(move |t, v| t.add_scalar(v[0], s))),
        (
            "concat_rows",
            vec![normal(rng, &[m, n]), normal(rng, &[k, n])],
            Box::new(|t, v| t.concat(v, 0)),
        ),
        (
            "concat_cols",
            vec![normal(rng, &[m, n]), normal(rng, &[m, k])],
            Box::new(|t, v| t.concat(v, 1)),
        ),
        ("rows", vec![normal(rng, &[m, n])], Box::new(move |t, v| t.rows(v[0], start, len))),
        ("sum", vec![normal(rng, &[m, n])], unary(Tape::sum)),
        ("mean", vec![normal(rng, &[m, n])], unary(Tape::mean)),
        ("sum_axis0", vec![normal(rng, &[m, n])], Box::new(|t, v| t.sum_axis(v[0], 0))),
        ("sum_axis1", vec![normal(rng, &[m, n])], Box::new(|t, v| t.sum_axis(v[0], 1))),
        ("mean_axis0", vec![normal(rng, &[m, n])], Box::new(|t, v| t.mean_axis(v[0], 0))),
        ("mean_axis1", vec![normal(rng, &[m, n])], Box::new(|t, v| t.mean_axis(v[0], 1))),
        ("euclidean_norm", vec![normal(rng, &[m, n])], unary(Tape::euclidean_norm)),
    ]
}

fn tiny_batch(seed: u64) -> Result<Vec<Utterance>> {
    let spec = SynthSpec {
        train: 4,
        val: 0,
        test: 0,
        audio_dim: 3,
        text_dim: 2,
        min_frames: 2,
        max_frames: 4,
        min_tokens: 1,
        max_tokens: 3,
        seed,
        ..SynthSpec::valence_in_text()
    };
    Ok(generate_corpus(&spec)?.utterances("train"))
}

fn stack_rows(tape: &mut Tape, rows: &[Var]) -> Result<Var> {
    tape.concat(rows, 0)
}

fn labels(tape: &mut Tape, batch: &[Utterance]) -> Result<Var> {
    let data = batch.iter().flat_map(|u| u.label).collect();
    Ok(tape.constant(&Tensor::new([batch.len(), 3], data)?))
}

fn params(model: &EmotionModel) -> Vec<Tensor> {
    model.named_parameters().into_iter().map(|(_, _, t)| t.clone()).collect()
}

/// Teacher objective: multimodal forward over a batch, CCC loss.
fn teacher_check(seed: u64, cfg: &LossConfig) -> Result<f64> {
    let batch = tiny_batch(seed)?;
    let model = EmotionModel::new(tiny_config(), seed)?;
    grad_check_many(
        |tape, vars| {
            let bound = model.bind_vars(tape, vars)?;
            let preds = batch
                .iter()
                .map(|u| bound.forward(tape, u).map(|o| o.prediction))
                .collect::<Result<Vec<_>>>()?;
            let p = stack_rows(tape, &preds)?;
            let y = labels(tape, &batch)?;
            emotion_loss(tape, p, y, cfg)
        },
        &params(&model),
        DEFAULT_STEP,
    )
}

/// Student objective: audio-only forward, CCC loss plus the distillation
/// term against fixed teacher embeddings on the first three utterances.
fn student_check(seed: u64, cfg: &LossConfig) -> Result<f64> {
    let batch = tiny_batch(seed)?;
    let teacher = EmotionModel::new(tiny_config(), seed ^ 0x5eed)?;
    let student = EmotionModel::student_from_teacher(&teacher, seed)?;
    let targets: Vec<Vec<f32>> = batch.iter().map(|u| teacher.embed(u)).collect::<Result<_>>()?;
    grad_check_many(
        |tape, vars| {
            let bound = student.bind_vars(tape, vars)?;
            let mut preds = Vec::new();
            let mut embs = Vec::new();
            for u in &batch {
                let o = bound.forward(tape, u)?;
                preds.push(o.prediction);
                embs.push(o.embedding);
            }
            let p = stack_rows(tape, &preds)?;
            let y = labels(tape, &batch)?;
            let emo = emotion_loss(tape, p, y, cfg)?;
            let s = stack_rows(tape, &embs[..3])?;
            let t_rows: Vec<Var> = targets[..3]
                .iter()
                .map(|e| tape.constant(&Tensor::row(e.clone())))
                .collect();
            let t = stack_rows(tape, &t_rows)?;
            let stu = student_loss(tape, t, s)?;
            total_loss(tape, emo, stu, cfg)
        },
        &params(&student),
        DEFAULT_STEP,
    )
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 3,
        num_layers: 2,
        embed_dim: 3,
        ..ModelConfig::multimodal(3, 2)
    }
}

/// Runs every check `trials` times with seeds derived from `seed`.
pub fn run_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let cfg = LossConfig::default();
    let mut checks: Vec<CheckResult> = Vec::new();
    let mut record = |name: &str, err: f64| match checks.iter_mut().find(|c| c.name == name) {
        Some(c) => c.max_rel_error = c.max_rel_error.max(err),
        None => checks.push(CheckResult {
            name: name.to_string(),
            max_rel_error: err,
        }),
    };
    for trial in 0..trials as u64 {
        let trial_seed = seed.wrapping_mul(1_000_003).wrapping_add(trial);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        for (i, (name, inputs, f)) in op_cases(&mut rng).into_iter().enumerate() {
            let w_seed = trial_seed ^ ((i as u64) << 32);
            let err = grad_check_many(
                |tape, vars| {
                    let y = f(tape, vars)?;
                    weighted_sum(tape, y, w_seed)
                },
                &inputs,
                DEFAULT_STEP,
            )?;
            record(&format!("op.{name}"), err);
        }

        let n = rng.random_range(2..=16usize);
        let label = normal(&mut rng, &[n, 3]);
        let pred = normal(&mut rng, &[n, 3]);
        let err = grad_check(
            |tape, p| {
                let y = tape.constant(&label);
                emotion_loss(tape, p, y, &cfg)
            },
            &pred,
            DEFAULT_STEP,
        )?;
        record("emotion_loss", err);

        let m = rng.random_range(1..=8usize);
        let e = rng.random_range(1..=8usize);
        let teacher = normal(&mut rng, &[m, e]);
        let student = normal(&mut rng, &[m, e]);
        let err = grad_check(
            |tape, s| {
                let t = tape.constant(&teacher);
                student_loss(tape, t, s)
            },
            &student,
            DEFAULT_STEP,
        )?;
        record("student_loss", err);

        record("teacher_chain", teacher_check(trial_seed, &cfg)?);
        record("student_chain", student_check(trial_seed, &cfg)?);
    }
    Ok(SuiteReport {
        trials,
        step: DEFAULT_STEP,
        checks,
    })
}
