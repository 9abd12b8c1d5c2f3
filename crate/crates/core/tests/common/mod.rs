#![allow(dead_code)]

use emodistill::data::{generate_corpus, SynthSpec, Utterance};
use emodistill::trainer::TrainConfig;

/// Tiny corpus for fast training-loop checks.
pub fn tiny_corpus(seed: u64) -> (Vec<Utterance>, Vec<Utterance>, Vec<Utterance>) {
    let spec = SynthSpec {
        train: 24,
        val: 10,
        test: 10,
        audio_dim: 4,
        text_dim: 3,
        min_frames: 2,
        max_frames: 6,
        min_tokens: 2,
        max_tokens: 4,
        seed,
        ..SynthSpec::valence_in_text()
    };
    let c = generate_corpus(&spec).unwrap();
    (c.utterances("train"), c.utterances("val"), c.utterances("test"))
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: 3,
        lr: 5e-3,
        hidden_dim: 5,
        num_layers: 2,
        embed_dim: 4,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Least squares via the normal equations and Gauss-Jordan elimination with
/// partial pivoting. `x` is row-major `[n, k]`; returns `k` coefficients.
pub fn lstsq(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &t) in x.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * t;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let src = a[col].clone();
                for (v, s) in a[r].iter_mut().zip(src) {
                    *v -= f * s;
                }
            }
        }
    }
    a.iter().map(|row| row[k]).collect()
}

/// Textbook CCC in f64, written independently of the library.
pub fn ccc_oracle(p: &[f64], y: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vp = p.iter().map(|v| (v - mp).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cov = p.iter().zip(y).map(|(a, b)| (a - mp) * (b - my)).sum::<f64>() / n;
    2.0 * cov / (vp + vy + (mp - my).powi(2))
}
