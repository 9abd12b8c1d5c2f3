//! Synthetic corpora with controllable cross-modal information.
//!
//! Each utterance draws a latent emotion `z ∈ [-1, 1]³`. Labels are the mean
//! of noisy, clipped annotator ratings of `z`. Every audio frame (text token)
//! carries `Σ_j sqrt(route_j) · z_j · d_j` along fixed random unit directions
//! `d_j`, plus isotropic Gaussian noise. Audio may additionally carry a
//! sign-alternating component `(-1)^t · sqrt(mod_j) · z_j · m_j`; sequences are
//! then forced to an even length so that the component cancels in the frame
//! mean and is invisible to linear probes on pooled features.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{write_feature_file, FeatureSequence};
use super::manifest::{aggregate_annotators, write_manifest, LabelSpec, Manifest, ManifestRecord, Utterance};
use crate::error::{Error, Result};

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Share of each label dimension's signal written linearly into audio frames.
    pub audio_routing: [f32; 3],
    /// Share written linearly into text tokens.
    pub text_routing: [f32; 3],
    /// Share written into audio as a sign-alternating, zero-mean pattern.
    pub audio_modulated: [f32; 3],
    pub noise: f32,
    pub annotators: usize,
    pub annotator_noise: f32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::valence_in_text()
    }
}

impl SynthSpec {
    /// Activation and dominance carried linearly by audio, valence linearly
    /// by text only.
    pub fn valence_in_text() -> Self {
        Self {
            train: 500,
            val: 100,
            test: 100,
            audio_dim: 16,
            text_dim: 16,
            min_frames: 8,
            max_frames: 16,
            min_tokens: 4,
            max_tokens: 10,
            audio_routing: [1.0, 0.0, 1.0],
            text_routing: [0.0, 1.0, 0.0],
            audio_modulated: [0.0, 0.15, 0.0],
            noise: 0.3,
            annotators: 3,
            annotator_noise: 0.7,
            seed: 7,
        }
    }

    /// Every dimension routed to audio; no text features.
    pub fn all_audio() -> Self {
        Self {
            audio_routing: [1.0; 3],
            text_routing: [0.0; 3],
            audio_modulated: [0.0; 3],
            text_dim: 0,
            ..Self::valence_in_text()
        }
    }

    pub fn has_text(&self) -> bool {
        self.text_dim > 0
    }

    fn modulated(&self) -> bool {
        self.audio_modulated.iter().any(|&m| m > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = self
            .audio_routing
            .iter()
            .chain(&self.text_routing)
            .chain(&self.audio_modulated);
        if fractions.into_iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("routing fractions must lie in [0, 1]".into()));
        }
        if self.audio_dim == 0 {
            return Err(Error::Config("audio_dim must be at least 1".into()));
        }
        if self.text_dim == 0 && self.text_routing.iter().any(|&f| f > 0.0) {
            return Err(Error::Config("text routing requires text_dim >= 1".into()));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return Err(Error::Config("frame range must satisfy 1 <= min_frames <= max_frames".into()));
        }
        if self.modulated() && self.max_frames < 2 {
            return Err(Error::Config("modulated audio needs max_frames >= 2".into()));
        }
        if self.has_text() && (self.min_tokens == 0 || self.min_tokens > self.max_tokens) {
            return Err(Error::Config("token range must satisfy 1 <= min_tokens <= max_tokens".into()));
        }
        if self.annotators == 0 {
            return Err(Error::Config("annotators must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.annotator_noise >= 0.0) {
            return Err(Error::Config("noise levels must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A generated utterance before it is written to disk.
#[derive(Clone, Debug)]
pub struct SynthUtterance {
    pub utterance: Utterance,
    pub ratings: Vec<[f32; 3]>,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub train: Vec<SynthUtterance>,
    pub val: Vec<SynthUtterance>,
    pub test: Vec<SynthUtterance>,
}

impl SynthCorpus {
    pub fn split(&self, name: &str) -> Option<&[SynthUtterance]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn utterances(&self, name: &str) -> Vec<Utterance> {
        self.split(name)
            .map(|s| s.iter().map(|u| u.utterance.clone()).collect())
            .unwrap_or_default()
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

struct Directions {
    audio: Vec<Vec<f32>>,
    modulated: Vec<Vec<f32>>,
    text: Vec<Vec<f32>>,
}

fn sequence(
    rng: &mut ChaCha8Rng,
    len: usize,
    dim: usize,
    noise: f32,
    mut signal: impl FnMut(usize, &mut [f32]),
) -> FeatureSequence {
    let mut values = vec![0.0f32; len * dim];
    for t in 0..len {
        let frame = &mut values[t * dim..(t + 1) * dim];
        signal(t, frame);
        for v in frame.iter_mut() {
            let e: f32 = StandardNormal.sample(rng);
            *v += noise * e;
        }
    }
    FeatureSequence::new(len, dim, values).expect("finite synthetic features")
}

fn add_scaled(frame: &mut [f32], dir: &[f32], scale: f32) {
    for (f, d) in frame.iter_mut().zip(dir) {
        *f += scale * d;
    }
}

fn utterance(spec: &SynthSpec, dirs: &Directions, rng: &mut ChaCha8Rng, id: String) -> SynthUtterance {
    let z: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.0f32..=1.0));
    let ratings: Vec<[f32; 3]> = (0..spec.annotators)
        .map(|_| {
            z.map(|zj| {
                let e: f32 = StandardNormal.sample(rng);
                (zj + spec.annotator_noise * e).clamp(-1.0, 1.0)
            })
        })
        .collect();
    let label = aggregate_annotators(&ratings).expect("at least one annotator");

    let mut frames = rng.random_range(spec.min_frames..=spec.max_frames);
    if spec.modulated() && frames % 2 == 1 {
        frames = if frames < spec.max_frames { frames + 1 } else { frames - 1 };
    }
    let audio = sequence(rng, frames, spec.audio_dim, spec.noise, |t, frame| {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..3 {
            add_scaled(frame, &dirs.audio[j], spec.audio_routing[j].sqrt() * z[j]);
            add_scaled(frame, &dirs.modulated[j], sign * spec.audio_modulated[j].sqrt() * z[j]);
        }
    });
    let text = spec.has_text().then(|| {
        let tokens = rng.random_range(spec.min_tokens..=spec.max_tokens);
        sequence(rng, tokens, spec.text_dim, spec.noise, |_, frame| {
            for j in 0..3 {
                add_scaled(frame, &dirs.text[j], spec.text_routing[j].sqrt() * z[j]);
            }
        })
    });
    SynthUtterance {
        utterance: Utterance {
            id,
            audio,
            text,
            label,
        },
        ratings,
    }
}

/// Generates a corpus in memory. Pure function of `spec`.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dirs = Directions {
        audio: (0..3).map(|_| unit_direction(&mut rng, spec.audio_dim)).collect(),
        modulated: (0..3).map(|_| unit_direction(&mut rng, spec.audio_dim)).collect(),
        text: (0..3)
            .map(|_| unit_direction(&mut rng, spec.text_dim.max(1)))
            .collect(),
    };
    let mut make = |name: &str, count: usize| -> Vec<SynthUtterance> {
        (0..count)
            .map(|i| utterance(spec, &dirs, &mut rng, format!("{name}_{i:05}")))
            .collect()
    };
    let train = make("train", spec.train);
    let val = make("val", spec.val);
    let test = make("test", spec.test);
    Ok(SynthCorpus { train, val, test })
}

/// Writes `train.json`, `val.json`, `test.json` and a `features/` directory
/// under `dir`. Returns the manifest paths in split order.
pub fn generate_synthetic(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let corpus = generate_corpus(spec)?;
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;

    let mut paths = Vec::new();
    for name in SPLIT_NAMES {
        let mut records = Vec::new();
        for su in corpus.split(name).expect("known split") {
            let u = &su.utterance;
            let audio = PathBuf::from("features").join(format!("{}.audio.emof", u.id));
            write_feature_file(dir.join(&audio), &u.audio)?;
            let text = match &u.text {
                Some(t) => {
                    let p = PathBuf::from("features").join(format!("{}.text.emof", u.id));
                    write_feature_file(dir.join(&p), t)?;
                    Some(p)
                }
                None => None,
            };
            records.push(ManifestRecord {
                id: u.id.clone(),
                audio,
                text,
                labels: LabelSpec::Annotators {
                    annotators: su.ratings.clone(),
                },
            });
        }
        let path = dir.join(format!("{name}.json"));
        write_manifest(
            &path,
            &Manifest {
                split: name.to_string(),
                utterances: records,
            },
        )?;
        paths.push(path);
    }
    Ok(paths)
}
