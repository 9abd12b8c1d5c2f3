use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gru::{encode_sequence, BoundGru, GruStack, GATE_NAMES};
use super::linear::{fuse_and_project, predict, project_audio, BoundLinear, Linear};
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{Label, Utterance};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Multimodal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modality: Modality,
    pub audio_dim: usize,
    /// Zero for audio-only models.
    pub text_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub embed_dim: usize,
}

impl ModelConfig {
    pub fn multimodal(audio_dim: usize, text_dim: usize) -> Self {
        Self {
            modality: Modality::Multimodal,
            audio_dim,
            text_dim,
            hidden_dim: 128,
            num_layers: 2,
            embed_dim: 128,
        }
    }

    pub fn audio(audio_dim: usize) -> Self {
        Self {
            modality: Modality::Audio,
            text_dim: 0,
            ..Self::multimodal(audio_dim, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.audio_dim, self.hidden_dim, self.num_layers, self.embed_dim];
        if sizes.contains(&0) {
            return Err(Error::Config(format!("model sizes must be positive: {self:?}")));
        }
        if self.modality == Modality::Multimodal && self.text_dim == 0 {
            return Err(Error::Config("multimodal model needs text_dim >= 1".into()));
        }
        Ok(())
    }

    fn projection_in(&self) -> usize {
        match self.modality {
            Modality::Audio => self.hidden_dim,
            Modality::Multimodal => 2 * self.hidden_dim,
        }
    }
}

/// Which learning-rate group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    /// Sequence encoders.
    Encoder,
    /// Projection and prediction head.
    Head,
}

/// Audio-only or multimodal emotion regressor.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionModel {
    config: ModelConfig,
    pub audio: GruStack,
    pub text: Option<GruStack>,
    pub projection: Linear,
    pub head: Linear,
}

/// Per-utterance outputs on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub embedding: Var,
    pub prediction: Var,
}

impl EmotionModel {
    /// Randomly initialised model; deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let audio = GruStack::new(config.audio_dim, config.hidden_dim, config.num_layers, &mut rng)?;
        let text = match config.modality {
            Modality::Audio => None,
            Modality::Multimodal => Some(GruStack::new(
                config.text_dim,
                config.hidden_dim,
                config.num_layers,
                &mut rng,
            )?),
        };
        let projection = Linear::new(config.projection_in(), config.embed_dim, &mut rng);
        let head = Linear::new(config.embed_dim, 3, &mut rng);
        Ok(Self {
            config,
            audio,
            text,
            projection,
            head,
        })
    }

    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let audio = GruStack::zeros(config.audio_dim, config.hidden_dim, config.num_layers)?;
        let text = match config.modality {
            Modality::Audio => None,
            Modality::Multimodal => Some(GruStack::zeros(config.text_dim, config.hidden_dim, config.num_layers)?),
        };
        Ok(Self {
            projection: Linear::zeros(config.projection_in(), config.embed_dim),
            head: Linear::zeros(config.embed_dim, 3),
            config,
            audio,
            text,
        })
    }

    /// Audio-only student: audio encoder and head copied from the teacher,
    /// fresh audio projection drawn from `seed`.
    pub fn student_from_teacher(teacher: &EmotionModel, seed: u64) -> Result<Self> {
        let config = ModelConfig {
            modality: Modality::Audio,
            text_dim: 0,
            ..teacher.config.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            audio: teacher.audio.clone(),
            text: None,
            projection: Linear::new(config.hidden_dim, config.embed_dim, &mut rng),
            head: teacher.head.clone(),
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn modality(&self) -> Modality {
        self.config.modality
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Parameters with stable names, in binding order.
    pub fn named_parameters(&self) -> Vec<(String, ParamGroup, &Tensor)> {
        let mut out = Vec::new();
        let stacks = std::iter::once(("audio", &self.audio)).chain(self.text.as_ref().map(|t| ("text", t)));
        for (prefix, stack) in stacks {
            for (k, layer) in stack.layers.iter().enumerate() {
                for (name, t) in GATE_NAMES.iter().zip(layer.params()) {
                    out.push((format!("{prefix}.{k}.{name}"), ParamGroup::Encoder, t));
                }
            }
        }
        out.push(("projection.weight".into(), ParamGroup::Head, &self.projection.weight));
        out.push(("projection.bias".into(), ParamGroup::Head, &self.projection.bias));
        out.push(("head.weight".into(), ParamGroup::Head, &self.head.weight));
        out.push(("head.bias".into(), ParamGroup::Head, &self.head.bias));
        out
    }

    /// Mutable parameters in [`named_parameters`](Self::named_parameters) order.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in self.audio.layers.iter_mut() {
            out.extend(layer.params_mut());
        }
        if let Some(text) = self.text.as_mut() {
            for layer in text.layers.iter_mut() {
                out.extend(layer.params_mut());
            }
        }
        out.push(&mut self.projection.weight);
        out.push(&mut self.projection.bias);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        BoundModel {
            modality: self.config.modality,
            audio: self.audio.bind(tape, trainable),
            text: self.text.as_ref().map(|t| t.bind(tape, trainable)),
            projection: self.projection.bind(tape, trainable),
            head: self.head.bind(tape, trainable),
        }
    }

    /// Binds onto caller-owned vars, one per parameter in
    /// [`named_parameters`](Self::named_parameters) order. Shapes are checked.
    pub fn bind_vars(&self, tape: &Tape, vars: &[Var]) -> Result<BoundModel> {
        let params = self.named_parameters();
        if vars.len() != params.len() {
            return Err(Error::invalid(format!("expected {} vars, got {}", params.len(), vars.len())));
        }
        for ((name, _, t), v) in params.iter().zip(vars) {
            if tape.shape(*v) != t.shape() {
                return Err(Error::invalid(format!(
                    "var for {name} has shape {:?}, expected {:?}",
                    tape.shape(*v),
                    t.shape()
                )));
            }
        }
        let per_stack = self.audio.num_layers() * GATE_NAMES.len();
        let audio = self.audio.bind_vars(&vars[..per_stack]);
        let mut rest = &vars[per_stack..];
        let text = self.text.as_ref().map(|t| {
            let bound = t.bind_vars(&rest[..per_stack]);
            rest = &rest[per_stack..];
            bound
        });
        Ok(BoundModel {
            modality: self.config.modality,
            audio,
            text,
            projection: BoundLinear {
                weight: rest[0],
                bias: rest[1],
            },
            head: BoundLinear {
                weight: rest[2],
                bias: rest[3],
            },
        })
    }

    /// Embedding and prediction for one utterance, without gradients.
    pub fn forward(&self, utt: &Utterance) -> Result<(Vec<f32>, Label)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let out = bound.forward(&mut tape, utt)?;
        let e = tape.value(out.embedding).into_data();
        let p = tape.value(out.prediction).into_data();
        Ok((e, [p[0], p[1], p[2]]))
    }

    pub fn predict(&self, utt: &Utterance) -> Result<Label> {
        self.forward(utt).map(|(_, p)| p)
    }

    pub fn embed(&self, utt: &Utterance) -> Result<Vec<f32>> {
        self.forward(utt).map(|(e, _)| e)
    }
}

/// An [`EmotionModel`] registered on a tape.
#[derive(Clone, Debug)]
pub struct BoundModel {
    modality: Modality,
    audio: BoundGru,
    text: Option<BoundGru>,
    projection: BoundLinear,
    head: BoundLinear,
}

impl BoundModel {
    /// Vars in [`EmotionModel::named_parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.audio.vars();
        if let Some(t) = &self.text {
            out.extend(t.vars());
        }
        out.extend([self.projection.weight, self.projection.bias, self.head.weight, self.head.bias]);
        out
    }

    /// encode → (fuse) → project → predict.
    pub fn forward(&self, tape: &mut Tape, utt: &Utterance) -> Result<ForwardVars> {
        let audio = tape.constant(&utt.audio.to_tensor());
        let u_a = encode_sequence(tape, &self.audio, audio)?;
        let embedding = match (self.modality, &self.text) {
            (Modality::Multimodal, Some(text_gru)) => {
                let seq = utt
                    .text
                    .as_ref()
                    .ok_or_else(|| Error::data(format!("utterance {:?} has no text features", utt.id)))?;
                let text = tape.constant(&seq.to_tensor());
                let u_t = encode_sequence(tape, text_gru, text)?;
                fuse_and_project(tape, &self.projection, u_a, u_t)?
            }
            _ => project_audio(tape, &self.projection, u_a)?,
        };
        let prediction = predict(tape, &self.head, embedding)?;
        Ok(ForwardVars { embedding, prediction })
    }
}
