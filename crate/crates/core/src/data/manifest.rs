use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::{read_feature_file, FeatureSequence};
use crate::error::{Error, Result};

/// Label vector order: activation, valence, dominance.
pub type Label = [f32; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio: FeatureSequence,
    pub text: Option<FeatureSequence>,
    pub label: Label,
}

/// Loaded manifest.
#[derive(Clone, Debug)]
pub struct Split {
    pub name: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub split: String,
    pub utterances: Vec<ManifestRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub audio: PathBuf,
    #[serde(default)]
    pub text: Option<PathBuf>,
    pub labels: LabelSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum LabelSpec {
    Triple(Label),
    Annotators { annotators: Vec<Label> },
}

impl LabelSpec {
    /// Component-wise mean over annotators; a plain triple passes through.
    pub fn resolve(&self) -> Result<Label> {
        match self {
            LabelSpec::Triple(l) => Ok(*l),
            LabelSpec::Annotators { annotators } => aggregate_annotators(annotators),
        }
    }
}

pub fn aggregate_annotators(ratings: &[Label]) -> Result<Label> {
    if ratings.is_empty() {
        return Err(Error::data("empty annotator list"));
    }
    let mut acc = [0.0f64; 3];
    for r in ratings {
        for (a, &v) in acc.iter_mut().zip(r) {
            *a += v as f64;
        }
    }
    let n = ratings.len() as f64;
    Ok(acc.map(|a| (a / n) as f32))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Split> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: invalid manifest: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut seen = HashSet::new();
    let mut utterances = Vec::with_capacity(manifest.utterances.len());
    for rec in &manifest.utterances {
        if !seen.insert(rec.id.as_str()) {
            return Err(Error::data(format!("{}: duplicate utterance id {:?}", path.display(), rec.id)));
        }
        let label = rec
            .labels
            .resolve()
            .map_err(|e| Error::data(format!("record {:?}: {e}", rec.id)))?;
        if label.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("record {:?}: non-finite label", rec.id)));
        }
        let load = |p: &Path| -> Result<FeatureSequence> {
            read_feature_file(base.join(p)).map_err(|e| Error::data(format!("record {:?}: {e}", rec.id)))
        };
        let audio = load(&rec.audio)?;
        let text = rec.text.as_deref().map(load).transpose()?;
        utterances.push(Utterance {
            id: rec.id.clone(),
            audio,
            text,
            label,
        });
    }
    check_dims(&utterances)?;
    Ok(Split {
        name: manifest.split,
        utterances,
    })
}

/// Every utterance in a corpus shares one width per modality.
fn check_dims(utts: &[Utterance]) -> Result<()> {
    let Some(first) = utts.first() else { return Ok(()) };
    let audio_dim = first.audio.dim();
    let text_dim = utts.iter().find_map(|u| u.text.as_ref().map(|t| t.dim()));
    for u in utts {
        if u.audio.dim() != audio_dim {
            return Err(Error::data(format!(
                "record {:?}: audio dim {} differs from {audio_dim}",
                u.id,
                u.audio.dim()
            )));
        }
        if let (Some(t), Some(d)) = (&u.text, text_dim) {
            if t.dim() != d {
                return Err(Error::data(format!("record {:?}: text dim {} differs from {d}", u.id, t.dim())));
            }
        }
    }
    Ok(())
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_two_annotators() {
        assert_eq!(aggregate_annotators(&[[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]]).unwrap(), [2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_annotator_passes_through() {
        let x = [0.25, -0.5, 0.75];
        assert_eq!(aggregate_annotators(&[x]).unwrap(), x);
    }

    #[test]
    fn three_annotators_match_hand_average() {
        let r = [[0.1, -0.4, 0.9], [0.3, 0.2, -0.6], [-0.7, 0.5, 0.3]];
        let got = aggregate_annotators(&r).unwrap();
        let want = [-0.1f32, 0.1, 0.2];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_annotators_rejected() {
        assert!(aggregate_annotators(&[]).is_err());
    }

    #[test]
    fn label_spec_parses_both_forms() {
        let a: LabelSpec = serde_json::from_str("[0.1, 0.2, 0.3]").unwrap();
        assert_eq!(a, LabelSpec::Triple([0.1, 0.2, 0.3]));
        let b: LabelSpec = serde_json::from_str(r#"{"annotators": [[1,2,3]]}"#).unwrap();
        assert_eq!(b.resolve().unwrap(), [1.0, 2.0, 3.0]);
    }
}
