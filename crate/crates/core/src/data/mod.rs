//! Feature files, manifests and synthetic corpora.

mod features;
mod manifest;
mod synth;

pub use features::{
    decode_features, encode_features, read_feature_file, write_feature_file, FeatureSequence, FORMAT_VERSION, MAGIC,
};
pub use manifest::{
    aggregate_annotators, load_manifest, write_manifest, Label, LabelSpec, Manifest, ManifestRecord, Split, Utterance,
};
pub use synth::{generate_corpus, generate_synthetic, SynthCorpus, SynthSpec, SynthUtterance, SPLIT_NAMES};
