mod common;

use emodistill::data::{generate_corpus, generate_synthetic, load_manifest, SynthSpec, Utterance};

fn features(u: &Utterance) -> Vec<f64> {
    let mut x = u.audio.mean_frame();
    x.push(1.0);
    x
}

/// Test-split CCC of a least-squares probe on mean audio frames, per dimension.
fn mean_frame_probe(spec: &SynthSpec) -> [f64; 3] {
    let corpus = generate_corpus(spec).unwrap();
    let (train, test) = (corpus.utterances("train"), corpus.utterances("test"));
    let x: Vec<Vec<f64>> = train.iter().map(features).collect();
    std::array::from_fn(|j| {
        let y: Vec<f64> = train.iter().map(|u| u.label[j] as f64).collect();
        let w = common::lstsq(&x, &y);
        let pred: Vec<f64> = test
            .iter()
            .map(|u| features(u).iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        let truth: Vec<f64> = test.iter().map(|u| u.label[j] as f64).collect();
        common::ccc_oracle(&pred, &truth)
    })
}

#[test]
fn noiseless_all_audio_is_linearly_recoverable() {
    let spec = SynthSpec {
        noise: 0.0,
        annotator_noise: 0.0,
        ..SynthSpec::all_audio()
    };
    let ccc = mean_frame_probe(&spec);
    assert!(ccc.iter().all(|&c| c > 0.99), "{ccc:?}");
}

#[test]
fn valence_is_invisible_to_a_linear_audio_probe() {
    let ccc = mean_frame_probe(&SynthSpec::valence_in_text());
    assert!(ccc[1] < 0.1, "valence probe CCC {}", ccc[1]);
    assert!(ccc[0] > 0.5 && ccc[2] > 0.5, "{ccc:?}");
}

#[test]
fn generation_is_byte_identical_across_runs() {
    let spec = SynthSpec {
        train: 12,
        val: 4,
        test: 4,
        ..SynthSpec::valence_in_text()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = generate_synthetic(&spec, a.path()).unwrap();
    generate_synthetic(&spec, b.path()).unwrap();
    assert_eq!(pa.len(), 3);

    let mut files: Vec<_> = walk(a.path());
    files.sort();
    assert!(files.len() > 3);
    for rel in files {
        let x = std::fs::read(a.path().join(&rel)).unwrap();
        let y = std::fs::read(b.path().join(&rel)).unwrap();
        assert_eq!(x, y, "{} differs", rel.display());
    }
}

#[test]
fn written_corpus_loads_back_to_the_generated_utterances() {
    let spec = SynthSpec {
        train: 6,
        val: 3,
        test: 3,
        ..SynthSpec::valence_in_text()
    };
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic(&spec, dir.path()).unwrap();
    let corpus = generate_corpus(&spec).unwrap();
    for name in ["train", "val", "test"] {
        let split = load_manifest(dir.path().join(format!("{name}.json"))).unwrap();
        assert_eq!(split.utterances, corpus.utterances(name), "{name}");
    }
}

#[test]
fn different_seeds_give_different_corpora() {
    let base = SynthSpec {
        train: 4,
        val: 0,
        test: 0,
        ..SynthSpec::valence_in_text()
    };
    let a = generate_corpus(&base).unwrap().utterances("train");
    let b = generate_corpus(&SynthSpec { seed: base.seed + 1, ..base }).unwrap().utterances("train");
    assert_ne!(a, b);
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}
