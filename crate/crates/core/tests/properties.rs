mod common;

use proptest::prelude::*;

use emodistill::data::{aggregate_annotators, decode_features, encode_features, FeatureSequence, Label};
use emodistill::encoder::{decode_checkpoint, encode_checkpoint, EmotionModel, ModelConfig};
use emodistill::filter::{compute_mask, fit_residual_model};
use emodistill::losses::ccc_stats;

fn label() -> impl Strategy<Value = Label> {
    prop::array::uniform3(-1.0f32..=1.0)
}

fn sequence() -> impl Strategy<Value = FeatureSequence> {
    (1usize..20, 1usize..12).prop_flat_map(|(t, d)| {
        prop::collection::vec(-1e3f32..1e3, t * d).prop_map(move |v| FeatureSequence::new(t, d, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_files_round_trip_bit_exactly(seq in sequence()) {
        let back = decode_features(&encode_features(&seq), "mem".as_ref()).unwrap();
        prop_assert_eq!((back.num_frames(), back.dim()), (seq.num_frames(), seq.dim()));
        for (a, b) in back.values().iter().zip(seq.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn annotator_order_does_not_matter(
        ratings in prop::collection::vec(label(), 1..8),
        rotate in 0usize..8,
    ) {
        let mut shuffled = ratings.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = aggregate_annotators(&ratings).unwrap();
        let b = aggregate_annotators(&shuffled).unwrap();
        for j in 0..3 {
            prop_assert!((a[j] - b[j]).abs() <= 1e-6);
            let mean = ratings.iter().map(|r| r[j] as f64).sum::<f64>() / ratings.len() as f64;
            prop_assert!((a[j] as f64 - mean).abs() <= 1e-6);
        }
    }

    #[test]
    fn ccc_factorises_into_correlation_and_bias(
        pairs in prop::collection::vec((-5.0f32..5.0, -5.0f32..5.0), 2..64),
    ) {
        let (p, y): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let s = ccc_stats(&p, &y).unwrap();
        let pf: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let vp = { let m = pf.iter().sum::<f64>() / pf.len() as f64; pf.iter().map(|v| (v - m).powi(2)).sum::<f64>() };
        let vy = { let m = yf.iter().sum::<f64>() / yf.len() as f64; yf.iter().map(|v| (v - m).powi(2)).sum::<f64>() };
        prop_assume!(vp > 1e-6 && vy > 1e-6);
        prop_assert!((s.ccc - s.rho * s.c_b).abs() < 1e-9);
        prop_assert!((s.ccc - common::ccc_oracle(&pf, &yf)).abs() < 1e-9);
        prop_assert!(s.ccc.abs() <= s.rho.abs() + 1e-12);
    }

    #[test]
    fn raising_tau_never_discards_more(
        rows in prop::collection::vec((label(), label()), 3..60),
        tau in 0.1f64..4.0,
        extra in 0.0f64..2.0,
    ) {
        let (preds, labels): (Vec<Label>, Vec<Label>) = rows.into_iter().unzip();
        let Ok(model) = fit_residual_model(&preds, &labels) else {
            return Ok(());
        };
        let ids: Vec<String> = (0..preds.len()).map(|i| i.to_string()).collect();
        let tight = compute_mask(&model, &ids, &preds, &labels, tau).unwrap();
        let loose = compute_mask(&model, &ids, &preds, &labels, tau + extra).unwrap();
        for (a, b) in tight.entries.iter().zip(&loose.entries) {
            prop_assert!(!a.keep || b.keep, "{} kept at tau={} but not at {}", a.id, tau, tau + extra);
        }
    }

    #[test]
    fn checkpoints_round_trip(
        seed in any::<u64>(),
        hidden in 1usize..6,
        layers in 1usize..3,
        embed in 1usize..5,
        multimodal in any::<bool>(),
    ) {
        let base = if multimodal { ModelConfig::multimodal(3, 2) } else { ModelConfig::audio(3) };
        let cfg = ModelConfig { hidden_dim: hidden, num_layers: layers, embed_dim: embed, ..base };
        let model = EmotionModel::new(cfg, seed).unwrap();
        let bytes = encode_checkpoint(&model);
        let back = decode_checkpoint(&bytes, "mem".as_ref()).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }
}
