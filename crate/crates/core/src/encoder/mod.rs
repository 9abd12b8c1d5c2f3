//! GRU sequence encoders, projections, the prediction head and checkpoints.

mod checkpoint;
mod gru;
mod linear;
mod model;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gru::{encode_sequence, BoundGru, GruLayer, GruStack, GATE_NAMES};
pub use linear::{fuse_and_project, predict, project_audio, BoundLinear, Linear, PredictionHead, Projection};
pub use model::{BoundModel, EmotionModel, ForwardVars, Modality, ModelConfig, ParamGroup};

use rand::Rng;

use crate::autodiff::Tensor;

/// `[rows, cols]` weight drawn from `U(-1/sqrt(rows), 1/sqrt(rows))`, where
/// `rows` is the fan-in.
pub fn init_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (rows as f32).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new([rows, cols], data).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use crate::data::FeatureSequence;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_seq(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> FeatureSequence {
        let v = (0..frames * dim).map(|_| StandardNormal.sample(rng)).collect();
        FeatureSequence::new(frames, dim, v).unwrap()
    }

    /// Scalar-loop GRU evaluated in f64, independent of the tape.
    fn reference_gru(stack: &GruStack, seq: &FeatureSequence) -> Vec<f64> {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let w = |t: &Tensor, r: usize, c: usize| t.data()[r * t.shape()[1] + c] as f64;
        let hdim = stack.hidden_dim();
        let mut inputs: Vec<Vec<f64>> = (0..seq.num_frames())
            .map(|t| seq.frame(t).iter().map(|&v| v as f64).collect())
            .collect();
        for layer in &stack.layers {
            let mut h = vec![0.0; hdim];
            let mut outs = Vec::new();
            for x in &inputs {
                let mut z = vec![0.0; hdim];
                let mut r = vec![0.0; hdim];
                for i in 0..hdim {
                    let mut az = layer.b_z.data()[i] as f64;
                    let mut ar = layer.b_r.data()[i] as f64;
                    for (k, xk) in x.iter().enumerate() {
                        az += xk * w(&layer.w_z, k, i);
                        ar += xk * w(&layer.w_r, k, i);
                    }
                    for k in 0..hdim {
                        az += h[k] * w(&layer.u_z, k, i);
                        ar += h[k] * w(&layer.u_r, k, i);
                    }
                    z[i] = sig(az);
                    r[i] = sig(ar);
                }
                let mut next = vec![0.0; hdim];
                for i in 0..hdim {
                    let mut an = layer.b_n.data()[i] as f64;
                    for (k, xk) in x.iter().enumerate() {
                        an += xk * w(&layer.w_n, k, i);
                    }
                    for k in 0..hdim {
                        an += r[k] * h[k] * w(&layer.u_n, k, i);
                    }
                    let n = an.tanh();
                    next[i] = (1.0 - z[i]) * n + z[i] * h[i];
                }
                h = next;
                outs.push(h.clone());
            }
            inputs = outs;
        }
        inputs.pop().unwrap()
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let stack = GruStack::zeros(3, 4, 2).unwrap();
        let seq = random_seq(&mut rng(1), 5, 3);
        assert!(stack.encode(&seq).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_reference() {
        let mut r = rng(2);
        let mut stack = GruStack::new(2, 2, 1, &mut r).unwrap();
        for layer in stack.layers.iter_mut() {
            for p in layer.params_mut() {
                for v in p.data_mut() {
                    *v = StandardNormal.sample(&mut r);
                }
            }
        }
        let seq = random_seq(&mut r, 3, 2);
        let got = stack.encode(&seq).unwrap();
        let want = reference_gru(&stack, &seq);
        for (g, w) in got.iter().zip(&want) {
            assert!((*g as f64 - w).abs() < 1e-6, "{g} vs {w}");
        }

        let deep = GruStack::new(3, 5, 2, &mut r).unwrap();
        let seq = random_seq(&mut r, 6, 3);
        let got = deep.encode(&seq).unwrap();
        for (g, w) in got.iter().zip(reference_gru(&deep, &seq)) {
            assert!((*g as f64 - w).abs() < 1e-6);
        }
    }

    #[test]
    fn recurrence_is_stateful() {
        let mut r = rng(3);
        let stack = GruStack::new(2, 4, 2, &mut r).unwrap();
        let one = FeatureSequence::new(1, 2, vec![0.7, -0.3]).unwrap();
        let two = FeatureSequence::new(2, 2, vec![0.7, -0.3, 0.7, -0.3]).unwrap();
        assert_ne!(stack.encode(&one).unwrap(), stack.encode(&two).unwrap());
    }

    #[test]
    fn appending_a_frame_changes_output() {
        let mut r = rng(4);
        let stack = GruStack::new(3, 6, 2, &mut r).unwrap();
        let seq = random_seq(&mut r, 4, 3);
        let mut padded = seq.values().to_vec();
        padded.extend_from_slice(&[0.0; 3]);
        let padded = FeatureSequence::new(5, 3, padded).unwrap();
        assert_ne!(stack.encode(&seq).unwrap(), stack.encode(&padded).unwrap());
    }

    #[test]
    fn encode_errors() {
        let stack = GruStack::zeros(3, 4, 1).unwrap();
        let wrong = FeatureSequence::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(stack.encode(&wrong).is_err());
        let mut tape = Tape::new();
        let bound = stack.bind(&mut tape, false);
        let empty = tape.constant(&Tensor::zeros([0, 3]));
        assert!(encode_sequence(&mut tape, &bound, empty).is_err());
    }

    #[test]
    fn fuse_and_project_examples() {
        let mut eye = Tensor::zeros([3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let p = Linear::from_parts(eye, Tensor::zeros([3])).unwrap();
        assert_eq!(p.fuse_and_project(&[1.0, 2.0], &[3.0]).unwrap(), vec![1.0, 2.0, 3.0]);

        let b = Tensor::vector(vec![0.5, -0.5]);
        let p = Linear::from_parts(Tensor::zeros([3, 2]), b.clone()).unwrap();
        assert_eq!(p.fuse_and_project(&[9.0, -4.0], &[2.0]).unwrap(), b.data());

        assert!(p.fuse_and_project(&[1.0], &[1.0]).is_err());

        let mut r = rng(5);
        let p = Linear::new(4, 2, &mut r);
        let (ua, ut) = ([0.3f32, -1.1], [0.8f32, 0.25]);
        let x: Vec<f32> = ua.iter().chain(&ut).copied().collect();
        let got = p.fuse_and_project(&ua, &ut).unwrap();
        for j in 0..2 {
            let want: f64 = (0..4).map(|k| x[k] as f64 * p.weight.data()[k * 2 + j] as f64).sum::<f64>()
                + p.bias.data()[j] as f64;
            assert!((got[j] as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn project_audio_examples() {
        let mut eye = Tensor::zeros([2, 2]);
        eye.data_mut()[0] = 1.0;
        eye.data_mut()[3] = 1.0;
        let p = Linear::from_parts(eye, Tensor::zeros([2])).unwrap();
        assert_eq!(p.project(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);

        let p = Linear::from_parts(Tensor::zeros([2, 2]), Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!(p.project(&[1.5, -2.0]).unwrap(), vec![3.0, 4.0]);

        let mut r = rng(6);
        let p = Linear::new(3, 2, &mut r);
        let u = [0.1f32, 0.2, -0.7];
        let got = p.project(&u).unwrap();
        for j in 0..2 {
            let want: f64 = (0..3).map(|k| u[k] as f64 * p.weight.data()[k * 2 + j] as f64).sum();
            assert!((got[j] as f64 - want).abs() < 1e-6);
        }
        assert!(p.project(&[1.0]).is_err());
    }

    #[test]
    fn predict_examples() {
        let h = Linear::from_parts(Tensor::zeros([4, 3]), Tensor::vector(vec![0.1, 0.2, 0.3])).unwrap();
        assert_eq!(h.predict(&[5.0, 6.0, 7.0, 8.0]).unwrap(), [0.1, 0.2, 0.3]);

        let mut w = Tensor::zeros([4, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let h = Linear::from_parts(w, Tensor::zeros([3])).unwrap();
        assert_eq!(h.predict(&[1.0, -1.0, 0.5, 9.0]).unwrap(), [1.0, -1.0, 0.5]);

        let mut r = rng(7);
        let h = Linear::new(4, 3, &mut r);
        let e = [0.4f32, -0.2, 1.3, 0.05];
        let got = h.predict(&e).unwrap();
        for j in 0..3 {
            let want: f64 = (0..4).map(|k| e[k] as f64 * h.weight.data()[k * 3 + j] as f64).sum();
            assert!((got[j] as f64 - want).abs() < 1e-6);
        }
        assert!(h.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn init_bounds() {
        let t = init_uniform(16, 8, &mut rng(8));
        assert!(t.data().iter().all(|v| v.abs() <= 0.25));
    }
}
