use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments per parameter plus the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.numel()]).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }
}

/// One bias-corrected Adam update. `lrs[i]` is the learning rate applied to
/// parameter `i`. All gradients are checked before anything is modified, so
/// a non-finite gradient leaves parameters and state untouched.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut Tensor],
    grads: &[&[f64]],
    lrs: &[f64],
    names: &[String],
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || lrs.len() != n || names.len() != n || state.m.len() != n {
        return Err(Error::invalid(format!(
            "adam: {n} params, {} grads, {} lrs, {} names, {} moment slots",
            grads.len(),
            lrs.len(),
            names.len(),
            state.m.len()
        )));
    }
    for i in 0..n {
        if grads[i].len() != params[i].numel() || state.m[i].len() != params[i].numel() {
            return Err(Error::Shape {
                op: "adam",
                lhs: params[i].shape().to_vec(),
                rhs: vec![grads[i].len()],
            });
        }
        if grads[i].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                op: format!("gradient of {}", names[i]),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for i in 0..n {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, p) in params[i].data_mut().iter_mut().enumerate() {
            let g = grads[i][k];
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
            let update = lrs[i] * (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
            *p = (*p as f64 - update) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(vec![0.5, -1.5]);
        let before = p.clone();
        let mut s = AdamState::new([&p]);
        for _ in 0..5 {
            adam_step(&mut s, &mut [&mut p], &[&[0.0, 0.0]], &[0.1], &names(1)).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 150.0] {
            let mut p = Tensor::scalar(1.0);
            let mut s = AdamState::new([&p]);
            adam_step(&mut s, &mut [&mut p], &[&[g]], &[1e-3], &names(1)).unwrap();
            let delta = 1.0 - p.data()[0] as f64;
            assert!((delta.abs() - 1e-3).abs() < 1e-6, "{delta}");
            assert_eq!(delta.signum(), g.signum());
        }
    }

    #[test]
    fn matches_scalar_oracle_on_square() {
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut p = Tensor::scalar(1.0);
        let mut s = AdamState::new([&p]);
        for t in 1..=10 {
            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let gp = 2.0 * p.data()[0] as f64;
            adam_step(&mut s, &mut [&mut p], &[&[gp]], &[0.1], &names(1)).unwrap();
        }
        assert!((p.data()[0] as f64 - x).abs() < 1e-6, "{} vs {x}", p.data()[0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let mut s = AdamState::new([&a, &b]);
        let err = adam_step(
            &mut s,
            &mut [&mut a, &mut b],
            &[&[1.0], &[f64::NAN]],
            &[0.1, 0.1],
            &["enc".into(), "head.bias".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("head.bias"));
        assert_eq!((a.data()[0], s.step_count()), (1.0, 0));
    }
}
