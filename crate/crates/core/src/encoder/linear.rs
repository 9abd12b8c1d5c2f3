use rand::Rng;

use super::init_uniform;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Affine map `y = x W + b` with `W: [in, out]`, `b: [out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Embedding projection (`P_A` or `P_AT`).
pub type Projection = Linear;

/// Three-output head; output order is activation, valence, dominance.
pub type PredictionHead = Linear;

impl Linear {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: init_uniform(in_dim, out_dim, rng),
            bias: Tensor::zeros([out_dim]),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros([in_dim, out_dim]),
            bias: Tensor::zeros([out_dim]),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        match weight.dims2() {
            Some((_, out)) if bias.shape() == [out] => Ok(Self { weight, bias }),
            _ => Err(Error::Shape {
                op: "linear",
                lhs: weight.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            }),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundLinear {
        let reg = |tape: &mut Tape, t: &Tensor| if trainable { tape.param(t) } else { tape.constant(t) };
        BoundLinear {
            weight: reg(tape, &self.weight),
            bias: reg(tape, &self.bias),
        }
    }

    fn eval(&self, f: impl FnOnce(&mut Tape, &BoundLinear) -> Result<Var>) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let y = f(&mut tape, &bound)?;
        Ok(tape.value(y).into_data())
    }

    /// `P(concat[u_a, u_t])` without gradient tracking.
    pub fn fuse_and_project(&self, u_a: &[f32], u_t: &[f32]) -> Result<Vec<f32>> {
        self.eval(|tape, p| {
            let a = tape.constant(&Tensor::row(u_a.to_vec()));
            let t = tape.constant(&Tensor::row(u_t.to_vec()));
            fuse_and_project(tape, p, a, t)
        })
    }

    pub fn project(&self, u: &[f32]) -> Result<Vec<f32>> {
        self.eval(|tape, p| {
            let a = tape.constant(&Tensor::row(u.to_vec()));
            project_audio(tape, p, a)
        })
    }

    pub fn predict(&self, e: &[f32]) -> Result<[f32; 3]> {
        let out = self.eval(|tape, h| {
            let x = tape.constant(&Tensor::row(e.to_vec()));
            predict(tape, h, x)
        })?;
        Ok([out[0], out[1], out[2]])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    /// `x W + b` for a row (or stack of rows) `x`.
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }
}

/// Joint embedding from `[1, a]` audio and `[1, t]` text rows.
pub fn fuse_and_project(tape: &mut Tape, p: &BoundLinear, u_a: Var, u_t: Var) -> Result<Var> {
    let joint = tape.concat(&[u_a, u_t], 1)?;
    p.apply(tape, joint)
}

pub fn project_audio(tape: &mut Tape, p: &BoundLinear, u_a: Var) -> Result<Var> {
    p.apply(tape, u_a)
}

pub fn predict(tape: &mut Tape, head: &BoundLinear, e: Var) -> Result<Var> {
    let out = head.apply(tape, e)?;
    if tape.shape(out).last() != Some(&3) {
        return Err(Error::Shape {
            op: "predict",
            lhs: tape.shape(out).to_vec(),
            rhs: vec![1, 3],
        });
    }
    Ok(out)
}
