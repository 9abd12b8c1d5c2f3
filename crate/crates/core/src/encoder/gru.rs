use rand::Rng;

use super::init_uniform;
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::FeatureSequence;
use crate::error::{Error, Result};

pub const GATE_NAMES: [&str; 9] = ["w_z", "w_r", "w_n", "u_z", "u_r", "u_n", "b_z", "b_r", "b_n"];

/// One GRU layer. `w_*` map the input (`[input, hidden]`), `u_*` the previous
/// state (`[hidden, hidden]`), `b_*` are `[hidden]` biases. Gates:
///
/// ```text
/// z = σ(x W_z + h U_z + b_z)
/// r = σ(x W_r + h U_r + b_r)
/// n = tanh(x W_n + (r ⊙ h) U_n + b_n)
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruLayer {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_n: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_n: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_n: Tensor,
}

impl GruLayer {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_z: init_uniform(input, hidden, rng),
            w_r: init_uniform(input, hidden, rng),
            w_n: init_uniform(input, hidden, rng),
            u_z: init_uniform(hidden, hidden, rng),
            u_r: init_uniform(hidden, hidden, rng),
            u_n: init_uniform(hidden, hidden, rng),
            b_z: Tensor::zeros([hidden]),
            b_r: Tensor::zeros([hidden]),
            b_n: Tensor::zeros([hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Tensor::zeros([input, hidden]),
            w_r: Tensor::zeros([input, hidden]),
            w_n: Tensor::zeros([input, hidden]),
            u_z: Tensor::zeros([hidden, hidden]),
            u_r: Tensor::zeros([hidden, hidden]),
            u_n: Tensor::zeros([hidden, hidden]),
            b_z: Tensor::zeros([hidden]),
            b_r: Tensor::zeros([hidden]),
            b_n: Tensor::zeros([hidden]),
        }
    }

    /// Parameters in [`GATE_NAMES`] order.
    pub fn params(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.w_r, &self.w_n, &self.u_z, &self.u_r, &self.u_n, &self.b_z, &self.b_r, &self.b_n,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_n,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_n,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_n,
        ]
    }
}

/// Stacked GRU summarising a sequence by its last top-layer state.
#[derive(Clone, Debug, PartialEq)]
pub struct GruStack {
    input_dim: usize,
    hidden_dim: usize,
    pub layers: Vec<GruLayer>,
}

impl GruStack {
    pub fn new<R: Rng>(input_dim: usize, hidden_dim: usize, num_layers: usize, rng: &mut R) -> Result<Self> {
        Self::check_dims(input_dim, hidden_dim, num_layers)?;
        let layers = (0..num_layers)
            .map(|k| GruLayer::new(if k == 0 { input_dim } else { hidden_dim }, hidden_dim, rng))
            .collect();
        Ok(Self {
            input_dim,
            hidden_dim,
            layers,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, num_layers: usize) -> Result<Self> {
        Self::check_dims(input_dim, hidden_dim, num_layers)?;
        let layers = (0..num_layers)
            .map(|k| GruLayer::zeros(if k == 0 { input_dim } else { hidden_dim }, hidden_dim))
            .collect();
        Ok(Self {
            input_dim,
            hidden_dim,
            layers,
        })
    }

    fn check_dims(input_dim: usize, hidden_dim: usize, num_layers: usize) -> Result<()> {
        if input_dim == 0 || hidden_dim == 0 || num_layers == 0 {
            return Err(Error::invalid(format!(
                "GRU needs positive sizes, got input {input_dim}, hidden {hidden_dim}, layers {num_layers}"
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGru {
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let v: Vec<Var> = layer
                    .params()
                    .iter()
                    .map(|t| if trainable { tape.param(t) } else { tape.constant(t) })
                    .collect();
                BoundGruLayer {
                    w: [v[0], v[1], v[2]],
                    u: [v[3], v[4], v[5]],
                    b: [v[6], v[7], v[8]],
                }
            })
            .collect();
        BoundGru {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            layers,
        }
    }

    /// Binds onto existing vars laid out as [`BoundGru::vars`] returns them.
    pub(crate) fn bind_vars(&self, vars: &[Var]) -> BoundGru {
        let layers = vars
            .chunks_exact(GATE_NAMES.len())
            .map(|v| BoundGruLayer {
                w: [v[0], v[1], v[2]],
                u: [v[3], v[4], v[5]],
                b: [v[6], v[7], v[8]],
            })
            .collect();
        BoundGru {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            layers,
        }
    }

    /// Forward pass without gradient tracking.
    pub fn encode(&self, seq: &FeatureSequence) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(&seq.to_tensor());
        let h = encode_sequence(&mut tape, &bound, x)?;
        Ok(tape.value(h).into_data())
    }
}

#[derive(Clone, Debug)]
pub struct BoundGruLayer {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

/// A [`GruStack`] registered on a tape.
#[derive(Clone, Debug)]
pub struct BoundGru {
    input_dim: usize,
    hidden_dim: usize,
    layers: Vec<BoundGruLayer>,
}

impl BoundGru {
    /// Vars in the same order as the stack's parameters.
    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.u).chain(&l.b).copied())
            .collect()
    }
}

/// Runs the stack over a `[frames, input_dim]` sequence and returns the final
/// top-layer state as a `[1, hidden]` row.
pub fn encode_sequence(tape: &mut Tape, gru: &BoundGru, seq: Var) -> Result<Var> {
    let shape = tape.shape(seq).to_vec();
    let frames = match shape[..] {
        [t, d] if d == gru.input_dim => t,
        _ => {
            return Err(Error::Shape {
                op: "encode_sequence",
                lhs: shape,
                rhs: vec![0, gru.input_dim],
            })
        }
    };
    if frames == 0 {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }

    let mut x = seq;
    let mut last = None;
    for (k, layer) in gru.layers.iter().enumerate() {
        let mut proj = [x; 3];
        for g in 0..3 {
            let xw = tape.matmul(x, layer.w[g])?;
            proj[g] = tape.add(xw, layer.b[g])?;
        }
        let mut h = tape.constant(&Tensor::zeros([1, gru.hidden_dim]));
        let top = k + 1 == gru.layers.len();
        let mut states = Vec::with_capacity(if top { 0 } else { frames });
        for t in 0..frames {
            let xz = tape.rows(proj[0], t, 1)?;
            let xr = tape.rows(proj[1], t, 1)?;
            let xn = tape.rows(proj[2], t, 1)?;

            let hz = tape.matmul(h, layer.u[0])?;
            let z = tape.add(xz, hz)?;
            let z = tape.sigmoid(z)?;

            let hr = tape.matmul(h, layer.u[1])?;
            let r = tape.add(xr, hr)?;
            let r = tape.sigmoid(r)?;

            let rh = tape.mul(r, h)?;
            let hn = tape.matmul(rh, layer.u[2])?;
            let n = tape.add(xn, hn)?;
            let n = tape.tanh(n)?;

            // h' = n + z ⊙ (h - n)
            let gap = tape.sub(h, n)?;
            let keep = tape.mul(z, gap)?;
            h = tape.add(n, keep)?;
            if !top {
                states.push(h);
            }
        }
        if top {
            last = Some(h);
        } else {
            x = tape.concat(&states, 0)?;
        }
    }
    Ok(last.expect("at least one layer"))
}
