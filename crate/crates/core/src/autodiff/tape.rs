//! Define-by-run reverse-mode tape.
//!
//! Every operation appends a node holding its output value. Nodes whose
//! inputs carry no gradient are stored as constants, so the backward sweep
//! only walks the differentiable part of the graph. Values are held as
//! `f64`; in [`Precision::Single`] every forward output and every gradient
//! accumulation is rounded to the nearest `f32`, which gives binary32
//! storage with 64-bit accumulation inside reductions and matrix products.

use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

/// How the right operand of an elementwise op maps onto the left one.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    Scalar,
    /// rhs has `n` elements and is repeated across every row of an `[m, n]` lhs
    Row(usize),
}

impl Broadcast {
    fn resolve(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        let rhs_len: usize = rhs.iter().product();
        if lhs == rhs {
            return Ok(Broadcast::Same);
        }
        if rhs_len == 1 {
            return Ok(Broadcast::Scalar);
        }
        if let [_, n] = lhs[..] {
            let row_like = rhs == [n] || rhs == [1, n];
            if row_like {
                return Ok(Broadcast::Row(n));
            }
        }
        Err(Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        })
    }

    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::Row(n) => i % n,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Tanh,
    Sigmoid,
    Square,
    Sqrt,
    Scale(f64),
    Shift(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var, Broadcast),
    Unary(UnaryKind, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Norm(Var),
    Rows { input: Var, start: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Binary(BinaryKind::Add, ..) => "add",
            Op::Binary(BinaryKind::Sub, ..) => "subtract",
            Op::Binary(BinaryKind::Mul, ..) => "multiply",
            Op::Binary(BinaryKind::Div, ..) => "divide",
            Op::Unary(UnaryKind::Tanh, _) => "tanh",
            Op::Unary(UnaryKind::Sigmoid, _) => "sigmoid",
            Op::Unary(UnaryKind::Square, _) => "square",
            Op::Unary(UnaryKind::Sqrt, _) => "sqrt",
            Op::Unary(UnaryKind::Scale(_), _) => "scale",
            Op::Unary(UnaryKind::Shift(_), _) => "add_scalar",
            Op::Concat { .. } => "concat",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumAxis(..) => "sum_axis",
            Op::MeanAxis(..) => "mean_axis",
            Op::Norm(_) => "euclidean_norm",
            Op::Rows { .. } => "rows",
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    precision: Precision,
}

/// Gradients of a scalar with respect to every trainable leaf of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    entries: BTreeMap<Var, (Vec<usize>, Vec<f64>)>,
    precision: Precision,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<Tensor> {
        self.entries.get(&var).map(|(shape, values)| {
            let data = values.iter().map(|&v| v as f32).collect();
            Tensor::new(shape.clone(), data).expect("gradient shape")
        })
    }

    /// Full-precision view of a gradient.
    pub fn values(&self, var: Var) -> Option<&[f64]> {
        self.entries.get(&var).map(|(_, v)| v.as_slice())
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.entries.keys().copied()
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn dims2(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape[..] {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Shape {
            op,
            lhs: shape.to_vec(),
            rhs: vec![0, 0],
        }),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Self {
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    fn round(&self, values: &mut [f64]) {
        if self.precision == Precision::Single {
            for v in values {
                *v = *v as f32 as f64;
            }
        }
    }

    fn leaf(&mut self, shape: Vec<usize>, mut value: Vec<f64>, requires_grad: bool) -> Var {
        self.round(&mut value);
        self.nodes.push(Node {
            shape,
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let value = t.data().iter().map(|&v| v as f64).collect();
        self.leaf(t.shape().to_vec(), value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        let value = t.data().iter().map(|&v| v as f64).collect();
        self.leaf(t.shape().to_vec(), value, false)
    }

    pub(crate) fn leaf_f64(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        self.leaf(shape, value, requires_grad)
    }

    /// Constant copy of `v`; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let node = &self.nodes[v.0];
        let (shape, value) = (node.shape.clone(), node.value.clone());
        self.leaf(shape, value, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn value(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        let data = node.value.iter().map(|&x| x as f32).collect();
        Tensor::new(node.shape.clone(), data).expect("node shape")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let node = &self.nodes[v.0];
        if node.value.len() != 1 {
            return Err(Error::invalid(format!(
                "expected a scalar, found shape {:?}",
                node.shape
            )));
        }
        Ok(node.value[0])
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, mut value: Vec<f64>, inputs: &[Var]) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: op.name().to_string(),
            });
        }
        self.round(&mut value);
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", self.shape(a))?;
        let (k2, n) = dims2("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for l in 0..k {
                let x = av[i * k + l];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[l * n..(l + 1) * n];
                for (o, &y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        self.push(Op::MatMul(a, b), vec![m, n], out, &[a, b])
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let name = Op::Binary(kind, a, b, Broadcast::Same).name();
        let bc = Broadcast::resolve(name, self.shape(a), self.shape(b))?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out: Vec<f64> = av
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bv[bc.index(i)];
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Binary(kind, a, b, bc), shape, out, &[a, b])
    }

    /// Elementwise sum; `b` may be a scalar or a row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if let UnaryKind::Sqrt = kind {
            if av.iter().any(|&x| x < 0.0) {
                return Err(Error::invalid("sqrt of a negative value"));
            }
        }
        let out: Vec<f64> = av
            .iter()
            .map(|&x| match kind {
                UnaryKind::Tanh => x.tanh(),
                UnaryKind::Sigmoid => sigmoid(x),
                UnaryKind::Square => x * x,
                UnaryKind::Sqrt => x.sqrt(),
                UnaryKind::Scale(s) => s * x,
                UnaryKind::Shift(c) => x + c,
            })
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Unary(kind, a), shape, out, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Square, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Sqrt, a)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary(UnaryKind::Scale(s), a)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(UnaryKind::Shift(c), a)
    }

    /// Concatenate along `axis`. Rank-1 inputs support axis 0; rank-2 inputs
    /// support axes 0 and 1.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() || base.len() > 2 {
            return Err(Error::invalid(format!(
                "concat axis {axis} unsupported for shape {base:?}"
            )));
        }
        for &v in &inputs[1..] {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
        }
        let mut shape = base.clone();
        shape[axis] = inputs.iter().map(|&v| self.shape(v)[axis]).sum();
        let mut out = Vec::with_capacity(numel(&shape));
        if axis == 0 {
            for &v in inputs {
                out.extend_from_slice(&self.nodes[v.0].value);
            }
        } else {
            let rows = base[0];
            for r in 0..rows {
                for &v in inputs {
                    let cols = self.shape(v)[1];
                    out.extend_from_slice(&self.nodes[v.0].value[r * cols..(r + 1) * cols]);
                }
            }
        }
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            shape,
            out,
            inputs,
        )
    }

    /// Rows `start..start + len` of a rank-2 tensor.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims2("rows", self.shape(a))?;
        if start + len > m {
            return Err(Error::invalid(format!(
                "rows {start}..{} out of range for {m} rows",
                start + len
            )));
        }
        let out = self.nodes[a.0].value[start * n..(start + len) * n].to_vec();
        self.push(Op::Rows { input: a, start }, vec![len, n], out, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].value.iter().sum();
        self.push(Op::Sum(a), Vec::new(), vec![s], &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        if v.is_empty() {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean(a), Vec::new(), vec![s], &[a])
    }

    fn axis_reduce(&mut self, a: Var, axis: usize, mean: bool) -> Result<Var> {
        let name = if mean { "mean_axis" } else { "sum_axis" };
        let (m, n) = dims2(name, self.shape(a))?;
        if axis > 1 {
            return Err(Error::invalid(format!("{name}: axis {axis} out of range")));
        }
        let v = &self.nodes[a.0].value;
        let (shape, out) = if axis == 0 {
            let mut out = vec![0.0; n];
            for r in 0..m {
                for (o, &x) in out.iter_mut().zip(&v[r * n..(r + 1) * n]) {
                    *o += x;
                }
            }
            if mean {
                out.iter_mut().for_each(|o| *o /= m as f64);
            }
            (vec![1, n], out)
        } else {
            let out = (0..m)
                .map(|r| {
                    let s: f64 = v[r * n..(r + 1) * n].iter().sum();
                    if mean {
                        s / n as f64
                    } else {
                        s
                    }
                })
                .collect();
            (vec![m, 1], out)
        };
        let op = if mean {
            Op::MeanAxis(a, axis)
        } else {
            Op::SumAxis(a, axis)
        };
        self.push(op, shape, out, &[a])
    }

    /// Reduce a rank-2 tensor along `axis`, keeping it as a length-1 dimension.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.axis_reduce(a, axis, false)
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.axis_reduce(a, axis, true)
    }

    pub fn euclidean_norm(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].value.iter().map(|x| x * x).sum();
        self.push(Op::Norm(a), Vec::new(), vec![s.sqrt()], &[a])
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, found shape {:?}",
                node.shape
            )));
        }
        self.backward_seeded(loss, vec![1.0])
    }

    /// Reverse sweep from `output` with upstream gradient `seed`.
    pub fn backward_with(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(output) {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.shape(output).to_vec(),
                rhs: seed.shape().to_vec(),
            });
        }
        self.backward_seeded(output, seed.data().iter().map(|&v| v as f64).collect())
    }

    fn accumulate(&self, slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
        let g = slot.get_or_insert_with(|| vec![0.0; len]);
        f(g);
        self.round(g);
    }

    fn backward_seeded(&self, output: Var, seed: Vec<f64>) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("backward on an empty tape"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: format!("backward of {}", node.op.name()),
                });
            }
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n = self.nodes[b.0].shape[1];
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].requires_grad {
                        // dA = G · Bᵀ
                        self.accumulate(&mut grads[a.0], m * k, |ga| {
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for l in 0..k {
                                    let brow = &bv[l * n..(l + 1) * n];
                                    let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                                    ga[i * k + l] += dot;
                                }
                            }
                        });
                    }
                    if self.nodes[b.0].requires_grad {
                        // dB = Aᵀ · G
                        self.accumulate(&mut grads[b.0], k * n, |gb| {
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for l in 0..k {
                                    let x = av[i * k + l];
                                    if x == 0.0 {
                                        continue;
                                    }
                                    for (o, &y) in gb[l * n..(l + 1) * n].iter_mut().zip(grow) {
                                        *o += x * y;
                                    }
                                }
                            }
                        });
                    }
                }
                Op::Binary(kind, a, b, bc) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].requires_grad {
                        self.accumulate(&mut grads[a.0], av.len(), |ga| {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += match kind {
                                    BinaryKind::Add | BinaryKind::Sub => *gi,
                                    BinaryKind::Mul => gi * bv[bc.index(i)],
                                    BinaryKind::Div => gi / bv[bc.index(i)],
                                };
                            }
                        });
                    }
                    if self.nodes[b.0].requires_grad {
                        self.accumulate(&mut grads[b.0], bv.len(), |gb| {
                            for (i, gi) in g.iter().enumerate() {
                                let j = bc.index(i);
                                gb[j] += match kind {
                                    BinaryKind::Add => *gi,
                                    BinaryKind::Sub => -gi,
                                    BinaryKind::Mul => gi * av[i],
                                    BinaryKind::Div => -gi * av[i] / (bv[j] * bv[j]),
                                };
                            }
                        });
                    }
                }
                Op::Unary(kind, a) => {
                    if self.nodes[a.0].requires_grad {
                        let (av, out) = (&self.nodes[a.0].value, &node.value);
                        self.accumulate(&mut grads[a.0], av.len(), |ga| {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += match kind {
                                    UnaryKind::Tanh => gi * (1.0 - out[i] * out[i]),
                                    UnaryKind::Sigmoid => gi * out[i] * (1.0 - out[i]),
                                    UnaryKind::Square => 2.0 * gi * av[i],
                                    UnaryKind::Sqrt => 0.5 * gi / out[i],
                                    UnaryKind::Scale(s) => s * gi,
                                    UnaryKind::Shift(_) => *gi,
                                };
                            }
                        });
                    }
                }
                Op::Concat { inputs, axis } => {
                    let mut offset = 0;
                    let total_cols = node.shape.get(1).copied().unwrap_or(0);
                    for &v in inputs {
                        let shape = &self.nodes[v.0].shape;
                        let len = numel(shape);
                        if self.nodes[v.0].requires_grad {
                            self.accumulate(&mut grads[v.0], len, |gv| {
                                if *axis == 0 {
                                    for (o, x) in gv.iter_mut().zip(&g[offset..offset + len]) {
                                        *o += x;
                                    }
                                } else {
                                    let cols = shape[1];
                                    for r in 0..shape[0] {
                                        let src = &g[r * total_cols + offset..r * total_cols + offset + cols];
                                        for (o, x) in gv[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                                            *o += x;
                                        }
                                    }
                                }
                            });
                        }
                        offset += if *axis == 0 { len } else { shape[1] };
                    }
                }
                Op::Rows { input, start } => {
                    if self.nodes[input.0].requires_grad {
                        let n = node.shape[1];
                        let len = self.nodes[input.0].value.len();
                        self.accumulate(&mut grads[input.0], len, |gi| {
                            for (o, x) in gi[start * n..start * n + g.len()].iter_mut().zip(&g) {
                                *o += x;
                            }
                        });
                    }
                }
                Op::Sum(a) | Op::Mean(a) => {
                    if self.nodes[a.0].requires_grad {
                        let len = self.nodes[a.0].value.len();
                        let d = if matches!(node.op, Op::Mean(_)) {
                            g[0] / len as f64
                        } else {
                            g[0]
                        };
                        self.accumulate(&mut grads[a.0], len, |ga| {
                            ga.iter_mut().for_each(|o| *o += d);
                        });
                    }
                }
                Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                    if self.nodes[a.0].requires_grad {
                        let (m, n) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                        let mean = matches!(node.op, Op::MeanAxis(..));
                        let count = if *axis == 0 { m } else { n } as f64;
                        self.accumulate(&mut grads[a.0], m * n, |ga| {
                            for r in 0..m {
                                for c in 0..n {
                                    let up = if *axis == 0 { g[c] } else { g[r] };
                                    ga[r * n + c] += if mean { up / count } else { up };
                                }
                            }
                        });
                    }
                }
                Op::Norm(a) => {
                    if self.nodes[a.0].requires_grad {
                        let (av, norm) = (&self.nodes[a.0].value, node.value[0]);
                        self.accumulate(&mut grads[a.0], av.len(), |ga| {
                            if norm > 0.0 {
                                for (o, x) in ga.iter_mut().zip(av) {
                                    *o += g[0] * x / norm;
                                }
                            }
                        });
                    }
                }
            }
        }

        let entries = self
            .nodes
            .iter()
            .enumerate()
            .take(output.0 + 1)
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .map(|(id, n)| {
                let g = grads[id].take().unwrap_or_else(|| vec![0.0; n.value.len()]);
                (Var(id), (n.shape.clone(), g))
            })
            .collect();
        Ok(Gradients {
            entries,
            precision: self.precision,
        })
    }
}
