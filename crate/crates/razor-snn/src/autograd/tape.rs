//! Reverse-mode autodiff tape.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes in
//! topological order (inputs always precede their consumers), so the
//! backward pass is a single reverse sweep. Tapes are per-forward-pass and
//! single-threaded; distinct tapes may run on different threads.
//!
//! The spike nonlinearity is recorded with its rectangular surrogate so
//! gradients flow through both layers and timesteps of a spiking network.

use super::ops;
use super::tensor::{broadcast_binary, reduce_to_shape, Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f32 },
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Spike { u: Var, v_th: f32, width: f32 },
    Conv2d { x: Var, kernel: Var, stride: usize, padding: usize },
    Conv1dSame { x: Var, kernel: Var },
    AvgPool2d { x: Var, size: usize },
    MatMul(Var, Var),
    Softmax { x: Var, axis: usize },
    Sum(Var),
    SumAxis0(Var),
    MeanAxis0(Var),
    MeanTrailing(Var),
    MaxTrailing(Var),
    Reshape(Var),
    IndexAxis0 { x: Var, index: usize },
    Stack(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, materializing zeros for leaves the loss never
    /// touched.
    pub fn for_leaf(&self, tape: &Tape, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(var).shape()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &'static str) -> Result<Var> {
        value.check_finite(name)?;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Record an input tensor. Gradients are accumulated for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad, "leaf")
    }

    /// Constant leaf; shorthand for `leaf(value, false)`.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = broadcast_binary(self.value(a), self.value(b), "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), needs, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = broadcast_binary(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), needs, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = broadcast_binary(self.value(a), self.value(b), "mul", |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), needs, "mul")
    }

    /// `scale * x + shift` elementwise.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Result<Var> {
        let v = self.value(x).map(|e| scale * e + shift);
        let needs = self.needs(x);
        self.push(v, Op::Affine { x, scale }, needs, "affine")
    }

    pub fn scale(&mut self, x: Var, scale: f32) -> Result<Var> {
        self.affine(x, scale, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|e| 1.0 / (1.0 + (-e).exp()));
        let needs = self.needs(x);
        self.push(v, Op::Sigmoid(x), needs, "sigmoid")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|e| e.max(0.0));
        let needs = self.needs(x);
        self.push(v, Op::Relu(x), needs, "relu")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f32::exp);
        let needs = self.needs(x);
        self.push(v, Op::Exp(x), needs, "exp")
    }

    /// Heaviside spike with the rectangular surrogate recorded for the
    /// backward pass when `u` requires gradients.
    pub fn spike(&mut self, u: Var, v_th: f32, width: f32) -> Result<Var> {
        if !v_th.is_finite() {
            return Err(TensorError::Invalid {
                what: "fire threshold",
                why: format!("must be finite, got {v_th}"),
            });
        }
        let v = ops::spike_forward(self.value(u), v_th);
        let needs = self.needs(u);
        self.push(v, Op::Spike { u, v_th, width }, needs, "spike")
    }

    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let v = ops::conv2d(self.value(x), self.value(kernel), stride, padding)?;
        let needs = self.needs(x) || self.needs(kernel);
        self.push(
            v,
            Op::Conv2d {
                x,
                kernel,
                stride,
                padding,
            },
            needs,
            "conv2d",
        )
    }

    pub fn conv1d_same(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let v = ops::conv1d_same(self.value(x), self.value(kernel))?;
        let needs = self.needs(x) || self.needs(kernel);
        self.push(v, Op::Conv1dSame { x, kernel }, needs, "conv1d_same")
    }

    pub fn avg_pool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let v = ops::avg_pool2d(self.value(x), size)?;
        let needs = self.needs(x);
        self.push(v, Op::AvgPool2d { x, size }, needs, "avg_pool2d")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::matmul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), needs, "matmul")
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = ops::softmax(self.value(x), axis)?;
        let needs = self.needs(x);
        self.push(v, Op::Softmax { x, axis }, needs, "softmax")
    }

    /// Sum of all elements; the result has shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).sum_f64() as f32);
        let needs = self.needs(x);
        self.push(v, Op::Sum(x), needs, "sum")
    }

    /// Sum over axis 0: `(d0, rest...) -> (rest...)`.
    pub fn sum_axis0(&mut self, x: Var) -> Result<Var> {
        let v = self.reduce_axis0(x, false)?;
        let needs = self.needs(x);
        self.push(v, Op::SumAxis0(x), needs, "sum_axis0")
    }

    /// Mean over axis 0: `(d0, rest...) -> (rest...)`.
    pub fn mean_axis0(&mut self, x: Var) -> Result<Var> {
        let v = self.reduce_axis0(x, true)?;
        let needs = self.needs(x);
        self.push(v, Op::MeanAxis0(x), needs, "mean_axis0")
    }

    fn reduce_axis0(&self, x: Var, mean: bool) -> Result<Tensor> {
        let t = self.value(x);
        let d0 = *t.shape().first().ok_or(TensorError::Axis {
            axis: 0,
            shape: vec![],
        })?;
        let rest: Vec<usize> = if t.rank() > 1 {
            t.shape()[1..].to_vec()
        } else {
            vec![1]
        };
        let inner: usize = rest.iter().product();
        let mut acc = vec![0.0f64; inner];
        for i in 0..d0 {
            for j in 0..inner {
                acc[j] += t.data()[i * inner + j] as f64;
            }
        }
        let norm = if mean { d0 as f64 } else { 1.0 };
        Tensor::new(rest, acc.into_iter().map(|v| (v / norm) as f32).collect())
    }

    /// Mean over trailing axes, keeping axis 0: `(d0, ...) -> (d0,)`.
    pub fn mean_trailing(&mut self, x: Var) -> Result<Var> {
        let v = ops::mean_trailing(self.value(x))?;
        let needs = self.needs(x);
        self.push(v, Op::MeanTrailing(x), needs, "mean_trailing")
    }

    /// Max over trailing axes, keeping axis 0: `(d0, ...) -> (d0,)`.
    /// The backward pass routes each gradient to the first maximum.
    pub fn max_trailing(&mut self, x: Var) -> Result<Var> {
        let v = ops::max_trailing(self.value(x))?;
        let needs = self.needs(x);
        self.push(v, Op::MaxTrailing(x), needs, "max_trailing")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        let needs = self.needs(x);
        self.push(v, Op::Reshape(x), needs, "reshape")
    }

    /// Slice along axis 0: `(d0, rest...) -> (rest...)`.
    pub fn index_axis0(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        let d0 = *t.shape().first().ok_or(TensorError::Axis {
            axis: 0,
            shape: vec![],
        })?;
        if index >= d0 {
            return Err(TensorError::Index {
                index,
                shape: t.shape().to_vec(),
            });
        }
        let rest: Vec<usize> = if t.rank() > 1 {
            t.shape()[1..].to_vec()
        } else {
            vec![1]
        };
        let inner: usize = rest.iter().product();
        let slice = t.data()[index * inner..(index + 1) * inner].to_vec();
        let v = Tensor::new(rest, slice)?;
        let needs = self.needs(x);
        self.push(v, Op::IndexAxis0 { x, index }, needs, "index_axis0")
    }

    /// Stack equally shaped parts along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::Invalid {
            what: "stack",
            why: "requires at least one part".into(),
        })?;
        let part_shape = self.value(*first).shape().to_vec();
        let mut data = Vec::with_capacity(parts.len() * self.value(*first).len());
        let mut needs = false;
        for &p in parts {
            let t = self.value(p);
            if t.shape() != part_shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    lhs: part_shape,
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
            needs |= self.needs(p);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&part_shape);
        let v = Tensor::new(shape, data)?;
        self.push(v, Op::Stack(parts.to_vec()), needs, "stack")
    }

    /// Reverse sweep from a scalar loss node. Gradients accumulate into
    /// every `requires_grad` leaf reachable from the loss; untouched leaves
    /// read back as zeros through [`Gradients::for_leaf`].
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lnode = &self.nodes[loss.0];
        if !lnode.value.is_scalar() {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: lnode.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lnode.value.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            // Interior gradients are consumed here; only leaf gradients
            // survive for the caller.
            let gout = grads[i].take().expect("checked above");
            self.propagate(&self.nodes[i].op, &gout, i, &mut grads)?;
        }
        for g in grads.iter().flatten() {
            g.check_finite("backward")?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, contrib: Tensor) -> Result<()> {
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&contrib),
            slot @ None => {
                *slot = Some(contrib);
                Ok(())
            }
        }
    }

    fn propagate(
        &self,
        op: &Op,
        gout: &Tensor,
        node_idx: usize,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    let c = reduce_to_shape(gout, self.value(*a).shape());
                    self.accumulate(grads, *a, c)?;
                }
                if self.needs(*b) {
                    let c = reduce_to_shape(gout, self.value(*b).shape());
                    self.accumulate(grads, *b, c)?;
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    let c = reduce_to_shape(gout, self.value(*a).shape());
                    self.accumulate(grads, *a, c)?;
                }
                if self.needs(*b) {
                    let c = reduce_to_shape(gout, self.value(*b).shape()).map(|v| -v);
                    self.accumulate(grads, *b, c)?;
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let raw = broadcast_binary(gout, self.value(*b), "mul_grad", |g, y| g * y)?;
                    let c = reduce_to_shape(&raw, self.value(*a).shape());
                    self.accumulate(grads, *a, c)?;
                }
                if self.needs(*b) {
                    let raw = broadcast_binary(gout, self.value(*a), "mul_grad", |g, x| g * x)?;
                    let c = reduce_to_shape(&raw, self.value(*b).shape());
                    self.accumulate(grads, *b, c)?;
                }
            }
            Op::Affine { x, scale } => {
                if self.needs(*x) {
                    self.accumulate(grads, *x, gout.map(|g| g * scale))?;
                }
            }
            Op::Sigmoid(x) => {
                if self.needs(*x) {
                    let y = &self.nodes[node_idx].value;
                    let c = broadcast_binary(gout, y, "sigmoid_grad", |g, yv| g * yv * (1.0 - yv))?;
                    self.accumulate(grads, *x, c)?;
                }
            }
            Op::Relu(x) => {
                if self.needs(*x) {
                    let c = broadcast_binary(gout, self.value(*x), "relu_grad", |g, xv| {
                        if xv > 0.0 {
                            g
                        } else {
                            0.0
                        }
                    })?;
                    self.accumulate(grads, *x, c)?;
                }
            }
            Op::Exp(x) => {
                if self.needs(*x) {
                    let y = &self.nodes[node_idx].value;
                    let c = broadcast_binary(gout, y, "exp_grad", |g, yv| g * yv)?;
                    self.accumulate(grads, *x, c)?;
                }
            }
            Op::Spike { u, v_th, width } => {
                if self.needs(*u) {
                    let c = ops::spike_backward(gout, self.value(*u), *v_th, *width)?;
                    self.accumulate(grads, *u, c)?;
                }
            }
            Op::Conv2d {
                x,
                kernel,
                stride,
                padding,
            } => {
                let (gx, gk) = ops::conv2d_backward(
                    self.value(*x),
                    self.value(*kernel),
                    gout,
                    *stride,
                    *padding,
                    self.needs(*x),
                    self.needs(*kernel),
                )?;
                if let Some(gx) = gx {
                    self.accumulate(grads, *x, gx)?;
                }
                if let Some(gk) = gk {
                    self.accumulate(grads, *kernel, gk)?;
                }
            }
            Op::Conv1dSame { x, kernel } => {
                let (gx, gk) =
                    ops::conv1d_same_backward(self.value(*x), self.value(*kernel), gout)?;
                if self.needs(*x) {
                    self.accumulate(grads, *x, gx)?;
                }
                if self.needs(*kernel) {
                    self.accumulate(grads, *kernel, gk)?;
                }
            }
            Op::AvgPool2d { x, size } => {
                if self.needs(*x) {
                    let c = ops::avg_pool2d_backward(self.value(*x).shape(), *size, gout);
                    self.accumulate(grads, *x, c)?;
                }
            }
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let c = ops::matmul_nt(gout, self.value(*b))?;
                    self.accumulate(grads, *a, c)?;
                }
                if self.needs(*b) {
                    let c = ops::matmul_tn(self.value(*a), gout)?;
                    self.accumulate(grads, *b, c)?;
                }
            }
            Op::Softmax { x, axis } => {
                if self.needs(*x) {
                    let y = &self.nodes[node_idx].value;
                    let c = ops::softmax_backward(y, gout, *axis)?;
                    self.accumulate(grads, *x, c)?;
                }
            }
            Op::Sum(x) => {
                if self.needs(*x) {
                    let g = gout.scalar_value()?;
                    self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), g))?;
                }
            }
            Op::SumAxis0(x) | Op::MeanAxis0(x) => {
                if self.needs(*x) {
                    let xs = self.value(*x).shape();
                    let d0 = xs[0];
                    let inner: usize = xs[1..].iter().product::<usize>().max(1);
                    let norm = if matches!(op, Op::MeanAxis0(_)) {
                        1.0 / d0 as f32
                    } else {
                        1.0
                    };
                    let mut data = Vec::with_capacity(d0 * inner);
                    for _ in 0..d0 {
                        data.extend(gout.data().iter().map(|g| g * norm));
                    }
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), data)?)?;
                }
            }
            Op::MeanTrailing(x) => {
                if self.needs(*x) {
                    let xs = self.value(*x).shape();
                    let d0 = xs[0];
                    let inner = self.value(*x).len() / d0.max(1);
                    let mut data = Vec::with_capacity(d0 * inner);
                    for i in 0..d0 {
                        let g = gout.data()[i] / inner as f32;
                        data.extend(std::iter::repeat(g).take(inner));
                    }
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), data)?)?;
                }
            }
            Op::MaxTrailing(x) => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let d0 = xv.shape()[0];
                    let inner = xv.len() / d0.max(1);
                    let mut data = vec![0.0f32; xv.len()];
                    for i in 0..d0 {
                        let row = &xv.data()[i * inner..(i + 1) * inner];
                        let mut best = 0usize;
                        for (j, &v) in row.iter().enumerate() {
                            if v > row[best] {
                                best = j;
                            }
                        }
                        data[i * inner + best] = gout.data()[i];
                    }
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data)?)?;
                }
            }
            Op::Reshape(x) => {
                if self.needs(*x) {
                    let c = gout.reshape(self.value(*x).shape())?;
                    self.accumulate(grads, *x, c)?;
                }
            }
            Op::IndexAxis0 { x, index } => {
                if self.needs(*x) {
                    let xs = self.value(*x).shape();
                    let inner = self.value(*x).len() / xs[0].max(1);
                    let mut data = vec![0.0f32; self.value(*x).len()];
                    data[index * inner..(index + 1) * inner].copy_from_slice(gout.data());
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), data)?)?;
                }
            }
            Op::Stack(parts) => {
                let inner = if parts.is_empty() {
                    0
                } else {
                    self.value(parts[0]).len()
                };
                for (i, &p) in parts.iter().enumerate() {
                    if self.needs(p) {
                        let slice = gout.data()[i * inner..(i + 1) * inner].to_vec();
                        let c = Tensor::new(self.value(p).shape().to_vec(), slice)?;
                        self.accumulate(grads, p, c)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: &[usize], data: Vec<f32>) -> Var {
        tape.leaf(Tensor::new(shape.to_vec(), data).unwrap(), true)
            .unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0f32; 6]);
    }

    #[test]
    fn disconnected_leaf_reads_back_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1., 2.]);
        let w = leaf(&mut tape, &[3], vec![1., 2., 3.]);
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(w).is_none());
        assert_eq!(grads.for_leaf(&tape, w).data(), &[0.0f32; 3]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1., 2.]);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn mul_broadcast_gradients_reduce() {
        // loss = sum((2,3) * (3,)) ; d/drow = column sums of the matrix.
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let b = leaf(&mut tape, &[3], vec![10., 20., 30.]);
        let prod = tape.mul(a, b).unwrap();
        let loss = tape.sum(prod).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[5., 7., 9.]);
        assert_eq!(grads.get(a).unwrap().data(), &[10., 20., 30., 10., 20., 30.]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1], vec![0.0]);
        let y = tape.sigmoid(x).unwrap();
        assert!((tape.value(y).data()[0] - 0.5).abs() < 1e-7);
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!((grads.get(x).unwrap().data()[0] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![-1.0, 2.0]);
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn matmul_gradients_match_manual() {
        // loss = sum(A B): dA = ones * B^T, dB = A^T * ones.
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2, 2], vec![1., 2., 3., 4.]);
        let b = leaf(&mut tape, &[2, 2], vec![5., 6., 7., 8.]);
        let y = tape.matmul(a, b).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[11., 15., 11., 15.]);
        assert_eq!(grads.get(b).unwrap().data(), &[4., 4., 6., 6.]);
    }

    #[test]
    fn stack_and_index_roundtrip_gradients() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2], vec![1., 2.]);
        let b = leaf(&mut tape, &[2], vec![3., 4.]);
        let s = tape.stack(&[a, b]).unwrap();
        assert_eq!(tape.value(s).shape(), &[2, 2]);
        let row = tape.index_axis0(s, 1).unwrap();
        let loss = tape.sum(row).unwrap();
        let grads = tape.backward(loss).unwrap();
        // `a` is reachable through the stack but unused by the loss.
        assert_eq!(grads.for_leaf(&tape, a).data(), &[0., 0.]);
        assert_eq!(grads.get(b).unwrap().data(), &[1., 1.]);
    }

    #[test]
    fn spike_is_exactly_binary_for_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let data: Vec<f32> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let u = leaf(&mut tape, &[64], data);
        let o = tape.spike(u, 0.3, 1.0).unwrap();
        assert!(tape
            .value(o)
            .data()
            .iter()
            .all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn leaf_rejects_non_finite() {
        let mut tape = Tape::new();
        let bad = Tensor::new(vec![1], vec![f32::INFINITY]).unwrap();
        assert!(tape.leaf(bad, false).is_err());
    }
}
