//! Dense row-major `f32` tensor of rank at most 4.
//!
//! Values are stored single precision; reductions and dot products
//! accumulate in `f64` before rounding back, which keeps the numeric
//! tolerances of downstream oracles tight without changing the storage
//! contract.

use thiserror::Error;

/// Maximum supported rank.
pub const MAX_RANK: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: operand shapes {lhs:?} and {rhs:?} are incompatible")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    Length { len: usize, shape: Vec<usize> },
    #[error("rank {0} exceeds the supported maximum of {MAX_RANK}")]
    Rank(usize),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op} expects a scalar, got shape {shape:?}")]
    NotScalar { op: &'static str, shape: Vec<usize> },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("index {index} out of range for axis 0 of shape {shape:?}")]
    Index { index: usize, shape: Vec<usize> },
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.len() > MAX_RANK {
            return Err(TensorError::Rank(shape.len()));
        }
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TensorError::Length {
                len: data.len(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Uniform values in `[lo, hi)` drawn from `rng` in row-major order.
    pub fn uniform<R: rand::Rng>(shape: &[usize], lo: f32, hi: f32, rng: &mut R) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f32> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar {
                op: "scalar_value",
                shape: self.shape.clone(),
            })
        }
    }

    /// Value at a full multi-index; for tests and small-tensor plumbing.
    pub fn at(&self, idx: &[usize]) -> f32 {
        debug_assert_eq!(idx.len(), self.rank());
        let mut flat = 0;
        for (i, &d) in idx.iter().zip(self.shape.iter()) {
            debug_assert!(*i < d);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.len() > MAX_RANK {
            return Err(TensorError::Rank(shape.len()));
        }
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise in-place accumulation; shapes must match exactly.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "add_assign",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    /// Sum of all elements, accumulated in `f64`.
    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Left-pad `shape` with ones up to `rank`.
fn pad_shape(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut out = vec![1; rank - shape.len()];
    out.extend_from_slice(shape);
    out
}

/// True when `small` (left-padded with ones) can be repeated along the
/// leading/unit axes to fill `big`.
fn broadcasts_into(small: &[usize], big: &[usize]) -> bool {
    if small.len() > big.len() {
        return false;
    }
    let padded = pad_shape(small, big.len());
    padded.iter().zip(big.iter()).all(|(&s, &b)| s == b || s == 1)
}

/// Row-major odometer over `shape`, paired with the flat index of a
/// broadcast operand whose padded shape is `small_padded`.
struct BroadcastIter {
    shape: Vec<usize>,
    small_strides: Vec<usize>,
    coords: Vec<usize>,
    small_idx: usize,
    done: bool,
}

impl BroadcastIter {
    fn new(big: &[usize], small_padded: &[usize]) -> Self {
        let rank = big.len();
        let mut small_strides = vec![0usize; rank];
        let mut stride = 1;
        for ax in (0..rank).rev() {
            if small_padded[ax] != 1 {
                small_strides[ax] = stride;
            }
            stride *= small_padded[ax];
        }
        let done = big.iter().product::<usize>() == 0;
        BroadcastIter {
            shape: big.to_vec(),
            small_strides,
            coords: vec![0; rank],
            small_idx: 0,
            done,
        }
    }

    fn step(&mut self) {
        for ax in (0..self.shape.len()).rev() {
            self.coords[ax] += 1;
            self.small_idx += self.small_strides[ax];
            if self.coords[ax] < self.shape[ax] {
                return;
            }
            self.small_idx -= self.small_strides[ax] * self.shape[ax];
            self.coords[ax] = 0;
        }
        self.done = true;
    }
}

/// Elementwise binary op with broadcasting: shapes must be equal, or the
/// smaller operand (left-padded with ones) must broadcast into the larger.
/// `f` is always called as `f(a_elem, b_elem)`.
pub(crate) fn broadcast_binary(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: impl Fn(f32, f32) -> f32,
) -> Result<Tensor> {
    if a.shape == b.shape {
        let data = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Ok(Tensor {
            shape: a.shape.clone(),
            data,
        });
    }
    if broadcasts_into(&b.shape, &a.shape) {
        let padded = pad_shape(&b.shape, a.shape.len());
        let mut it = BroadcastIter::new(&a.shape, &padded);
        let mut data = Vec::with_capacity(a.data.len());
        let mut flat = 0;
        while !it.done {
            data.push(f(a.data[flat], b.data[it.small_idx]));
            flat += 1;
            it.step();
        }
        return Ok(Tensor {
            shape: a.shape.clone(),
            data,
        });
    }
    if broadcasts_into(&a.shape, &b.shape) {
        let padded = pad_shape(&a.shape, b.shape.len());
        let mut it = BroadcastIter::new(&b.shape, &padded);
        let mut data = Vec::with_capacity(b.data.len());
        let mut flat = 0;
        while !it.done {
            data.push(f(a.data[it.small_idx], b.data[flat]));
            flat += 1;
            it.step();
        }
        return Ok(Tensor {
            shape: b.shape.clone(),
            data,
        });
    }
    Err(TensorError::ShapeMismatch {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    })
}

/// Reduce a gradient of broadcast-output shape back to the operand shape by
/// summing over the repeated axes.
pub(crate) fn reduce_to_shape(grad: &Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let padded = pad_shape(target, grad.rank());
    let target_len: usize = target.iter().product();
    let mut out = vec![0.0f32; target_len];
    let mut it = BroadcastIter::new(grad.shape(), &padded);
    let mut flat = 0;
    while !it.done {
        out[it.small_idx] += grad.data[flat];
        flat += 1;
        it.step();
    }
    Tensor {
        shape: target.to_vec(),
        data: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn new_rejects_rank_over_four() {
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn broadcast_row_vector_over_matrix() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(vec![3], vec![10., 20., 30.]).unwrap();
        let out = broadcast_binary(&a, &b, "mul", |x, y| x * y).unwrap();
        assert_eq!(out.data(), &[10., 40., 90., 40., 100., 180.]);
    }

    #[test]
    fn broadcast_column_vector_over_matrix() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![10., 100.]).unwrap();
        let out = broadcast_binary(&a, &b, "mul", |x, y| x * y).unwrap();
        assert_eq!(out.data(), &[10., 20., 30., 400., 500., 600.]);
    }

    #[test]
    fn broadcast_rejects_incompatible() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2]);
        assert!(broadcast_binary(&a, &b, "add", |x, y| x + y).is_err());
    }

    #[test]
    fn reduce_undoes_broadcast() {
        let g = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let r = reduce_to_shape(&g, &[3]);
        assert_eq!(r.data(), &[5., 7., 9.]);
        let r = reduce_to_shape(&g, &[2, 1]);
        assert_eq!(r.data(), &[6., 15.]);
    }

    #[test]
    fn finite_check_flags_nan() {
        let t = Tensor::new(vec![2], vec![1.0, f32::NAN]).unwrap();
        assert!(t.check_finite("test").is_err());
    }
}
