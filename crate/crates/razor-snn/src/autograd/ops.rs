//! Pure tensor kernels shared by the tape and by direct callers.
//!
//! Every kernel here is a plain function of its inputs; the tape records
//! which kernel produced a node and replays the matching backward rule.
//! Accumulations run in `f64` and round once on store.

use super::tensor::{Result, Tensor, TensorError};

/// Heaviside spike: 1 where `u >= v_th`, else 0. The boundary fires.
pub fn spike_forward(u: &Tensor, v_th: f32) -> Tensor {
    u.map(|x| if x >= v_th { 1.0 } else { 0.0 })
}

/// Rectangular surrogate gradient for the spike nonlinearity:
/// `grad_in = grad_out * (1/width) * 1{|u - v_th| < width/2}`.
///
/// This is the derivative of the piecewise-linear ramp relaxation of the
/// Heaviside step; it is used only in the backward pass.
pub fn spike_backward(grad_out: &Tensor, u: &Tensor, v_th: f32, width: f32) -> Result<Tensor> {
    if grad_out.shape() != u.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "spike_backward",
            lhs: grad_out.shape().to_vec(),
            rhs: u.shape().to_vec(),
        });
    }
    if !(width > 0.0) {
        return Err(TensorError::Invalid {
            what: "surrogate width",
            why: format!("must be positive, got {width}"),
        });
    }
    let half = width * 0.5;
    let scale = 1.0 / width;
    let data = grad_out
        .data()
        .iter()
        .zip(u.data().iter())
        .map(|(&g, &x)| if (x - v_th).abs() < half { g * scale } else { 0.0 })
        .collect();
    Tensor::new(u.shape().to_vec(), data)
}

fn conv2d_out_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(TensorError::Invalid {
            what: "conv2d stride",
            why: "must be at least 1".into(),
        });
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(TensorError::Invalid {
            what: "conv2d geometry",
            why: format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {padding})"),
        });
    }
    Ok((
        (h + 2 * padding - kh) / stride + 1,
        (w + 2 * padding - kw) / stride + 1,
    ))
}

/// Receptive-field patches laid out as rows: `(oh * ow, c_in * kh * kw)`,
/// zero-filled where the padded window leaves the input.
fn im2col(
    x: &Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let patch = c_in * kh * kw;
    let xd = x.data();
    let mut cols = vec![0.0f32; oh * ow * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * patch..][..patch];
            let mut l = 0;
            for ci in 0..c_in {
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy as usize >= h {
                        l += kw;
                        continue;
                    }
                    let xrow = &xd[(ci * h + iy as usize) * w..][..w];
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && (ix as usize) < w {
                            row[l] = xrow[ix as usize];
                        }
                        l += 1;
                    }
                }
            }
        }
    }
    cols
}

/// 2-D cross-correlation of `x: (C_in, H, W)` with `k: (C_out, C_in, kh, kw)`.
pub fn conv2d(x: &Tensor, k: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 || k.rank() != 4 || x.shape()[0] != k.shape()[1] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: x.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (oh, ow) = conv2d_out_dims(h, w, kh, kw, stride, padding)?;

    let c_in = k.shape()[1];
    let kd = k.data();
    if stride == 1 {
        // Weight-stationary sweep; rows stay contiguous at unit stride.
        let xd = x.data();
        let mut acc = vec![0.0f64; c_out * oh * ow];
        for co in 0..c_out {
            for ci in 0..c_in {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let weight = kd[((co * c_in + ci) * kh + ky) * kw + kx] as f64;
                        if weight == 0.0 {
                            continue;
                        }
                        let ox_lo = padding.saturating_sub(kx);
                        let ox_hi = (w + padding).saturating_sub(kx).min(ow);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy + ky) as isize - padding as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            let ix0 = ox_lo + kx - padding;
                            let n = ox_hi - ox_lo;
                            let xrow = &xd[(ci * h + iy as usize) * w + ix0..][..n];
                            let orow = &mut acc[(co * oh + oy) * ow + ox_lo..][..n];
                            for (o, &xv) in orow.iter_mut().zip(xrow) {
                                *o += weight * xv as f64;
                            }
                        }
                    }
                }
            }
        }
        return Tensor::new(
            vec![c_out, oh, ow],
            acc.into_iter().map(|v| v as f32).collect(),
        );
    }

    let patch = c_in * kh * kw;
    let cols = im2col(x, kh, kw, stride, padding, oh, ow);
    let mut out = vec![0.0f32; c_out * oh * ow];
    for co in 0..c_out {
        let krow = &kd[co * patch..][..patch];
        let orow = &mut out[co * oh * ow..][..oh * ow];
        for (o, col) in orow.iter_mut().zip(cols.chunks_exact(patch)) {
            let mut acc = 0.0f64;
            for (&kv, &cv) in krow.iter().zip(col) {
                acc += kv as f64 * cv as f64;
            }
            *o = acc as f32;
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

/// Gradients of [`conv2d`] with respect to the input and kernel.
/// Either output may be skipped by passing `false`.
pub fn conv2d_backward(
    x: &Tensor,
    k: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    want_gx: bool,
    want_gk: bool,
) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (oh, ow) = conv2d_out_dims(h, w, kh, kw, stride, padding)?;
    debug_assert_eq!(grad_out.shape(), &[c_out, oh, ow]);

    let kd = k.data();
    let gd = grad_out.data();
    let patch = c_in * kh * kw;
    let positions = oh * ow;

    let gk = if want_gk {
        // gk[co, :] = sum_j gout[co, j] * patch_row_j
        let cols = im2col(x, kh, kw, stride, padding, oh, ow);
        let mut gk = vec![0.0f64; c_out * patch];
        for co in 0..c_out {
            let grow = &gd[co * positions..][..positions];
            let krow = &mut gk[co * patch..][..patch];
            for (&g, col) in grow.iter().zip(cols.chunks_exact(patch)) {
                if g == 0.0 {
                    continue;
                }
                let g = g as f64;
                for (acc, &cv) in krow.iter_mut().zip(col) {
                    *acc += g * cv as f64;
                }
            }
        }
        Some(Tensor::new(
            k.shape().to_vec(),
            gk.into_iter().map(|v| v as f32).collect(),
        )?)
    } else {
        None
    };

    let gx = if want_gx {
        // gcols[j, :] = sum_co gout[co, j] * k[co, :], scattered back onto
        // the input through the patch layout.
        let mut gx = vec![0.0f64; c_in * h * w];
        let mut gcol = vec![0.0f64; patch];
        for j in 0..positions {
            gcol.iter_mut().for_each(|v| *v = 0.0);
            for co in 0..c_out {
                let g = gd[co * positions + j];
                if g == 0.0 {
                    continue;
                }
                let g = g as f64;
                let krow = &kd[co * patch..][..patch];
                for (acc, &kv) in gcol.iter_mut().zip(krow) {
                    *acc += g * kv as f64;
                }
            }
            let (oy, ox) = (j / ow, j % ow);
            let mut l = 0;
            for ci in 0..c_in {
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy as usize >= h {
                        l += kw;
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && (ix as usize) < w {
                            gx[base + ix as usize] += gcol[l];
                        }
                        l += 1;
                    }
                }
            }
        }
        Some(Tensor::new(
            x.shape().to_vec(),
            gx.into_iter().map(|v| v as f32).collect(),
        )?)
    } else {
        None
    };
    Ok((gx, gk))
}

/// 1-D correlation along a length-`T` signal with an odd-length kernel and
/// edge-replicated same padding, so the output is also length `T` and a
/// constant signal stays constant. The kernel tensor may carry leading unit
/// axes (e.g. `(1, 1, k)`).
pub fn conv1d_same(x: &Tensor, k: &Tensor) -> Result<Tensor> {
    if x.rank() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "conv1d_same",
            lhs: x.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let klen = k.len();
    if klen % 2 == 0 || klen == 0 {
        return Err(TensorError::Invalid {
            what: "conv1d kernel",
            why: format!("length must be odd and positive, got {klen}"),
        });
    }
    let t = x.len();
    let half = klen / 2;
    let xd = x.data();
    let kd = k.data();
    let mut out = vec![0.0f32; t];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for (j, &w) in kd.iter().enumerate() {
            let src = (i as isize + j as isize - half as isize).clamp(0, t as isize - 1);
            acc += w as f64 * xd[src as usize] as f64;
        }
        *slot = acc as f32;
    }
    Tensor::new(vec![t], out)
}

/// Gradients of [`conv1d_same`].
pub fn conv1d_same_backward(
    x: &Tensor,
    k: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let t = x.len();
    let klen = k.len();
    let half = klen / 2;
    let xd = x.data();
    let kd = k.data();
    let gd = grad_out.data();
    let mut gx = vec![0.0f64; t];
    let mut gk = vec![0.0f64; klen];
    for i in 0..t {
        let g = gd[i] as f64;
        for j in 0..klen {
            let src = (i as isize + j as isize - half as isize).clamp(0, t as isize - 1);
            gx[src as usize] += kd[j] as f64 * g;
            gk[j] += xd[src as usize] as f64 * g;
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), gx.into_iter().map(|v| v as f32).collect())?,
        Tensor::new(k.shape().to_vec(), gk.into_iter().map(|v| v as f32).collect())?,
    ))
}

/// Matrix product `(m, k) x (k, n) -> (m, n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, kdim, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0f32; m * n];
    if n == 1 {
        // Matrix-vector: one contiguous dot per row.
        for i in 0..m {
            let row = &ad[i * kdim..][..kdim];
            let mut acc = 0.0f64;
            for (&av, &bv) in row.iter().zip(bd) {
                acc += av as f64 * bv as f64;
            }
            out[i] = acc as f32;
        }
    } else {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for l in 0..kdim {
                    acc += ad[i * kdim + l] as f64 * bd[l * n + j] as f64;
                }
                out[i * n + j] = acc as f32;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a * b^T` for `a: (m, k)`, `b: (n, k)`.
pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, kdim) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[0];
    debug_assert_eq!(b.shape()[1], kdim);
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0f32; m * n];
    if kdim == 1 {
        // Outer product of two columns.
        for i in 0..m {
            let av = ad[i];
            let row = &mut out[i * n..][..n];
            for (o, &bv) in row.iter_mut().zip(bd) {
                *o = av * bv;
            }
        }
    } else {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for l in 0..kdim {
                    acc += ad[i * kdim + l] as f64 * bd[j * kdim + l] as f64;
                }
                out[i * n + j] = acc as f32;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a^T * b` for `a: (k, m)`, `b: (k, n)`.
pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (kdim, m) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    debug_assert_eq!(b.shape()[0], kdim);
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for l in 0..kdim {
                acc += ad[l * m + i] as f64 * bd[l * n + j] as f64;
            }
            out[i * n + j] = acc as f32;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Numerically stable softmax along `axis`; lanes are normalized in `f64`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(TensorError::Axis {
            axis,
            shape: x.shape().to_vec(),
        });
    }
    let axis_len = x.shape()[axis];
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let xd = x.data();
    let mut out = vec![0.0f32; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut max = f64::NEG_INFINITY;
            for a in 0..axis_len {
                max = max.max(xd[base + a * inner] as f64);
            }
            let mut denom = 0.0f64;
            for a in 0..axis_len {
                denom += (xd[base + a * inner] as f64 - max).exp();
            }
            for a in 0..axis_len {
                out[base + a * inner] = ((xd[base + a * inner] as f64 - max).exp() / denom) as f32;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Softmax backward per lane: `gx = y * (g - sum(g * y))`.
pub(crate) fn softmax_backward(y: &Tensor, grad_out: &Tensor, axis: usize) -> Result<Tensor> {
    let axis_len = y.shape()[axis];
    let inner: usize = y.shape()[axis + 1..].iter().product();
    let outer: usize = y.shape()[..axis].iter().product();
    let yd = y.data();
    let gd = grad_out.data();
    let mut out = vec![0.0f32; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut dot = 0.0f64;
            for a in 0..axis_len {
                let idx = base + a * inner;
                dot += gd[idx] as f64 * yd[idx] as f64;
            }
            for a in 0..axis_len {
                let idx = base + a * inner;
                out[idx] = (yd[idx] as f64 * (gd[idx] as f64 - dot)) as f32;
            }
        }
    }
    Tensor::new(y.shape().to_vec(), out)
}

/// Non-overlapping average pooling over the trailing two axes of `(C, H, W)`.
pub fn avg_pool2d(x: &Tensor, size: usize) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "avg_pool2d",
            lhs: x.shape().to_vec(),
            rhs: vec![size],
        });
    }
    if size == 0 || x.shape()[1] < size || x.shape()[2] < size {
        return Err(TensorError::Invalid {
            what: "pool size",
            why: format!("size {size} incompatible with shape {:?}", x.shape()),
        });
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / size, w / size);
    let xd = x.data();
    let norm = 1.0f64 / (size * size) as f64;
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for dy in 0..size {
                    for dx in 0..size {
                        acc += xd[(ch * h + oy * size + dy) * w + ox * size + dx] as f64;
                    }
                }
                out[(ch * oh + oy) * ow + ox] = (acc * norm) as f32;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub(crate) fn avg_pool2d_backward(x_shape: &[usize], size: usize, grad_out: &Tensor) -> Tensor {
    let (c, h, w) = (x_shape[0], x_shape[1], x_shape[2]);
    let (oh, ow) = (h / size, w / size);
    let norm = 1.0 / (size * size) as f32;
    let gd = grad_out.data();
    let mut gx = vec![0.0f32; c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gd[(ch * oh + oy) * ow + ox] * norm;
                for dy in 0..size {
                    for dx in 0..size {
                        gx[(ch * h + oy * size + dy) * w + ox * size + dx] += g;
                    }
                }
            }
        }
    }
    Tensor::new(x_shape.to_vec(), gx).expect("pool backward shape")
}

/// Mean over all trailing axes, keeping axis 0: `(d0, ...) -> (d0,)`.
pub fn mean_trailing(x: &Tensor) -> Result<Tensor> {
    let d0 = *x.shape().first().ok_or(TensorError::Axis {
        axis: 0,
        shape: vec![],
    })?;
    let inner = x.len() / d0.max(1);
    let xd = x.data();
    let mut out = vec![0.0f32; d0];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for j in 0..inner {
            acc += xd[i * inner + j] as f64;
        }
        *slot = (acc / inner as f64) as f32;
    }
    Tensor::new(vec![d0], out)
}

/// Max over all trailing axes, keeping axis 0: `(d0, ...) -> (d0,)`.
pub fn max_trailing(x: &Tensor) -> Result<Tensor> {
    let d0 = *x.shape().first().ok_or(TensorError::Axis {
        axis: 0,
        shape: vec![],
    })?;
    let inner = x.len() / d0.max(1);
    let xd = x.data();
    let mut out = vec![0.0f32; d0];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut best = f32::NEG_INFINITY;
        for j in 0..inner {
            let v = xd[i * inner + j];
            if v > best {
                best = v;
            }
        }
        *slot = best;
    }
    Tensor::new(vec![d0], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_threshold_and_boundary() {
        let u = Tensor::new(vec![3], vec![0.35, 0.1, 0.3]).unwrap();
        let o = spike_forward(&u, 0.3);
        assert_eq!(o.data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn spike_large_negative_is_silent() {
        let u = Tensor::full(&[4], -1.0e30);
        assert!(spike_forward(&u, 0.3).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn surrogate_center_and_outside() {
        let g = Tensor::full(&[2], 1.0);
        let u = Tensor::new(vec![2], vec![0.3, 10.3]).unwrap();
        let gi = spike_backward(&g, &u, 0.3, 1.0).unwrap();
        assert_eq!(gi.data(), &[1.0, 0.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_zero_input() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::full(&[3, 2, 3, 3], 0.5);
        let y = conv2d(&x, &k, 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d(&x, &k, 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 4, 4]") && msg.contains("[1, 3, 3, 3]"));
    }

    #[test]
    fn softmax_uniform_input() {
        let x = Tensor::zeros(&[4]);
        let y = softmax(&x, 0).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_one_hot_limit() {
        let x = Tensor::new(vec![3], vec![1.0e3, 0.0, 0.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-6);
        assert!(y.data()[1].abs() < 1e-6 && y.data()[2].abs() < 1e-6);
    }

    #[test]
    fn max_trailing_places_single_max() {
        let mut x = Tensor::full(&[4, 2, 3, 3], 0.7);
        x.data_mut()[2 * 18 + 5] = 9.9;
        let s = max_trailing(&x).unwrap();
        assert_eq!(s.data(), &[0.7, 0.7, 9.9, 0.7]);
    }
}
