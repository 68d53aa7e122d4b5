//! Forward maps and their exact adjoints.
//!
//! Convolutions are `1×k` along the width axis only, zero-padded to "same"
//! size, with an optional stride of 2 along the width. Weights are laid out
//! `[c_out][c_in][k]`; fully connected weights are `[m][n]` row-major.

use super::tensor::{ensure_finite, Real, Tensor};
use crate::{Error, Result};

fn check_conv<T: Real>(
    x: &Tensor<T>,
    w_len: usize,
    b_len: usize,
    c_out: usize,
    k: usize,
    stride: usize,
) -> Result<()> {
    if k.is_multiple_of(2) {
        return Err(Error::shape(format!("kernel width {k} must be odd")));
    }
    if stride != 1 && stride != 2 {
        return Err(Error::shape(format!("stride {stride} not in {{1, 2}}")));
    }
    if !x.width.is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "width {} not divisible by stride {stride}",
            x.width
        )));
    }
    if w_len != c_out * x.channels * k || b_len != c_out {
        return Err(Error::shape(format!(
            "conv weights {w_len}/bias {b_len} do not match {}->{c_out} channels, k={k}",
            x.channels
        )));
    }
    Ok(())
}

/// Dot product with independent partial sums so the loop vectorizes.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports every feature the callee is compiled for.
        return unsafe { dot_avx2(a, b) };
    }
    dot_impl(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2<T: Real>(a: &[T], b: &[T]) -> T {
    dot_impl(a, b)
}

#[inline(always)]
fn dot_impl<T: Real>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let mut sum = T::zero();
    for v in acc {
        sum += v;
    }
    sum + tail
}

/// Valid output positions `t` for kernel tap `u`: `0 <= stride·t + u − pad < width`.
#[inline]
fn tap_range(u: usize, pad: usize, stride: usize, width: usize, out_w: usize) -> (usize, usize) {
    let lo = if u >= pad { 0 } else { (pad - u).div_ceil(stride) };
    // stride·t + u − pad <= width − 1
    let hi = if width + pad > u {
        ((width + pad - u - 1) / stride + 1).min(out_w)
    } else {
        0
    };
    (lo, hi.max(lo))
}

const BLOCK: usize = 32;

/// Copies every `(channel, row)` of `x` into a zero-padded row long enough
/// for whole blocks, so blocked kernels never go out of bounds.
fn pad_rows<T: Real>(x: &Tensor<T>, pad: usize) -> (Vec<T>, usize) {
    let len = x.width.div_ceil(BLOCK) * BLOCK + 2 * pad;
    let mut out = vec![T::zero(); x.channels * x.height * len];
    if x.width > 0 {
        for (dst, src) in out.chunks_exact_mut(len).zip(x.data.chunks_exact(x.width)) {
            dst[pad..pad + x.width].copy_from_slice(src);
        }
    }
    (out, len)
}

/// Stride-1 "same" convolution over padded rows. `w` is `[c_out][c_in][k]`.
///
/// On x86-64 CPUs with AVX2 the same code is compiled a second time with
/// wider vectors; the arithmetic and its order are identical either way.
#[allow(clippy::too_many_arguments)]
fn conv_same<T: Real>(
    xp: &[T],
    row_len: usize,
    c_in: usize,
    height: usize,
    width: usize,
    w: &[T],
    bias: Option<&[T]>,
    c_out: usize,
    k: usize,
) -> Tensor<T> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports every feature the callee is compiled for.
        return unsafe { conv_same_avx2(xp, row_len, c_in, height, width, w, bias, c_out, k) };
    }
    conv_same_impl(xp, row_len, c_in, height, width, w, bias, c_out, k)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn conv_same_avx2<T: Real>(
    xp: &[T],
    row_len: usize,
    c_in: usize,
    height: usize,
    width: usize,
    w: &[T],
    bias: Option<&[T]>,
    c_out: usize,
    k: usize,
) -> Tensor<T> {
    conv_same_impl(xp, row_len, c_in, height, width, w, bias, c_out, k)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn conv_same_impl<T: Real>(
    xp: &[T],
    row_len: usize,
    c_in: usize,
    height: usize,
    width: usize,
    w: &[T],
    bias: Option<&[T]>,
    c_out: usize,
    k: usize,
) -> Tensor<T> {
    let mut y = Vec::with_capacity(c_out * height * width);
    for o in 0..c_out {
        let b0 = bias.map_or(T::zero(), |b| b[o]);
        for r in 0..height {
            let mut tb = 0;
            while tb < width {
                let mut acc = [b0; BLOCK];
                for i in 0..c_in {
                    let start = (i * height + r) * row_len + tb;
                    let xr = &xp[start..start + BLOCK + k - 1];
                    let wk = &w[(o * c_in + i) * k..(o * c_in + i + 1) * k];
                    for (u, &wv) in wk.iter().enumerate() {
                        let xs = &xr[u..u + BLOCK];
                        for j in 0..BLOCK {
                            acc[j] += wv * xs[j];
                        }
                    }
                }
                y.extend_from_slice(&acc[..BLOCK.min(width - tb)]);
                tb += BLOCK;
            }
        }
    }
    Tensor {
        channels: c_out,
        height,
        width,
        data: y,
    }
}

/// `dw[o,i,u] += Σ_{r,t} dy[o,r,t] · xp[i, r, t + u]` over padded rows.
///
/// `dp` is `dy` padded by [`pad_rows`] with no margin, so both operands can
/// be read in whole blocks; the zero tail adds nothing.
fn weight_grad<T: Real>(xp: &[T], row_len: usize, dp: &[T], dy: &Tensor<T>, c_in: usize, k: usize, dw: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports every feature the callee is compiled for.
        return unsafe { weight_grad_avx2(xp, row_len, dp, dy, c_in, k, dw) };
    }
    weight_grad_impl(xp, row_len, dp, dy, c_in, k, dw)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn weight_grad_avx2<T: Real>(
    xp: &[T],
    row_len: usize,
    dp: &[T],
    dy: &Tensor<T>,
    c_in: usize,
    k: usize,
    dw: &mut [T],
) {
    weight_grad_impl(xp, row_len, dp, dy, c_in, k, dw)
}

#[inline(always)]
fn weight_grad_impl<T: Real>(xp: &[T], row_len: usize, dp: &[T], dy: &Tensor<T>, c_in: usize, k: usize, dw: &mut [T]) {
    let (c_out, height, width) = dy.shape();
    let dy_len = width.div_ceil(BLOCK) * BLOCK;
    for o in 0..c_out {
        for i in 0..c_in {
            for u in 0..k {
                let mut acc = [T::zero(); BLOCK];
                for r in 0..height {
                    let grow = &dp[(o * height + r) * dy_len..(o * height + r + 1) * dy_len];
                    let xstart = (i * height + r) * row_len + u;
                    let xrow = &xp[xstart..xstart + dy_len];
                    for (g, x) in grow.chunks_exact(BLOCK).zip(xrow.chunks_exact(BLOCK)) {
                        for j in 0..BLOCK {
                            acc[j] += g[j] * x[j];
                        }
                    }
                }
                dw[(o * c_in + i) * k + u] += acc.iter().fold(T::zero(), |a, &v| a + v);
            }
        }
    }
}

/// `y[o,r,t] = b[o] + Σ_{i,u} w[o,i,u] · x[i, r, stride·t + u − (k−1)/2]`.
pub fn conv1xk_forward<T: Real>(
    x: &Tensor<T>,
    w: &[T],
    b: &[T],
    c_out: usize,
    k: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    check_conv(x, w.len(), b.len(), c_out, k, stride)?;
    let (c_in, height, width) = x.shape();
    let pad = (k - 1) / 2;
    let y = if stride == 1 {
        let (xp, row_len) = pad_rows(x, pad);
        conv_same(&xp, row_len, c_in, height, width, w, Some(b), c_out, k)
    } else {
        let out_w = width / stride;
        let mut y = Tensor::zeros(c_out, height, out_w);
        for o in 0..c_out {
            for r in 0..height {
                let yrow = y.row_mut(o, r);
                yrow.iter_mut().for_each(|v| *v = b[o]);
                for i in 0..c_in {
                    let xrow = x.row(i, r);
                    let wk = &w[(o * c_in + i) * k..(o * c_in + i + 1) * k];
                    for (u, &wv) in wk.iter().enumerate() {
                        let (lo, hi) = tap_range(u, pad, stride, width, out_w);
                        for t in lo..hi {
                            yrow[t] += wv * xrow[stride * t + u - pad];
                        }
                    }
                }
            }
        }
        y
    };
    ensure_finite(&y.data, "conv1xk")?;
    Ok(y)
}

/// Adjoint of [`conv1xk_forward`]. Accumulates into `dw`/`db` and returns the
/// input gradient.
pub fn conv1xk_backward<T: Real>(
    x: &Tensor<T>,
    w: &[T],
    dy: &Tensor<T>,
    k: usize,
    stride: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Result<Tensor<T>> {
    let c_out = dy.channels;
    check_conv(x, w.len(), db.len(), c_out, k, stride)?;
    let (c_in, height, width) = x.shape();
    let out_w = width / stride;
    if dy.height != height || dy.width != out_w || dw.len() != w.len() {
        return Err(Error::shape("conv upstream gradient does not match output"));
    }
    let pad = (k - 1) / 2;
    for (o, d) in db.iter_mut().enumerate() {
        for r in 0..height {
            *d += dy.row(o, r).iter().copied().sum();
        }
    }
    if stride == 1 {
        let (xp, row_len) = pad_rows(x, pad);
        let (dp, _) = pad_rows(dy, 0);
        weight_grad(&xp, row_len, &dp, dy, c_in, k, dw);
        // The input gradient is a same-size convolution of `dy` with the
        // flipped, channel-transposed kernel.
        let mut wt = vec![T::zero(); w.len()];
        for o in 0..c_out {
            for i in 0..c_in {
                for u in 0..k {
                    wt[(i * c_out + o) * k + (k - 1 - u)] = w[(o * c_in + i) * k + u];
                }
            }
        }
        let (gp, g_len) = pad_rows(dy, pad);
        return Ok(conv_same(&gp, g_len, c_out, height, width, &wt, None, c_in, k));
    }
    let mut dx = Tensor::zeros(c_in, height, width);
    for o in 0..c_out {
        for r in 0..height {
            let dyrow = dy.row(o, r);
            for i in 0..c_in {
                let base = (o * c_in + i) * k;
                let xrow = x.row(i, r);
                for u in 0..k {
                    let (lo, hi) = tap_range(u, pad, stride, width, out_w);
                    let wv = w[base + u];
                    let mut acc = T::zero();
                    for t in lo..hi {
                        acc += dyrow[t] * xrow[stride * t + u - pad];
                    }
                    let dxrow = dx.row_mut(i, r);
                    for t in lo..hi {
                        dxrow[stride * t + u - pad] += wv * dyrow[t];
                    }
                    dw[base + u] += acc;
                }
            }
        }
    }
    Ok(dx)
}

/// `y = W·x + b` with `W` of shape `m × n`.
pub fn fc_forward<T: Real>(x: &[T], w: &[T], b: &[T]) -> Result<Vec<T>> {
    let n = x.len();
    let m = b.len();
    if w.len() != m * n {
        return Err(Error::shape(format!(
            "fc weights {} do not match {n}->{m}",
            w.len()
        )));
    }
    let y: Vec<T> = w
        .chunks_exact(n.max(1))
        .take(m)
        .zip(b)
        .map(|(row, &bias)| bias + dot(row, x))
        .collect();
    let y = if n == 0 { b.to_vec() } else { y };
    ensure_finite(&y, "fully_connected")?;
    Ok(y)
}

/// Adjoint of [`fc_forward`]; accumulates parameter gradients.
pub fn fc_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Result<Vec<T>> {
    let n = x.len();
    let m = dy.len();
    if w.len() != m * n || dw.len() != w.len() || db.len() != m {
        return Err(Error::shape("fc gradient buffers do not match layer"));
    }
    let mut dx = vec![T::zero(); n];
    for j in 0..m {
        let g = dy[j];
        db[j] += g;
        let row = &w[j * n..(j + 1) * n];
        let drow = &mut dw[j * n..(j + 1) * n];
        for ((d, &xv), (dxv, &wv)) in drow.iter_mut().zip(x).zip(dx.iter_mut().zip(row)) {
            *d += g * xv;
            *dxv += g * wv;
        }
    }
    Ok(dx)
}

/// `y = x` for `x ≥ 0`, `slope·x` otherwise.
pub fn leaky_relu<T: Real>(x: &[T], slope: T) -> Vec<T> {
    x.iter()
        .map(|&v| v.max(T::zero()) + slope * v.min(T::zero()))
        .collect()
}

/// Gradient through the activation given its pre-activation input `z`.
/// The derivative at exactly zero is taken as `slope`.
pub fn leaky_relu_backward<T: Real>(z: &[T], dy: &[T], slope: T) -> Vec<T> {
    z.iter()
        .zip(dy)
        .map(|(&v, &g)| g * if v > T::zero() { T::one() } else { slope })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Direct evaluation of the convolution sum, independent of the fast path.
    fn conv_reference(
        x: &Tensor<f64>,
        w: &[f64],
        b: &[f64],
        c_out: usize,
        k: usize,
        stride: usize,
    ) -> Tensor<f64> {
        let pad = (k - 1) as i64 / 2;
        let out_w = x.width / stride;
        let mut y = Tensor::zeros(c_out, x.height, out_w);
        for o in 0..c_out {
            for r in 0..x.height {
                for t in 0..out_w {
                    let mut acc = b[o];
                    for i in 0..x.channels {
                        for u in 0..k {
                            let pos = (stride * t) as i64 + u as i64 - pad;
                            if pos >= 0 && (pos as usize) < x.width {
                                acc += w[(o * x.channels + i) * k + u] * x.row(i, r)[pos as usize];
                            }
                        }
                    }
                    y.row_mut(o, r)[t] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(2, 3, 6, rand_vec(&mut rng, 36)).unwrap();
        // k=1, w = I (2x2), b = 0
        let w = vec![1.0, 0.0, 0.0, 1.0];
        let y = conv1xk_forward(&x, &w, &[0.0, 0.0], 2, 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::<f64>::zeros(1, 2, 8);
        let w = vec![0.5; 2 * 7];
        let y = conv1xk_forward(&x, &w, &[0.25, -1.5], 2, 7, 2).unwrap();
        assert_eq!(y.shape(), (2, 2, 4));
        assert!(y.row(0, 1).iter().all(|&v| v == 0.25));
        assert!(y.row(1, 0).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn forward_matches_reference_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(c_in, c_out, k, stride, width) in
            &[(1, 2, 7, 1, 16), (2, 2, 5, 1, 8), (2, 1, 3, 2, 8), (3, 4, 3, 2, 2), (1, 1, 7, 1, 3)]
        {
            let x = Tensor::from_vec(c_in, 2, width, rand_vec(&mut rng, c_in * 2 * width)).unwrap();
            let w = rand_vec(&mut rng, c_out * c_in * k);
            let b = rand_vec(&mut rng, c_out);
            let fast = conv1xk_forward(&x, &w, &b, c_out, k, stride).unwrap();
            let slow = conv_reference(&x, &w, &b, c_out, k, stride);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(1, 2, 7);
        assert!(conv1xk_forward(&x, &[0.0; 3], &[0.0], 1, 3, 2).is_err());
        let x = Tensor::<f64>::zeros(1, 2, 8);
        assert!(conv1xk_forward(&x, &[0.0; 4], &[0.0], 1, 4, 1).is_err());
        assert!(conv1xk_forward(&x, &[0.0; 2], &[0.0], 1, 3, 1).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let x = Tensor::from_vec(1, 1, 2, vec![f64::MAX, f64::MAX]).unwrap();
        let r = conv1xk_forward(&x, &[1.0, 1.0, 1.0], &[0.0], 1, 3, 1);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    /// Central-difference check of conv adjoints against the scalar
    /// `L = Σ g ⊙ y` for a fixed random upstream `g`.
    fn check_conv_grad(c_in: usize, c_out: usize, k: usize, stride: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, width) = (2, 8);
        let x = Tensor::from_vec(c_in, h, width, rand_vec(&mut rng, c_in * h * width)).unwrap();
        let w = rand_vec(&mut rng, c_out * c_in * k);
        let b = rand_vec(&mut rng, c_out);
        let g = Tensor::from_vec(c_out, h, width / stride, rand_vec(&mut rng, c_out * h * width / stride))
            .unwrap();
        let loss = |x: &Tensor<f64>, w: &[f64], b: &[f64]| -> f64 {
            let y = conv_reference(x, w, b, c_out, k, stride);
            y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum()
        };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; b.len()];
        let dx = conv1xk_backward(&x, &w, &g, k, stride, &mut dw, &mut db).unwrap();
        let eps = 1e-5;
        for i in 0..x.data.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data[i] += eps;
            xm.data[i] -= eps;
            let num = (loss(&xp, &w, &b) - loss(&xm, &w, &b)) / (2.0 * eps);
            assert!(rel_err(dx.data[i], num) < 1e-4, "dx[{i}] {} vs {num}", dx.data[i]);
        }
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += eps;
            wm[i] -= eps;
            let num = (loss(&x, &wp, &b) - loss(&x, &wm, &b)) / (2.0 * eps);
            assert!(rel_err(dw[i], num) < 1e-4, "dw[{i}]");
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += eps;
            bm[i] -= eps;
            let num = (loss(&x, &w, &bp) - loss(&x, &w, &bm)) / (2.0 * eps);
            assert!(rel_err(db[i], num) < 1e-4, "db[{i}]");
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        check_conv_grad(2, 2, 3, 1, 10);
        check_conv_grad(2, 1, 3, 2, 11);
        check_conv_grad(1, 2, 7, 1, 12);
        check_conv_grad(2, 2, 5, 1, 13);
    }

    #[test]
    fn fc_identity() {
        let x = vec![1.0, -2.0, 3.0];
        let w = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(fc_forward(&x, &w, &[0.0; 3]).unwrap(), x);
        assert!(fc_forward(&x, &w[..6], &[0.0; 3]).is_err());
    }

    #[test]
    fn fc_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, m) = (4, 2);
        let x = rand_vec(&mut rng, n);
        let w = rand_vec(&mut rng, m * n);
        let b = rand_vec(&mut rng, m);
        let g = rand_vec(&mut rng, m);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
            fc_forward(x, w, b).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; m];
        let dx = fc_backward(&x, &w, &g, &mut dw, &mut db).unwrap();
        let eps = 1e-5;
        for i in 0..n {
            let (mut p, mut q) = (x.clone(), x.clone());
            p[i] += eps;
            q[i] -= eps;
            let num = (loss(&p, &w, &b) - loss(&q, &w, &b)) / (2.0 * eps);
            assert!(rel_err(dx[i], num) < 1e-4);
        }
        for i in 0..w.len() {
            let (mut p, mut q) = (w.clone(), w.clone());
            p[i] += eps;
            q[i] -= eps;
            let num = (loss(&x, &p, &b) - loss(&x, &q, &b)) / (2.0 * eps);
            assert!(rel_err(dw[i], num) < 1e-4);
        }
        assert_eq!(db, g);
    }

    #[test]
    fn fc_bias_gradient_sums_over_batch() {
        let w = vec![0.3f64, -0.2];
        let mut dw = vec![0.0; 2];
        let mut db = vec![0.0; 1];
        for (x, g) in [([1.0, 2.0], 0.5), ([-1.0, 0.0], -2.0), ([0.2, 0.1], 1.25)] {
            fc_backward(&x, &w, &[g], &mut dw, &mut db).unwrap();
        }
        assert!((db[0] - (0.5 - 2.0 + 1.25)).abs() < 1e-15);
    }

    #[test]
    fn leaky_relu_values_and_gradient() {
        assert_eq!(leaky_relu(&[0.0, 2.5, 7.0], 0.3), vec![0.0, 2.5, 7.0]);
        assert!((leaky_relu(&[-1.0f64], 0.3)[0] + 0.3).abs() < 1e-15);
        assert_eq!(leaky_relu_backward(&[0.0f64], &[1.0], 0.3), vec![0.3]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        for _ in 0..50 {
            let mut v: f64 = rng.random_range(-2.0..2.0);
            if v.abs() < 1e-3 {
                v += 0.01;
            }
            let num = (leaky_relu(&[v + eps], 0.3)[0] - leaky_relu(&[v - eps], 0.3)[0]) / (2.0 * eps);
            let ana = leaky_relu_backward(&[v], &[1.0], 0.3)[0];
            assert!((num - ana).abs() < 1e-5);
        }
    }
}
