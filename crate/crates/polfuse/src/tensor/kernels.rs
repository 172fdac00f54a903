//! Convolution compute kernels: im2col / col2im plus GEMM formulations of the
//! forward and backward passes for convolution and transposed convolution.
//!
//! Layout conventions (all row-major):
//! - activations `[N, C, H, W]`
//! - convolution weights `[Cout, Cin, kh, kw]`
//! - transposed-convolution weights `[Cin, Cout, kh, kw]`
//!
//! Cross-correlation semantics throughout (no kernel flip).

use crate::scalar::Scalar;

/// `(H + 2p - k) / s + 1`, `None` when the kernel does not fit.
pub fn conv_out_dim(h: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = h + 2 * pad;
    if span < k {
        return None;
    }
    Some((span - k) / stride + 1)
}

/// `(H - 1) * s - 2p + k` (callers validate that the subtraction is legal).
pub fn tconv_out_dim(h: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let grown = (h - 1) * stride + k;
    if grown < 2 * pad {
        return None;
    }
    Some(grown - 2 * pad)
}

/// Unfolds one `[C, H, W]` image into a `[C*kh*kw, ho*wo]` column matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let cols = ho * wo;
    let mut out = vec![T::zero(); c * kh * kw * cols];
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = ((ci * kh + i) * kw + j) * cols;
                for oy in 0..ho {
                    let y = (oy * stride + i) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let src_row = y as usize * w;
                    let dst_row = row + oy * wo;
                    for ox in 0..wo {
                        let x = (ox * stride + j) as isize - pad as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        out[dst_row + ox] = plane[src_row + x as usize];
                    }
                }
            }
        }
    }
    out
}

/// Folds a `[C*kh*kw, ho*wo]` column matrix back onto a `[C, H, W]` image by
/// scatter-add; the adjoint of [`im2col`].
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Scalar>(
    cols_mat: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let cols = ho * wo;
    let mut out = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = ((ci * kh + i) * kw + j) * cols;
                for oy in 0..ho {
                    let y = (oy * stride + i) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let dst_row = y as usize * w;
                    let src_row = row + oy * wo;
                    for ox in 0..wo {
                        let x = (ox * stride + j) as isize - pad as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        plane[dst_row + x as usize] += cols_mat[src_row + ox];
                    }
                }
            }
        }
    }
    out
}

/// Convolution forward: returns `[N, Cout, ho, wo]` data.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_fwd<T: Scalar>(
    x: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    kh: usize,
    kw: usize,
    bias: Option<&[T]>,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let k = cin * kh * kw;
    let cols = ho * wo;
    let mut out = vec![T::zero(); n * cout * cols];
    for s in 0..n {
        let col = im2col(
            &x[s * cin * h * w..(s + 1) * cin * h * w],
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        );
        T::gemm(
            cout,
            k,
            cols,
            T::one(),
            weight,
            k as isize,
            1,
            &col,
            cols as isize,
            1,
            T::zero(),
            &mut out[s * cout * cols..(s + 1) * cout * cols],
            cols as isize,
            1,
        );
    }
    if let Some(b) = bias {
        for s in 0..n {
            for co in 0..cout {
                let base = (s * cout + co) * cols;
                let bv = b[co];
                for v in &mut out[base..base + cols] {
                    *v += bv;
                }
            }
        }
    }
    out
}

/// Gradient of conv w.r.t. its input: `[N, Cin, H, W]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd_input<T: Scalar>(
    gout: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let k = cin * kh * kw;
    let cols = ho * wo;
    let mut gx = Vec::with_capacity(n * cin * h * w);
    let mut gcol = vec![T::zero(); k * cols];
    for s in 0..n {
        // gcol = W^T (viewed [k, cout]) * gout_s
        T::gemm(
            k,
            cout,
            cols,
            T::one(),
            weight,
            1,
            k as isize,
            &gout[s * cout * cols..(s + 1) * cout * cols],
            cols as isize,
            1,
            T::zero(),
            &mut gcol,
            cols as isize,
            1,
        );
        gx.extend_from_slice(&col2im(&gcol, cin, h, w, kh, kw, stride, pad, ho, wo));
    }
    gx
}

/// Gradient of conv w.r.t. its weights: `[Cout, Cin, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd_weight<T: Scalar>(
    x: &[T],
    gout: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let k = cin * kh * kw;
    let cols = ho * wo;
    let mut gw = vec![T::zero(); cout * k];
    for s in 0..n {
        let col = im2col(
            &x[s * cin * h * w..(s + 1) * cin * h * w],
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        );
        // gw += gout_s * col^T
        T::gemm(
            cout,
            cols,
            k,
            T::one(),
            &gout[s * cout * cols..(s + 1) * cout * cols],
            cols as isize,
            1,
            &col,
            1,
            cols as isize,
            T::one(),
            &mut gw,
            k as isize,
            1,
        );
    }
    gw
}

/// Per-output-channel sum of the upstream gradient: `[Cout]`.
pub fn bias_grad<T: Scalar>(gout: &[T], n: usize, cout: usize, cols: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); cout];
    for s in 0..n {
        for co in 0..cout {
            let base = (s * cout + co) * cols;
            let mut acc = T::zero();
            for v in &gout[base..base + cols] {
                acc += *v;
            }
            gb[co] += acc;
        }
    }
    gb
}

/// Transposed-convolution forward: returns `[N, Cout, ho, wo]` data where
/// `ho = (H-1)*s - 2p + kh`. Weight layout `[Cin, Cout, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn tconv2d_fwd<T: Scalar>(
    x: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    kh: usize,
    kw: usize,
    bias: Option<&[T]>,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let kp = cout * kh * kw;
    let in_cols = h * w;
    let mut out = vec![T::zero(); n * cout * ho * wo];
    let mut cols_mat = vec![T::zero(); kp * in_cols];
    for s in 0..n {
        // cols = W^T (viewed [kp, cin]) * x_s
        T::gemm(
            kp,
            cin,
            in_cols,
            T::one(),
            weight,
            1,
            kp as isize,
            &x[s * cin * in_cols..(s + 1) * cin * in_cols],
            in_cols as isize,
            1,
            T::zero(),
            &mut cols_mat,
            in_cols as isize,
            1,
        );
        let folded = col2im(&cols_mat, cout, ho, wo, kh, kw, stride, pad, h, w);
        out[s * cout * ho * wo..(s + 1) * cout * ho * wo].copy_from_slice(&folded);
    }
    if let Some(b) = bias {
        let cols = ho * wo;
        for s in 0..n {
            for co in 0..cout {
                let base = (s * cout + co) * cols;
                let bv = b[co];
                for v in &mut out[base..base + cols] {
                    *v += bv;
                }
            }
        }
    }
    out
}

/// Gradient of tconv w.r.t. its input: `[N, Cin, H, W]`.
#[allow(clippy::too_many_arguments)]
pub fn tconv2d_bwd_input<T: Scalar>(
    gout: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let kp = cout * kh * kw;
    let in_cols = h * w;
    let mut gx = vec![T::zero(); n * cin * in_cols];
    for s in 0..n {
        let col = im2col(
            &gout[s * cout * ho * wo..(s + 1) * cout * ho * wo],
            cout,
            ho,
            wo,
            kh,
            kw,
            stride,
            pad,
            h,
            w,
        );
        // gx_s = W (viewed [cin, kp]) * col
        T::gemm(
            cin,
            kp,
            in_cols,
            T::one(),
            weight,
            kp as isize,
            1,
            &col,
            in_cols as isize,
            1,
            T::zero(),
            &mut gx[s * cin * in_cols..(s + 1) * cin * in_cols],
            in_cols as isize,
            1,
        );
    }
    gx
}

/// Gradient of tconv w.r.t. its weights: `[Cin, Cout, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn tconv2d_bwd_weight<T: Scalar>(
    x: &[T],
    gout: &[T],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let kp = cout * kh * kw;
    let in_cols = h * w;
    let mut gw = vec![T::zero(); cin * kp];
    for s in 0..n {
        let col = im2col(
            &gout[s * cout * ho * wo..(s + 1) * cout * ho * wo],
            cout,
            ho,
            wo,
            kh,
            kw,
            stride,
            pad,
            h,
            w,
        );
        // gw += x_s * col^T
        T::gemm(
            cin,
            in_cols,
            kp,
            T::one(),
            &x[s * cin * in_cols..(s + 1) * cin * in_cols],
            in_cols as isize,
            1,
            &col,
            1,
            in_cols as isize,
            T::one(),
            &mut gw,
            kp as isize,
            1,
        );
    }
    gw
}
