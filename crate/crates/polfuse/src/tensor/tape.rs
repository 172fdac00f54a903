//! Single-use gradient tape.
//!
//! A [`Tape`] records one forward pass; [`Var::backward`] replays it in
//! reverse creation order (which is a topological order by construction) and
//! returns the gradients of every leaf. The tape is confined to one thread
//! and is consumed by backward; a fresh tape is created per training step.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ops::Range;

use super::kernels;
use super::{Shape, Tensor, TensorError};
use crate::scalar::Scalar;

type BackFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<(usize, Tensor<T>)>>;

struct Node<T: Scalar> {
    back: Option<BackFn<T>>,
}

struct TapeInner<T: Scalar> {
    nodes: Vec<Node<T>>,
    // storage id -> leaf node, so the same parameter tensor lifts to one node
    leaves: HashMap<usize, usize>,
    consumed: bool,
}

/// Recorded computation graph for one forward pass.
pub struct Tape<T: Scalar> {
    inner: RefCell<TapeInner<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(TapeInner {
                nodes: Vec::new(),
                leaves: HashMap::new(),
                consumed: false,
            }),
        }
    }

    /// Lifts a tensor onto the tape as a leaf. Lifting the same tensor (same
    /// storage) twice yields the same node, so shared parameters accumulate
    /// gradients correctly.
    pub fn leaf(&self, t: &Tensor<T>) -> Var<'_, T> {
        let mut inner = self.inner.borrow_mut();
        let key = t.storage_id();
        let node = match inner.leaves.get(&key) {
            Some(&id) => id,
            None => {
                let id = inner.nodes.len();
                inner.nodes.push(Node { back: None });
                inner.leaves.insert(key, id);
                id
            }
        };
        Var {
            value: t.clone(),
            node,
            tape: self,
        }
    }

    fn push(&self, back: BackFn<T>) -> usize {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { back: Some(back) });
        id
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradients of the leaves of a consumed tape.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    leaves: HashMap<usize, usize>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf tensor (parameter or network input), if it was
    /// reached by backpropagation.
    pub fn for_tensor(&self, t: &Tensor<T>) -> Option<&Tensor<T>> {
        let node = *self.leaves.get(&t.storage_id())?;
        self.grads.get(node)?.as_ref()
    }

    /// Gradient of a leaf var.
    pub fn of(&self, v: &Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.node)?.as_ref()
    }
}

/// Tape-bound tensor; the handle all differentiable ops work on.
#[derive(Clone)]
pub struct Var<'t, T: Scalar> {
    value: Tensor<T>,
    node: usize,
    tape: &'t Tape<T>,
}

fn add_in_place<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    debug_assert_eq!(dst.shape(), src.shape());
    let s = src.data().to_vec();
    for (d, v) in dst.data_mut().iter_mut().zip(s) {
        *d += v;
    }
}

enum Broadcast {
    None,
    /// lhs is the single-channel side
    Lhs,
    /// rhs is the single-channel side
    Rhs,
}

fn broadcast_kind(op: &'static str, a: Shape, b: Shape) -> Result<Broadcast, TensorError> {
    if a == b {
        return Ok(Broadcast::None);
    }
    let spatial = a[0] == b[0] && a[2] == b[2] && a[3] == b[3];
    if spatial && b[1] == 1 && a[1] > 1 {
        return Ok(Broadcast::Rhs);
    }
    if spatial && a[1] == 1 && b[1] > 1 {
        return Ok(Broadcast::Lhs);
    }
    Err(TensorError::ShapeMismatch { op, lhs: a, rhs: b })
}

/// Sums over the channel axis, yielding an `[n, 1, h, w]` tensor.
fn sum_channels<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = g.shape();
    let mut out = vec![T::zero(); n * h * w];
    let gd = g.data();
    for s in 0..n {
        for ci in 0..c {
            let base = ((s * c) + ci) * h * w;
            let obase = s * h * w;
            for i in 0..h * w {
                out[obase + i] += gd[base + i];
            }
        }
    }
    Tensor::new([n, 1, h, w], out).expect("sum_channels shape")
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn item(&self) -> T {
        self.value.item()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    fn assert_same_tape(&self, other: &Var<'t, T>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars recorded on different tapes"
        );
    }

    fn wrap(&self, value: Tensor<T>, back: BackFn<T>) -> Var<'t, T> {
        let node = self.tape.push(back);
        Var {
            value,
            node,
            tape: self.tape,
        }
    }

    /// 2-D cross-correlation. `weight` is `[cout, cin, kh, kw]`, `bias` (when
    /// present) is `[1, cout, 1, 1]`.
    pub fn conv2d(
        &self,
        weight: &Var<'t, T>,
        bias: Option<&Var<'t, T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>, TensorError> {
        self.assert_same_tape(weight);
        if let Some(b) = bias {
            self.assert_same_tape(b);
        }
        assert!(stride > 0, "stride must be positive");
        let [n, cin, h, w] = self.shape();
        let [cout, wcin, kh, kw] = weight.shape();
        if wcin != cin {
            return Err(TensorError::ChannelMismatch {
                op: "conv2d",
                expected: wcin,
                got: cin,
            });
        }
        if let Some(b) = bias {
            if b.shape() != [1, cout, 1, 1] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: [1, cout, 1, 1],
                    rhs: b.shape(),
                });
            }
        }
        let (Some(ho), Some(wo)) = (
            kernels::conv_out_dim(h, kh, stride, pad),
            kernels::conv_out_dim(w, kw, stride, pad),
        ) else {
            return Err(TensorError::EmptyOutput {
                op: "conv2d",
                shape: self.shape(),
            });
        };
        if ho == 0 || wo == 0 {
            return Err(TensorError::EmptyOutput {
                op: "conv2d",
                shape: self.shape(),
            });
        }
        let out = kernels::conv2d_fwd(
            self.value.data(),
            n,
            cin,
            h,
            w,
            weight.value.data(),
            cout,
            kh,
            kw,
            bias.map(|b| b.value.data()),
            stride,
            pad,
            ho,
            wo,
        );
        let value = Tensor::new([n, cout, ho, wo], out)?;

        let x = self.value.clone();
        let wt = weight.value.clone();
        let (xn, wn, bn) = (self.node, weight.node, bias.map(|b| b.node));
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.data();
            let gx = kernels::conv2d_bwd_input(g, n, cin, h, w, wt.data(), cout, kh, kw, stride, pad, ho, wo);
            let gw = kernels::conv2d_bwd_weight(x.data(), g, n, cin, h, w, cout, kh, kw, stride, pad, ho, wo);
            let mut r = vec![
                (xn, Tensor::new([n, cin, h, w], gx).expect("conv gx shape")),
                (wn, Tensor::new([cout, cin, kh, kw], gw).expect("conv gw shape")),
            ];
            if let Some(bn) = bn {
                let gb = kernels::bias_grad(g, n, cout, ho * wo);
                r.push((bn, Tensor::new([1, cout, 1, 1], gb).expect("conv gb shape")));
            }
            r
        });
        Ok(self.wrap(value, back))
    }

    /// Transposed 2-D convolution (the adjoint of [`Var::conv2d`] with the
    /// same geometry). `weight` is `[cin, cout, kh, kw]`.
    pub fn conv_transpose2d(
        &self,
        weight: &Var<'t, T>,
        bias: Option<&Var<'t, T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>, TensorError> {
        self.assert_same_tape(weight);
        if let Some(b) = bias {
            self.assert_same_tape(b);
        }
        assert!(stride > 0, "stride must be positive");
        let [n, cin, h, w] = self.shape();
        let [wcin, cout, kh, kw] = weight.shape();
        if wcin != cin {
            return Err(TensorError::ChannelMismatch {
                op: "conv_transpose2d",
                expected: wcin,
                got: cin,
            });
        }
        if let Some(b) = bias {
            if b.shape() != [1, cout, 1, 1] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv_transpose2d bias",
                    lhs: [1, cout, 1, 1],
                    rhs: b.shape(),
                });
            }
        }
        let (Some(ho), Some(wo)) = (
            kernels::tconv_out_dim(h, kh, stride, pad),
            kernels::tconv_out_dim(w, kw, stride, pad),
        ) else {
            return Err(TensorError::EmptyOutput {
                op: "conv_transpose2d",
                shape: self.shape(),
            });
        };
        if ho == 0 || wo == 0 {
            return Err(TensorError::EmptyOutput {
                op: "conv_transpose2d",
                shape: self.shape(),
            });
        }
        let out = kernels::tconv2d_fwd(
            self.value.data(),
            n,
            cin,
            h,
            w,
            weight.value.data(),
            cout,
            kh,
            kw,
            bias.map(|b| b.value.data()),
            stride,
            pad,
            ho,
            wo,
        );
        let value = Tensor::new([n, cout, ho, wo], out)?;

        let x = self.value.clone();
        let wt = weight.value.clone();
        let (xn, wn, bn) = (self.node, weight.node, bias.map(|b| b.node));
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.data();
            let gx = kernels::tconv2d_bwd_input(g, n, cin, h, w, wt.data(), cout, kh, kw, stride, pad, ho, wo);
            let gw = kernels::tconv2d_bwd_weight(x.data(), g, n, cin, h, w, cout, kh, kw, stride, pad, ho, wo);
            let mut r = vec![
                (xn, Tensor::new([n, cin, h, w], gx).expect("tconv gx shape")),
                (wn, Tensor::new([cin, cout, kh, kw], gw).expect("tconv gw shape")),
            ];
            if let Some(bn) = bn {
                let gb = kernels::bias_grad(g, n, cout, ho * wo);
                r.push((bn, Tensor::new([1, cout, 1, 1], gb).expect("tconv gb shape")));
            }
            r
        });
        Ok(self.wrap(value, back))
    }

    /// PReLU with a single learnable slope shared across the whole tensor.
    pub fn prelu(&self, slope: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.assert_same_tape(slope);
        if slope.value.numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "prelu slope",
                lhs: [1, 1, 1, 1],
                rhs: slope.shape(),
            });
        }
        let a = slope.item();
        let shape = self.shape();
        let out: Vec<T> = self
            .value
            .iter()
            .map(|&v| if v > T::zero() { v } else { a * v })
            .collect();
        let value = Tensor::new(shape, out)?;
        let x = self.value.clone();
        let (xn, an) = (self.node, slope.node);
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.data();
            let xd = x.data();
            let mut gx = Vec::with_capacity(xd.len());
            let mut ga = T::zero();
            for (&xi, &gi) in xd.iter().zip(g) {
                if xi > T::zero() {
                    gx.push(gi);
                } else {
                    gx.push(a * gi);
                    ga += gi * xi;
                }
            }
            vec![
                (xn, Tensor::new(shape, gx).expect("prelu gx shape")),
                (an, Tensor::scalar(ga)),
            ]
        });
        Ok(self.wrap(value, back))
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        let shape = self.shape();
        let out: Vec<T> = self
            .value
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();
        let value = Tensor::new(shape, out).expect("sigmoid shape");
        let y = value.clone();
        let xn = self.node;
        let back: BackFn<T> = Box::new(move |gout| {
            let gx: Vec<T> = y
                .iter()
                .zip(gout.data())
                .map(|(&yi, &gi)| gi * yi * (T::one() - yi))
                .collect();
            vec![(xn, Tensor::new(shape, gx).expect("sigmoid gx shape"))]
        });
        self.wrap(value, back)
    }

    fn binary(
        &self,
        other: &Var<'t, T>,
        op: &'static str,
        fwd: fn(T, T) -> T,
        // (gout, lhs_elem, rhs_elem) -> (dl, dr)
        bwd: fn(T, T, T) -> (T, T),
    ) -> Result<Var<'t, T>, TensorError> {
        self.assert_same_tape(other);
        let bc = broadcast_kind(op, self.shape(), other.shape())?;
        let (big, small_is_lhs) = match bc {
            Broadcast::None | Broadcast::Rhs => (self.shape(), false),
            Broadcast::Lhs => (other.shape(), true),
        };
        let [n, c, h, w] = big;
        let plane = h * w;
        let ld = self.value.data();
        let rd = other.value.data();
        let mut out = Vec::with_capacity(n * c * plane);
        for s in 0..n {
            for ci in 0..c {
                let bbase = (s * c + ci) * plane;
                let sbase = s * plane;
                for i in 0..plane {
                    let (l, r) = match bc {
                        Broadcast::None => (ld[bbase + i], rd[bbase + i]),
                        Broadcast::Rhs => (ld[bbase + i], rd[sbase + i]),
                        Broadcast::Lhs => (ld[sbase + i], rd[bbase + i]),
                    };
                    out.push(fwd(l, r));
                }
            }
        }
        let value = Tensor::new(big, out)?;
        let lx = self.value.clone();
        let rx = other.value.clone();
        let lshape = self.shape();
        let rshape = other.shape();
        let (ln, rn) = (self.node, other.node);
        let _ = small_is_lhs;
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.data();
            let ldat = lx.data();
            let rdat = rx.data();
            let mut gl = vec![T::zero(); ldat.len()];
            let mut gr = vec![T::zero(); rdat.len()];
            for s in 0..n {
                for ci in 0..c {
                    let bbase = (s * c + ci) * plane;
                    let sbase = s * plane;
                    for i in 0..plane {
                        let (li, ri) = match bc {
                            Broadcast::None => (bbase + i, bbase + i),
                            Broadcast::Rhs => (bbase + i, sbase + i),
                            Broadcast::Lhs => (sbase + i, bbase + i),
                        };
                        let (dl, dr) = bwd(g[bbase + i], ldat[li], rdat[ri]);
                        gl[li] += dl;
                        gr[ri] += dr;
                    }
                }
            }
            vec![
                (ln, Tensor::new(lshape, gl).expect("binary gl shape")),
                (rn, Tensor::new(rshape, gr).expect("binary gr shape")),
            ]
        });
        Ok(self.wrap(value, back))
    }

    /// Element-wise sum; one operand may have a single channel, which is
    /// broadcast across the other's channels.
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary(other, "add", |a, b| a + b, |g, _, _| (g, g))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary(other, "sub", |a, b| a - b, |g, _, _| (g, -g))
    }

    /// Element-wise product with the same broadcast rule as [`Var::add`].
    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary(other, "mul", |a, b| a * b, |g, l, r| (g * r, g * l))
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&self, other: &Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.assert_same_tape(other);
        let [n, c1, h, w] = self.shape();
        let [n2, c2, h2, w2] = other.shape();
        if n != n2 || h != h2 || w != w2 {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (c1 + c2) * plane);
        for s in 0..n {
            out.extend_from_slice(&self.value.data()[s * c1 * plane..(s + 1) * c1 * plane]);
            out.extend_from_slice(&other.value.data()[s * c2 * plane..(s + 1) * c2 * plane]);
        }
        let value = Tensor::new([n, c1 + c2, h, w], out)?;
        let (ln, rn) = (self.node, other.node);
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.data();
            let c = c1 + c2;
            let mut gl = Vec::with_capacity(n * c1 * plane);
            let mut gr = Vec::with_capacity(n * c2 * plane);
            for s in 0..n {
                let base = s * c * plane;
                gl.extend_from_slice(&g[base..base + c1 * plane]);
                gr.extend_from_slice(&g[base + c1 * plane..base + c * plane]);
            }
            vec![
                (ln, Tensor::new([n, c1, h, w], gl).expect("concat gl shape")),
                (rn, Tensor::new([n, c2, h, w], gr).expect("concat gr shape")),
            ]
        });
        Ok(self.wrap(value, back))
    }

    /// Differentiable channel slice.
    pub fn slice_channels(&self, range: Range<usize>) -> Result<Var<'t, T>, TensorError> {
        let [n, c, h, w] = self.shape();
        if range.start >= range.end || range.end > c {
            return Err(TensorError::BadChannelRange {
                op: "slice_channels",
                start: range.start,
                end: range.end,
                channels: c,
            });
        }
        let cs = range.end - range.start;
        let plane = h * w;
        let mut out = Vec::with_capacity(n * cs * plane);
        for s in 0..n {
            let base = (s * c + range.start) * plane;
            out.extend_from_slice(&self.value.data()[base..base + cs * plane]);
        }
        let value = Tensor::new([n, cs, h, w], out)?;
        let xn = self.node;
        let start = range.start;
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.data();
            let mut gx = vec![T::zero(); n * c * plane];
            for s in 0..n {
                let dst = (s * c + start) * plane;
                let src = s * cs * plane;
                gx[dst..dst + cs * plane].copy_from_slice(&g[src..src + cs * plane]);
            }
            vec![(xn, Tensor::new([n, c, h, w], gx).expect("slice gx shape"))]
        });
        Ok(self.wrap(value, back))
    }

    /// Sum of all elements as a `[1,1,1,1]` tensor.
    pub fn sum(&self) -> Var<'t, T> {
        let mut acc = T::zero();
        for &v in self.value.iter() {
            acc += v;
        }
        let shape = self.shape();
        let xn = self.node;
        let back: BackFn<T> = Box::new(move |gout| {
            let g = gout.item();
            vec![(xn, Tensor::full(shape, g))]
        });
        self.wrap(Tensor::scalar(acc), back)
    }

    /// Multiplication by a constant (no gradient flows into `k`).
    pub fn scale(&self, k: T) -> Var<'t, T> {
        let shape = self.shape();
        let out: Vec<T> = self.value.iter().map(|&v| v * k).collect();
        let value = Tensor::new(shape, out).expect("scale shape");
        let xn = self.node;
        let back: BackFn<T> = Box::new(move |gout| {
            let gx: Vec<T> = gout.data().iter().map(|&g| g * k).collect();
            vec![(xn, Tensor::new(shape, gx).expect("scale gx shape"))]
        });
        self.wrap(value, back)
    }

    /// Reverse pass from a scalar loss. Consumes the tape: every node is
    /// dropped and a second call fails with [`TensorError::TapeConsumed`].
    pub fn backward(&self) -> Result<Gradients<T>, TensorError> {
        if self.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                numel: self.value.numel(),
            });
        }
        let (nodes, leaves) = {
            let mut inner = self.tape.inner.borrow_mut();
            if inner.consumed {
                return Err(TensorError::TapeConsumed);
            }
            inner.consumed = true;
            (
                std::mem::take(&mut inner.nodes),
                std::mem::take(&mut inner.leaves),
            )
        };
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        grads[self.node] = Some(Tensor::scalar(T::one()));
        for id in (0..=self.node).rev() {
            if grads[id].is_none() {
                continue;
            }
            let Some(back) = &nodes[id].back else {
                continue; // leaf: keep its gradient
            };
            let g = grads[id].take().expect("grad present");
            for (pid, contrib) in back(&g) {
                debug_assert!(pid < id, "tape order must be topological");
                match &mut grads[pid] {
                    Some(existing) => add_in_place(existing, &contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(Gradients { grads, leaves })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(shape: Shape, d: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, d.to_vec()).unwrap()
    }

    #[test]
    fn sum_backward_is_ones() {
        let tape = Tape::new();
        let x = t64([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let xv = tape.leaf(&x);
        let loss = xv.sum();
        assert_eq!(loss.item(), 10.0);
        let g = loss.backward().unwrap();
        assert_eq!(g.for_tensor(&x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_sum_of_squares_grad_is_x() {
        let tape = Tape::new();
        let x = t64([1, 1, 1, 3], &[1.0, -2.0, 0.5]);
        let xv = tape.leaf(&x);
        let loss = xv.mul(&xv).unwrap().sum().scale(0.5);
        let g = loss.backward().unwrap();
        assert_eq!(g.for_tensor(&x).unwrap().data(), x.data());
    }

    #[test]
    fn prelu_values_and_slope_grad() {
        let tape = Tape::new();
        let x = t64([1, 1, 1, 2], &[3.0, -2.0]);
        let a = Tensor::scalar(0.25);
        let xv = tape.leaf(&x);
        let av = tape.leaf(&a);
        let y = xv.prelu(&av).unwrap();
        assert_eq!(y.value().data(), &[3.0, -0.5]);
        let loss = y.sum();
        let g = loss.backward().unwrap();
        // upstream is 1 everywhere: slope grad = sum over negative x of x
        assert_eq!(g.for_tensor(&a).unwrap().item(), -2.0);
        assert_eq!(g.for_tensor(&x).unwrap().data(), &[1.0, 0.25]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let tape = Tape::new();
        let x = Tensor::<f64>::zeros([1, 1, 1, 1]);
        let y = tape.leaf(&x).sigmoid();
        assert_eq!(y.item(), 0.5);
    }

    #[test]
    fn mul_by_ones_is_identity_and_concat_counts_channels() {
        let tape = Tape::new();
        let x = t64([1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let ones = Tensor::full([1, 2, 1, 2], 1.0);
        let xv = tape.leaf(&x);
        let ov = tape.leaf(&ones);
        let y = xv.mul(&ov).unwrap();
        assert_eq!(y.value().data(), x.data());
        let z = xv.concat_channels(&ov).unwrap();
        assert_eq!(z.shape(), [1, 4, 1, 2]);
    }

    #[test]
    fn broadcast_mul_sums_gradient_over_channels() {
        let tape = Tape::new();
        let x = t64([1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let wmap = t64([1, 1, 1, 2], &[0.5, 2.0]);
        let xv = tape.leaf(&x);
        let wv = tape.leaf(&wmap);
        let y = xv.mul(&wv).unwrap();
        assert_eq!(y.value().data(), &[0.5, 4.0, 1.5, 8.0]);
        let g = y.sum().backward().unwrap();
        // d/dw_j = sum_c x[c, j]
        assert_eq!(g.for_tensor(&wmap).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(g.for_tensor(&x).unwrap().data(), &[0.5, 2.0, 0.5, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let tape = Tape::new();
        let a = tape.leaf(&Tensor::<f64>::zeros([1, 3, 2, 2]));
        let b = tape.leaf(&Tensor::<f64>::zeros([1, 3, 2, 3]));
        assert!(a.add(&b).is_err());
        assert!(a.concat_channels(&b).is_err());
    }

    #[test]
    fn backward_requires_scalar_and_consumes_tape() {
        let tape = Tape::new();
        let x = tape.leaf(&Tensor::<f64>::zeros([1, 1, 2, 2]));
        assert!(matches!(
            x.backward(),
            Err(TensorError::NonScalarLoss { numel: 4 })
        ));
        let s = x.sum();
        s.backward().unwrap();
        assert!(matches!(s.backward(), Err(TensorError::TapeConsumed)));
    }

    #[test]
    fn shared_parameter_accumulates_gradient() {
        let tape = Tape::new();
        let w = Tensor::scalar(3.0f64);
        let a = tape.leaf(&w);
        let b = tape.leaf(&w); // same storage -> same node
        let y = a.mul(&b).unwrap().sum(); // y = w^2
        let g = y.backward().unwrap();
        assert_eq!(g.for_tensor(&w).unwrap().item(), 6.0);
    }

    #[test]
    fn slice_channels_routes_gradient() {
        let tape = Tape::new();
        let x = t64([1, 3, 1, 1], &[1.0, 2.0, 3.0]);
        let xv = tape.leaf(&x);
        let y = xv.slice_channels(1..2).unwrap();
        assert_eq!(y.value().data(), &[2.0]);
        let g = y.sum().backward().unwrap();
        assert_eq!(g.for_tensor(&x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
