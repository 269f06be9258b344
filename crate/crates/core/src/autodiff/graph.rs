//! Reverse-mode tape over batched dense tensors.
//!
//! A [`Graph`] records every operation of one forward pass; [`Graph::backward`]
//! then walks the tape once in reverse. Exactly the primitives the networks
//! need exist, nothing else. Convolutions lower to im2col + matmul and are
//! parallelized over the batch dimension; every reduction runs in a fixed
//! order, so a seeded run is bit-reproducible regardless of thread count.

use super::gemm::{col2im_acc, gemm_abt_set, gemm_acc, gemm_set, im2col, transpose, ConvDims};
use super::tensor::{Scalar, Tensor};
use rayon::prelude::*;
use thiserror::Error;

/// Probability clamp applied inside every log.
pub const EPS_LOG: f64 = 1e-6;

/// Sum and sum of squares with 8 independent accumulator lanes per
/// quantity; fixed combination order keeps results run-reproducible.
fn sum_sq8<S: Scalar>(plane: &[S]) -> (f64, f64) {
    let mut s = [0.0f64; 8];
    let mut s2 = [0.0f64; 8];
    let mut chunks = plane.chunks_exact(8);
    for c in chunks.by_ref() {
        for l in 0..8 {
            let v = c[l].to_f64();
            s[l] += v;
            s2[l] = v.mul_add(v, s2[l]);
        }
    }
    for (l, &v) in chunks.remainder().iter().enumerate() {
        let v = v.to_f64();
        s[l] += v;
        s2[l] = v.mul_add(v, s2[l]);
    }
    let fold = |a: [f64; 8]| ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
    (fold(s), fold(s2))
}

/// Paired reduction for the batch-norm adjoint: sums of `dy` and of
/// `dy * (x - mean) * inv_std`, 8 lanes each.
fn sum_dy_dyx8<S: Scalar>(dy: &[S], x: &[S], mean: f64, inv_std: f64) -> (f64, f64) {
    let mut s = [0.0f64; 8];
    let mut sx = [0.0f64; 8];
    let mut dc = dy.chunks_exact(8);
    let mut xc = x.chunks_exact(8);
    for (d8, x8) in dc.by_ref().zip(xc.by_ref()) {
        for l in 0..8 {
            let d = d8[l].to_f64();
            s[l] += d;
            sx[l] = (d * (x8[l].to_f64() - mean) * inv_std) + sx[l];
        }
    }
    for (l, (&d, &x)) in dc.remainder().iter().zip(xc.remainder()).enumerate() {
        let d = d.to_f64();
        s[l] += d;
        sx[l] += d * (x.to_f64() - mean) * inv_std;
    }
    let fold = |a: [f64; 8]| ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
    (fold(s), fold(sx))
}

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("conv2d: output size is not an integer for input {h}x{w}, kernel {kh}x{kw}, stride {stride}, pad {pad}")]
    NonIntegerOutput {
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    #[error("conv2d: kernel sides must be odd, got {0}x{1}")]
    EvenKernel(usize, usize),
    #[error("batch_norm: needs at least 2 values per channel in batch mode, got {0}")]
    BatchTooSmall(usize),
    #[error("batch_norm: eval mode requires running statistics")]
    EvalWithoutStats,
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("balance loss needs at least 2 decoders, got {0}")]
    TooFewDecoders(usize),
}

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Batch statistics computed by a batch-mode normalization, handed back so
/// the trainer can fold them into running statistics if it wants to.
#[derive(Clone, Debug)]
pub struct BnBatchStats<S: Scalar> {
    pub mean: Vec<S>,
    /// Biased (1/n) variance, as used for the normalization itself.
    pub var: Vec<S>,
    /// Values per channel that went into the statistics.
    pub count: usize,
}

enum Op<S: Scalar> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        dims: ConvDims,
        batch: usize,
    },
    BatchNormBatch {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<S>,
        inv_std: Vec<S>,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<S>,
        inv_std: Vec<S>,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    ConcatChannels {
        xs: Vec<Var>,
        channels: Vec<usize>,
        batch: usize,
        spatial: usize,
    },
    AdaptiveAvgPool {
        x: Var,
        spatial: usize,
    },
    Mse {
        a: Var,
        b: Var,
    },
    Bce {
        p: Var,
        y: Var,
    },
    /// mean(-ln(1 - p)); the generator-side adversarial term.
    NegLogOneMinus {
        p: Var,
    },
    AbsDiff {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: S,
    },
    Add {
        a: Var,
        b: Var,
    },
    /// sum(x * weights) -> scalar; the reduction used by the grad checker.
    DotConst {
        x: Var,
        weights: Vec<S>,
    },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    needs_grad: bool,
    op: Op<S>,
}

pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Trainable leaf: gradients will be accumulated for it.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push_unchecked(value, true, Op::Leaf)
    }

    /// Non-trainable leaf (inputs, labels, targets).
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push_unchecked(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last [`backward`](Self::backward) call.
    /// `None` for nodes that do not require or did not receive gradient.
    pub fn grad(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Add `delta` to one element of a leaf. Finite-difference probing only;
    /// must run before any op consumes the leaf.
    pub fn nudge_leaf(&mut self, v: Var, index: usize, delta: S) {
        assert!(
            matches!(self.nodes[v.0].op, Op::Leaf),
            "nudge_leaf on a non-leaf node"
        );
        let d = self.nodes[v.0].value.data_mut();
        d[index] += delta;
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<S>,
        needs_grad: bool,
        op: Op<S>,
    ) -> Result<Var, AutodiffError> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        Ok(self.push_unchecked(value, needs_grad, op))
    }

    fn push_unchecked(&mut self, value: Tensor<S>, needs_grad: bool, op: Op<S>) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ---- convolution ----

    /// Cross-correlation with zero padding. `x` is `[B,Ci,H,W]` or `[Ci,H,W]`,
    /// `w` is `[Co,Ci,kh,kw]`, `b` is `[Co]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var, AutodiffError> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if ws.len() != 4 || bs.len() != 1 || bs[0] != ws[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                detail: format!("weight {ws:?}, bias {bs:?}"),
            });
        }
        let (batch, ci, h, wd) = match xs.len() {
            4 => (xs[0], xs[1], xs[2], xs[3]),
            3 => (1, xs[0], xs[1], xs[2]),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("input {xs:?}"),
                })
            }
        };
        let (co, kh, kw) = (ws[0], ws[2], ws[3]);
        if ws[1] != ci {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                detail: format!("input channels {ci} vs kernel {}", ws[1]),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(AutodiffError::EvenKernel(kh, kw));
        }
        if stride == 0
            || h + 2 * pad < kh
            || wd + 2 * pad < kw
            || (h + 2 * pad - kh) % stride != 0
            || (wd + 2 * pad - kw) % stride != 0
        {
            return Err(AutodiffError::NonIntegerOutput {
                h,
                w: wd,
                kh,
                kw,
                stride,
                pad,
            });
        }
        let out_h = (h + 2 * pad - kh) / stride + 1;
        let out_w = (wd + 2 * pad - kw) / stride + 1;
        let dims = ConvDims {
            c_in: ci,
            h,
            w: wd,
            c_out: co,
            kh,
            kw,
            stride,
            pad,
            out_h,
            out_w,
        };

        let out_shape: Vec<usize> = if xs.len() == 4 {
            vec![batch, co, out_h, out_w]
        } else {
            vec![co, out_h, out_w]
        };
        let mut out = Tensor::zeros(&out_shape);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(b).data();
            let in_len = ci * h * wd;
            let out_len = co * out_h * out_w;
            let run = |x_s: &[S], o_s: &mut [S]| {
                let n = dims.out_spatial();
                for (c_row, bias) in o_s.chunks_exact_mut(n).zip(bv) {
                    c_row.fill(*bias);
                }
                S::with_scratch(dims.patch_len() * n, |col| {
                    im2col(x_s, &dims, col);
                    gemm_acc(o_s, wv, col, co, dims.patch_len(), n);
                });
            };
            if batch > 1 {
                out.data_mut()
                    .par_chunks_mut(out_len)
                    .zip(xv.par_chunks(in_len))
                    .for_each(|(o_s, x_s)| run(x_s, o_s));
            } else {
                run(xv, out.data_mut());
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            "conv2d",
            out,
            needs,
            Op::Conv2d {
                x,
                w,
                b,
                dims,
                batch,
            },
        )
    }

    // ---- batch normalization ----

    /// Normalize by batch statistics (training mode). Returns the statistics
    /// so the caller can update running estimates.
    pub fn batch_norm_batch(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BnBatchStats<S>), AutodiffError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                op: "batch_norm",
                detail: format!("input {xs:?}, expected [B,C,H,W]"),
            });
        }
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        self.check_bn_params(c, gamma, beta)?;
        let count = b * h * w;
        if count < 2 {
            return Err(AutodiffError::BatchTooSmall(count));
        }
        let plane = h * w;
        let xv = self.value(x).data();

        // per-(sample, channel) partial sums, combined in fixed order
        let mut partials = vec![(0.0f64, 0.0f64); b * c];
        partials
            .par_chunks_mut(c)
            .zip(xv.par_chunks(c * plane))
            .for_each(|(prow, sample)| {
                for (ch, slot) in prow.iter_mut().enumerate() {
                    *slot = sum_sq8(&sample[ch * plane..(ch + 1) * plane]);
                }
            });
        let mut mean = vec![S::ZERO; c];
        let mut var = vec![S::ZERO; c];
        let mut inv_std = vec![S::ZERO; c];
        for ch in 0..c {
            let mut s = 0.0f64;
            let mut s2 = 0.0f64;
            for bi in 0..b {
                let (ps, ps2) = partials[bi * c + ch];
                s += ps;
                s2 += ps2;
            }
            let m = s / count as f64;
            let v = (s2 / count as f64 - m * m).max(0.0);
            mean[ch] = S::from_f64(m);
            var[ch] = S::from_f64(v);
            inv_std[ch] = S::from_f64(1.0 / (v + eps).sqrt());
        }

        let out = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let stats = BnBatchStats {
            mean: mean.clone(),
            var: var.clone(),
            count,
        };
        let v = self.push(
            "batch_norm",
            out,
            needs,
            Op::BatchNormBatch {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
        )?;
        Ok((v, stats))
    }

    /// Normalize by the provided running statistics (eval mode).
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[S],
        running_var: &[S],
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                op: "batch_norm",
                detail: format!("input {xs:?}, expected [B,C,H,W]"),
            });
        }
        let c = xs[1];
        self.check_bn_params(c, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(AutodiffError::ShapeMismatch {
                op: "batch_norm",
                detail: format!(
                    "running stats of {}/{} channels, expected {c}",
                    running_mean.len(),
                    running_var.len()
                ),
            });
        }
        let mean = running_mean.to_vec();
        let inv_std: Vec<S> = running_var
            .iter()
            .map(|v| S::from_f64(1.0 / (v.to_f64() + eps).sqrt()))
            .collect();
        let out = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            "batch_norm",
            out,
            needs,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
        )
    }

    fn check_bn_params(&self, c: usize, gamma: Var, beta: Var) -> Result<(), AutodiffError> {
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(AutodiffError::ShapeMismatch {
                op: "batch_norm",
                detail: format!(
                    "gamma {:?} / beta {:?} for {c} channels",
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            });
        }
        Ok(())
    }

    fn bn_apply(&self, x: Var, gamma: Var, beta: Var, mean: &[S], inv_std: &[S]) -> Tensor<S> {
        let xs = self.value(x).shape();
        let (c, plane) = (xs[1], xs[2] * xs[3]);
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = Tensor::zeros(xs);
        out.data_mut()
            .par_chunks_mut(c * plane)
            .zip(xv.par_chunks(c * plane))
            .for_each(|(o_s, x_s)| {
                for ch in 0..c {
                    let scale = gv[ch] * inv_std[ch];
                    let shift = bv[ch];
                    let m = mean[ch];
                    for (o, &v) in o_s[ch * plane..(ch + 1) * plane]
                        .iter_mut()
                        .zip(&x_s[ch * plane..(ch + 1) * plane])
                    {
                        *o = scale.mul_add(v - m, shift);
                    }
                }
            });
        out
    }

    // ---- elementwise and shape ops ----

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        let mut data = vec![S::ZERO; v.len()];
        data.par_chunks_mut(1 << 16)
            .zip(v.data().par_chunks(1 << 16))
            .for_each(|(o, i)| {
                for (d, &a) in o.iter_mut().zip(i) {
                    *d = a.maximum(S::ZERO);
                }
            });
        let out = Tensor::from_vec(v.shape(), data);
        let needs = self.needs(x);
        self.push("relu", out, needs, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        let data = v
            .data()
            .iter()
            .map(|&a| S::ONE / (S::ONE + (-a).exp()))
            .collect();
        let out = Tensor::from_vec(v.shape(), data);
        let needs = self.needs(x);
        self.push("sigmoid", out, needs, Op::Sigmoid { x })
    }

    /// `x[B,Fi] * w[Fo,Fi]^T + b[Fo]`; `x` may also be rank 1.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        let (batch, fi) = match xs.len() {
            2 => (xs[0], xs[1]),
            1 => (1, xs[0]),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "linear",
                    detail: format!("input {xs:?}"),
                })
            }
        };
        if ws.len() != 2 || ws[1] != fi || bs != [ws[0]] {
            return Err(AutodiffError::ShapeMismatch {
                op: "linear",
                detail: format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
            });
        }
        let fo = ws[0];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut data = vec![S::ZERO; batch * fo];
        for bi in 0..batch {
            let xrow = &xv[bi * fi..(bi + 1) * fi];
            for o in 0..fo {
                let wrow = &wv[o * fi..(o + 1) * fi];
                let mut acc = bv[o];
                for (xx, ww) in xrow.iter().zip(wrow) {
                    acc = xx.mul_add(*ww, acc);
                }
                data[bi * fo + o] = acc;
            }
        }
        let out_shape: Vec<usize> = if xs.len() == 2 {
            vec![batch, fo]
        } else {
            vec![fo]
        };
        let out = Tensor::from_vec(&out_shape, data);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push("linear", out, needs, Op::Linear { x, w, b })
    }

    /// Concatenate along the channel axis; inputs are all `[B,C_i,H,W]` or
    /// all `[C_i,H,W]` with matching batch and spatial dims.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        if xs.is_empty() {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_channels",
                detail: "no inputs".into(),
            });
        }
        let first = self.value(xs[0]).shape().to_vec();
        let rank = first.len();
        if rank != 3 && rank != 4 {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_channels",
                detail: format!("input {first:?}"),
            });
        }
        let (batch, h, w) = if rank == 4 {
            (first[0], first[2], first[3])
        } else {
            (1, first[1], first[2])
        };
        let mut channels = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.value(v).shape().to_vec();
            let ok = if rank == 4 {
                s.len() == 4 && s[0] == batch && s[2] == h && s[3] == w
            } else {
                s.len() == 3 && s[1] == h && s[2] == w
            };
            if !ok {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_channels",
                    detail: format!("{first:?} vs {s:?}"),
                });
            }
            channels.push(if rank == 4 { s[1] } else { s[0] });
        }
        let total_c: usize = channels.iter().sum();
        let spatial = h * w;
        let out_shape: Vec<usize> = if rank == 4 {
            vec![batch, total_c, h, w]
        } else {
            vec![total_c, h, w]
        };
        let mut out = Tensor::zeros(&out_shape);
        {
            let od = out.data_mut();
            for bi in 0..batch {
                let mut offset = 0usize;
                for (&v, &ch) in xs.iter().zip(&channels) {
                    let src = self.nodes[v.0].value.data();
                    let sl = ch * spatial;
                    od[(bi * total_c + offset) * spatial..(bi * total_c + offset) * spatial + sl]
                        .copy_from_slice(&src[bi * sl..(bi + 1) * sl]);
                    offset += ch;
                }
            }
        }
        let needs = xs.iter().any(|&v| self.needs(v));
        self.push(
            "concat_channels",
            out,
            needs,
            Op::ConcatChannels {
                xs: xs.to_vec(),
                channels,
                batch,
                spatial,
            },
        )
    }

    /// Global average pool: `[B,C,H,W] -> [B,C]` (or `[C,H,W] -> [C]`).
    pub fn adaptive_avg_pool(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xs = self.value(x).shape().to_vec();
        let (batch, c, spatial, batched) = match xs.len() {
            4 => (xs[0], xs[1], xs[2] * xs[3], true),
            3 => (1, xs[0], xs[1] * xs[2], false),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adaptive_avg_pool",
                    detail: format!("input {xs:?}"),
                })
            }
        };
        let xv = self.value(x).data();
        let mut data = vec![S::ZERO; batch * c];
        for (slot, plane) in data.iter_mut().zip(xv.chunks_exact(spatial)) {
            let mut acc = 0.0f64;
            for &v in plane {
                acc += v.to_f64();
            }
            *slot = S::from_f64(acc / spatial as f64);
        }
        let out_shape: Vec<usize> = if batched { vec![batch, c] } else { vec![c] };
        let out = Tensor::from_vec(&out_shape, data);
        let needs = self.needs(x);
        self.push(
            "adaptive_avg_pool",
            out,
            needs,
            Op::AdaptiveAvgPool { x, spatial },
        )
    }

    // ---- losses ----

    /// Mean squared difference over all elements -> scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse",
                detail: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let mut acc = 0.0f64;
        for (&x, &y) in av.data().iter().zip(bv.data()) {
            let d = x.to_f64() - y.to_f64();
            acc += d * d;
        }
        let out = Tensor::scalar(S::from_f64(acc / av.len() as f64));
        let needs = self.needs(a) || self.needs(b);
        self.push("mse", out, needs, Op::Mse { a, b })
    }

    /// Mean binary cross-entropy of predictions `p` against labels `y`,
    /// with probabilities clamped to `[EPS_LOG, 1-EPS_LOG]`.
    pub fn bce(&mut self, p: Var, y: Var) -> Result<Var, AutodiffError> {
        let (pv, yv) = (self.value(p), self.value(y));
        if pv.shape() != yv.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "bce",
                detail: format!("{:?} vs {:?}", pv.shape(), yv.shape()),
            });
        }
        let eps = EPS_LOG;
        let mut acc = 0.0f64;
        for (&pp, &yy) in pv.data().iter().zip(yv.data()) {
            let pc = pp.to_f64().clamp(eps, 1.0 - eps);
            let yy = yy.to_f64();
            acc -= yy * pc.ln() + (1.0 - yy) * (1.0 - pc).ln();
        }
        let out = Tensor::scalar(S::from_f64(acc / pv.len() as f64));
        let needs = self.needs(p);
        self.push("bce", out, needs, Op::Bce { p, y })
    }

    /// `mean(-ln(1 - p))`, clamped like [`bce`](Self::bce).
    pub fn neg_log_one_minus(&mut self, p: Var) -> Result<Var, AutodiffError> {
        let pv = self.value(p);
        let eps = EPS_LOG;
        let mut acc = 0.0f64;
        for &pp in pv.data() {
            let pc = pp.to_f64().clamp(eps, 1.0 - eps);
            acc -= (1.0 - pc).ln();
        }
        let out = Tensor::scalar(S::from_f64(acc / pv.len() as f64));
        let needs = self.needs(p);
        self.push("adversarial", out, needs, Op::NegLogOneMinus { p })
    }

    /// `|a - b|` for scalars, subgradient 0 at equality.
    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.value(a).len() != 1 || self.value(b).len() != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "abs_diff",
                detail: format!(
                    "{:?} vs {:?}, expected scalars",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        let d = self.value(a).item() - self.value(b).item();
        let out = Tensor::scalar(d.abs());
        let needs = self.needs(a) || self.needs(b);
        self.push("abs_diff", out, needs, Op::AbsDiff { a, b })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        let cs = S::from_f64(c);
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a * cs).collect();
        let out = Tensor::from_vec(v.shape(), data);
        let needs = self.needs(x);
        self.push("scale", out, needs, Op::Scale { x, c: cs })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(av.shape(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push("add", out, needs, Op::Add { a, b })
    }

    /// Weighted sum against fixed weights -> scalar.
    pub fn dot_const(&mut self, x: Var, weights: &[S]) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        if v.len() != weights.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot_const",
                detail: format!("{} elements vs {} weights", v.len(), weights.len()),
            });
        }
        let mut acc = 0.0f64;
        for (&a, &w) in v.data().iter().zip(weights) {
            acc += a.to_f64() * w.to_f64();
        }
        let out = Tensor::scalar(S::from_f64(acc));
        let needs = self.needs(x);
        self.push(
            "dot_const",
            out,
            needs,
            Op::DotConst {
                x,
                weights: weights.to_vec(),
            },
        )
    }

    // ---- backward ----

    /// Reverse sweep from a scalar root. Gradients of leaves stay readable
    /// via [`grad`](Self::grad); intermediate gradients are freed as the
    /// sweep passes them.
    pub fn backward(&mut self, root: Var) -> Result<(), AutodiffError> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(AutodiffError::NonScalarRoot(
                self.nodes[root.0].value.shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_vec(
            self.nodes[root.0].value.shape(),
            vec![S::ONE],
        ));
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let is_leaf = matches!(self.nodes[idx].op, Op::Leaf);
            if is_leaf {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_op(idx, &g, &mut grads);
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_op(&self, idx: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let nodes = &self.nodes;
        let ensure = |grads: &mut [Option<Tensor<S>>], v: Var| -> bool {
            if !nodes[v.0].needs_grad {
                return false;
            }
            if grads[v.0].is_none() {
                grads[v.0] = Some(Tensor::zeros(nodes[v.0].value.shape()));
            }
            true
        };
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                dims,
                batch,
            } => {
                self.conv_backward(*x, *w, *b, dims, *batch, g, grads, &ensure);
            }
            Op::BatchNormBatch {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                self.bn_batch_backward(*x, *gamma, *beta, mean, inv_std, g, grads, &ensure);
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                self.bn_eval_backward(*x, *gamma, *beta, mean, inv_std, g, grads, &ensure);
            }
            Op::Relu { x } => {
                if ensure(grads, *x) {
                    let xv = nodes[x.0].value.data();
                    let dx = grads[x.0].as_mut().unwrap().data_mut();
                    dx.par_chunks_mut(1 << 16)
                        .zip(xv.par_chunks(1 << 16))
                        .zip(g.data().par_chunks(1 << 16))
                        .for_each(|((d_c, x_c), g_c)| {
                            for ((d, &xx), &gg) in d_c.iter_mut().zip(x_c).zip(g_c) {
                                if xx > S::ZERO {
                                    *d += gg;
                                }
                            }
                        });
                }
            }
            Op::Sigmoid { x } => {
                if ensure(grads, *x) {
                    let yv = nodes[idx].value.data();
                    let dx = grads[x.0].as_mut().unwrap().data_mut();
                    for ((d, &y), &gg) in dx.iter_mut().zip(yv).zip(g.data()) {
                        *d += gg * y * (S::ONE - y);
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xs = nodes[x.0].value.shape();
                let (batch, fi) = if xs.len() == 2 {
                    (xs[0], xs[1])
                } else {
                    (1, xs[0])
                };
                let fo = nodes[w.0].value.shape()[0];
                let xv = nodes[x.0].value.data();
                let wv = nodes[w.0].value.data();
                if ensure(grads, *x) {
                    let dx = grads[x.0].as_mut().unwrap().data_mut();
                    for bi in 0..batch {
                        for o in 0..fo {
                            let gg = g.data()[bi * fo + o];
                            let wrow = &wv[o * fi..(o + 1) * fi];
                            let dxrow = &mut dx[bi * fi..(bi + 1) * fi];
                            for (d, &ww) in dxrow.iter_mut().zip(wrow) {
                                *d = gg.mul_add(ww, *d);
                            }
                        }
                    }
                }
                if ensure(grads, *w) {
                    let dw = grads[w.0].as_mut().unwrap().data_mut();
                    for bi in 0..batch {
                        let xrow = &xv[bi * fi..(bi + 1) * fi];
                        for o in 0..fo {
                            let gg = g.data()[bi * fo + o];
                            let dwrow = &mut dw[o * fi..(o + 1) * fi];
                            for (d, &xx) in dwrow.iter_mut().zip(xrow) {
                                *d = gg.mul_add(xx, *d);
                            }
                        }
                    }
                }
                if ensure(grads, *b) {
                    let db = grads[b.0].as_mut().unwrap().data_mut();
                    for bi in 0..batch {
                        for (o, d) in db.iter_mut().enumerate() {
                            *d += g.data()[bi * fo + o];
                        }
                    }
                }
            }
            Op::ConcatChannels {
                xs,
                channels,
                batch,
                spatial,
            } => {
                let total_c: usize = channels.iter().sum();
                for bi in 0..*batch {
                    let mut offset = 0usize;
                    for (&v, &ch) in xs.iter().zip(channels) {
                        if ensure(grads, v) {
                            let sl = ch * spatial;
                            let src = &g.data()[(bi * total_c + offset) * spatial
                                ..(bi * total_c + offset) * spatial + sl];
                            let dst = grads[v.0].as_mut().unwrap().data_mut();
                            for (d, &s) in dst[bi * sl..(bi + 1) * sl].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                        offset += ch;
                    }
                }
            }
            Op::AdaptiveAvgPool { x, spatial } => {
                if ensure(grads, *x) {
                    let inv = S::from_f64(1.0 / *spatial as f64);
                    let dx = grads[x.0].as_mut().unwrap().data_mut();
                    for (plane, &gg) in dx.chunks_exact_mut(*spatial).zip(g.data()) {
                        let contrib = gg * inv;
                        for d in plane {
                            *d += contrib;
                        }
                    }
                }
            }
            Op::Mse { a, b } => {
                let gg = g.item();
                let n = nodes[a.0].value.len();
                let factor = S::from_f64(2.0 / n as f64) * gg;
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if ensure(grads, *a) {
                    let da = grads[a.0].as_mut().unwrap().data_mut();
                    for ((d, &x), &y) in da.iter_mut().zip(av).zip(bv) {
                        *d = factor.mul_add(x - y, *d);
                    }
                }
                if ensure(grads, *b) {
                    let db = grads[b.0].as_mut().unwrap().data_mut();
                    for ((d, &x), &y) in db.iter_mut().zip(av).zip(bv) {
                        *d = factor.mul_add(y - x, *d);
                    }
                }
            }
            Op::Bce { p, y } => {
                if ensure(grads, *p) {
                    let gg = g.item().to_f64();
                    let n = nodes[p.0].value.len() as f64;
                    let pv = nodes[p.0].value.data();
                    let yv = nodes[y.0].value.data();
                    let dp = grads[p.0].as_mut().unwrap().data_mut();
                    for ((d, &pp), &yy) in dp.iter_mut().zip(pv).zip(yv) {
                        let praw = pp.to_f64();
                        if praw > EPS_LOG && praw < 1.0 - EPS_LOG {
                            let contrib = (praw - yy.to_f64()) / (praw * (1.0 - praw)) / n;
                            *d += S::from_f64(contrib * gg);
                        }
                    }
                }
            }
            Op::NegLogOneMinus { p } => {
                if ensure(grads, *p) {
                    let gg = g.item().to_f64();
                    let n = nodes[p.0].value.len() as f64;
                    let pv = nodes[p.0].value.data();
                    let dp = grads[p.0].as_mut().unwrap().data_mut();
                    for (d, &pp) in dp.iter_mut().zip(pv) {
                        let praw = pp.to_f64();
                        if praw > EPS_LOG && praw < 1.0 - EPS_LOG {
                            *d += S::from_f64(gg / (1.0 - praw) / n);
                        }
                    }
                }
            }
            Op::AbsDiff { a, b } => {
                let d = nodes[a.0].value.item() - nodes[b.0].value.item();
                let sign = if d > S::ZERO {
                    S::ONE
                } else if d < S::ZERO {
                    -S::ONE
                } else {
                    S::ZERO
                };
                let gg = g.item();
                if ensure(grads, *a) {
                    grads[a.0].as_mut().unwrap().data_mut()[0] += sign * gg;
                }
                if ensure(grads, *b) {
                    grads[b.0].as_mut().unwrap().data_mut()[0] += -sign * gg;
                }
            }
            Op::Scale { x, c } => {
                if ensure(grads, *x) {
                    let dx = grads[x.0].as_mut().unwrap().data_mut();
                    for (d, &gg) in dx.iter_mut().zip(g.data()) {
                        *d = c.mul_add(gg, *d);
                    }
                }
            }
            Op::Add { a, b } => {
                for &v in &[*a, *b] {
                    if ensure(grads, v) {
                        let dv = grads[v.0].as_mut().unwrap().data_mut();
                        for (d, &gg) in dv.iter_mut().zip(g.data()) {
                            *d += gg;
                        }
                    }
                }
            }
            Op::DotConst { x, weights } => {
                if ensure(grads, *x) {
                    let gg = g.item();
                    let dx = grads[x.0].as_mut().unwrap().data_mut();
                    for (d, &w) in dx.iter_mut().zip(weights) {
                        *d = w.mul_add(gg, *d);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        x: Var,
        w: Var,
        b: Var,
        dims: &ConvDims,
        batch: usize,
        g: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        ensure: &dyn Fn(&mut [Option<Tensor<S>>], Var) -> bool,
    ) {
        let nodes = &self.nodes;
        let xv = nodes[x.0].value.data();
        let wv = nodes[w.0].value.data();
        let n = dims.out_spatial();
        let k = dims.patch_len();
        let co = dims.c_out;
        let in_len = dims.c_in * dims.h * dims.w;
        let out_len = co * n;
        let _ = batch;

        let need_w = ensure(grads, w);
        let need_x = ensure(grads, x);
        // take the buffers out so both can be touched in one sweep
        let mut dw_t = if need_w { grads[w.0].take() } else { None };
        let mut dx_t = if need_x { grads[x.0].take() } else { None };
        let w_t = dx_t.as_ref().map(|_| transpose(wv, co, k)); // [k, co]

        // one parallel pass over samples: dW partials (reduced in batch
        // order afterwards) and per-sample dX scatter into disjoint chunks
        let dw_partial = |g_s: &[S], x_s: &[S]| -> Vec<S> {
            S::with_scratch(k * n, |col| {
                im2col(x_s, dims, col);
                let mut part = vec![S::ZERO; co * k];
                gemm_abt_set(&mut part, g_s, col, co, n, k);
                part
            })
        };
        let dw_partials: Vec<Option<Vec<S>>> = match dx_t.as_mut() {
            Some(dxt) => dxt
                .data_mut()
                .par_chunks_mut(in_len)
                .zip(g.data().par_chunks(out_len))
                .zip(xv.par_chunks(in_len))
                .map(|((dx_s, g_s), x_s)| {
                    S::with_scratch(k * n, |gcol| {
                        gemm_set(gcol, w_t.as_ref().unwrap(), g_s, k, co, n);
                        col2im_acc(gcol, dims, dx_s);
                    });
                    need_w.then(|| dw_partial(g_s, x_s))
                })
                .collect(),
            None if need_w => g
                .data()
                .par_chunks(out_len)
                .zip(xv.par_chunks(in_len))
                .map(|(g_s, x_s)| Some(dw_partial(g_s, x_s)))
                .collect(),
            None => Vec::new(),
        };
        if let Some(dwt) = dw_t.as_mut() {
            let dw = dwt.data_mut();
            for part in dw_partials.into_iter().flatten() {
                for (d, p) in dw.iter_mut().zip(part) {
                    *d += p;
                }
            }
        }
        if need_w {
            grads[w.0] = dw_t;
        }
        if need_x {
            grads[x.0] = dx_t;
        }

        if ensure(grads, b) {
            let db = grads[b.0].as_mut().unwrap().data_mut();
            for g_s in g.data().chunks_exact(out_len) {
                for (c, d) in db.iter_mut().enumerate() {
                    let (acc, _) = sum_sq8(&g_s[c * n..(c + 1) * n]);
                    *d += S::from_f64(acc);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_batch_backward(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[S],
        inv_std: &[S],
        g: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        ensure: &dyn Fn(&mut [Option<Tensor<S>>], Var) -> bool,
    ) {
        let nodes = &self.nodes;
        let xs = nodes[x.0].value.shape();
        let (b, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
        let count = (b * plane) as f64;
        let xv = nodes[x.0].value.data();
        let gv = nodes[gamma.0].value.data();

        // per-channel sums of dy and dy*xhat, partials per sample
        let mut partials = vec![(0.0f64, 0.0f64); b * c];
        partials
            .par_chunks_mut(c)
            .enumerate()
            .for_each(|(bi, prow)| {
                for (ch, slot) in prow.iter_mut().enumerate() {
                    let base = (bi * c + ch) * plane;
                    *slot = sum_dy_dyx8(
                        &g.data()[base..base + plane],
                        &xv[base..base + plane],
                        mean[ch].to_f64(),
                        inv_std[ch].to_f64(),
                    );
                }
            });
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dyx = vec![0.0f64; c];
        for bi in 0..b {
            for ch in 0..c {
                sum_dy[ch] += partials[bi * c + ch].0;
                sum_dyx[ch] += partials[bi * c + ch].1;
            }
        }

        if ensure(grads, gamma) {
            let dg = grads[gamma.0].as_mut().unwrap().data_mut();
            for (d, &s) in dg.iter_mut().zip(&sum_dyx) {
                *d += S::from_f64(s);
            }
        }
        if ensure(grads, beta) {
            let db = grads[beta.0].as_mut().unwrap().data_mut();
            for (d, &s) in db.iter_mut().zip(&sum_dy) {
                *d += S::from_f64(s);
            }
        }
        if ensure(grads, x) {
            let dx = grads[x.0].as_mut().unwrap().data_mut();
            dx.par_chunks_mut(c * plane)
                .enumerate()
                .for_each(|(bi, dx_s)| {
                    for ch in 0..c {
                        let m = mean[ch].to_f64();
                        let is = inv_std[ch].to_f64();
                        let ga = gv[ch].to_f64();
                        let mean_dy = sum_dy[ch] / count;
                        let mean_dyx = sum_dyx[ch] / count;
                        let base = (bi * c + ch) * plane;
                        for ((d, &gg), &xx) in dx_s[ch * plane..(ch + 1) * plane]
                            .iter_mut()
                            .zip(&g.data()[base..base + plane])
                            .zip(&xv[base..base + plane])
                        {
                            let xhat = (xx.to_f64() - m) * is;
                            let contrib = ga * is * (gg.to_f64() - mean_dy - xhat * mean_dyx);
                            *d += S::from_f64(contrib);
                        }
                    }
                });
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_eval_backward(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[S],
        inv_std: &[S],
        g: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
        ensure: &dyn Fn(&mut [Option<Tensor<S>>], Var) -> bool,
    ) {
        let nodes = &self.nodes;
        let xs = nodes[x.0].value.shape();
        let (b, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
        let xv = nodes[x.0].value.data();
        let gv = nodes[gamma.0].value.data();
        if ensure(grads, x) {
            let dx = grads[x.0].as_mut().unwrap().data_mut();
            for bi in 0..b {
                for ch in 0..c {
                    let scale = gv[ch] * inv_std[ch];
                    let base = (bi * c + ch) * plane;
                    for (d, &gg) in dx[base..base + plane]
                        .iter_mut()
                        .zip(&g.data()[base..base + plane])
                    {
                        *d = scale.mul_add(gg, *d);
                    }
                }
            }
        }
        if ensure(grads, gamma) {
            let dg = grads[gamma.0].as_mut().unwrap().data_mut();
            for bi in 0..b {
                for ch in 0..c {
                    let base = (bi * c + ch) * plane;
                    let mut acc = 0.0f64;
                    for (&gg, &xx) in g.data()[base..base + plane]
                        .iter()
                        .zip(&xv[base..base + plane])
                    {
                        acc += gg.to_f64() * (xx.to_f64() - mean[ch].to_f64()) * inv_std[ch].to_f64();
                    }
                    dg[ch] += S::from_f64(acc);
                }
            }
        }
        if ensure(grads, beta) {
            let db = grads[beta.0].as_mut().unwrap().data_mut();
            for bi in 0..b {
                for ch in 0..c {
                    let base = (bi * c + ch) * plane;
                    let mut acc = 0.0f64;
                    for &gg in &g.data()[base..base + plane] {
                        acc += gg.to_f64();
                    }
                    db[ch] += S::from_f64(acc);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data)
    }

    #[test]
    fn conv_identity_kernel_reproduces_input() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 4, 4], (0..16).map(|v| v as f64).collect()));
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let w = g.constant(t(&[1, 1, 3, 3], kernel));
        let b = g.constant(t(&[1], vec![0.0]));
        let y = g.conv2d(x, w, b, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv_single_pixel_all_ones_kernel() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 1, 1], vec![5.0]));
        let w = g.constant(t(&[1, 1, 3, 3], vec![1.0; 9]));
        let b = g.constant(t(&[1], vec![0.0]));
        let y = g.conv2d(x, w, b, 1, 1).unwrap();
        assert_eq!(g.value(y).item(), 5.0);
    }

    #[test]
    fn conv_rejects_even_kernel_and_bad_stride() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[1, 4, 4]));
        let w = g.constant(Tensor::zeros(&[1, 1, 2, 2]));
        let b = g.constant(Tensor::zeros(&[1]));
        assert!(matches!(
            g.conv2d(x, w, b, 1, 1),
            Err(AutodiffError::EvenKernel(2, 2))
        ));
        let w3 = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
        assert!(matches!(
            g.conv2d(x, w3, b, 2, 0),
            Err(AutodiffError::NonIntegerOutput { .. })
        ));
    }

    #[test]
    fn batch_norm_normalizes_per_channel() {
        let mut g = Graph::<f64>::new();
        let mut rng = crate::rng::SplitMix64::new(2);
        let x_data: Vec<f64> = (0..2 * 3 * 4 * 4).map(|_| rng.next_f64() * 3.0).collect();
        let x = g.constant(t(&[2, 3, 4, 4], x_data));
        let gamma = g.constant(t(&[3], vec![1.0; 3]));
        let beta = g.constant(t(&[3], vec![0.0; 3]));
        let (y, stats) = g.batch_norm_batch(x, gamma, beta, 1e-5).unwrap();
        assert_eq!(stats.count, 32);
        // per-channel mean ~0, var ~1
        let yv = g.value(y).data();
        for ch in 0..3 {
            let mut vals = Vec::new();
            for b in 0..2 {
                let base = (b * 3 + ch) * 16;
                vals.extend_from_slice(&yv[base..base + 16]);
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn batch_norm_eval_with_identity_stats_is_identity() {
        let mut g = Graph::<f64>::new();
        let x_data: Vec<f64> = (0..16).map(|v| v as f64 / 7.0).collect();
        let x = g.constant(t(&[1, 1, 4, 4], x_data.clone()));
        let gamma = g.constant(t(&[1], vec![1.0]));
        let beta = g.constant(t(&[1], vec![0.0]));
        let y = g
            .batch_norm_eval(x, gamma, beta, &[0.0], &[1.0], 1e-5)
            .unwrap();
        for (a, b) in g.value(y).data().iter().zip(&x_data) {
            assert!((a - b).abs() < 1e-2); // eps shrinks values slightly
        }
    }

    #[test]
    fn replicate_and_concat_channel_bookkeeping() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 64, 8, 8]));
        let b = g.constant(Tensor::zeros(&[2, 3, 8, 8]));
        let c = g.constant(Tensor::zeros(&[2, 30, 8, 8]));
        let d = g.constant(Tensor::zeros(&[2, 30, 8, 8]));
        let y = g.concat_channels(&[a, b, c, d]).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 127, 8, 8]);
    }

    #[test]
    fn concat_order_is_argument_order() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[1, 1, 1, 2], vec![1.0, 2.0]));
        let b = g.constant(t(&[1, 2, 1, 2], vec![3.0, 4.0, 5.0, 6.0]));
        let y = g.concat_channels(&[a, b]).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn pool_means_and_distributes() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let y = g.adaptive_avg_pool(x).unwrap();
        assert_eq!(g.value(y).data(), &[2.5]);
        let root = g.dot_const(y, &[2.0]).unwrap();
        g.backward(root).unwrap();
        let dx = g.grad(x).unwrap();
        for &d in dx.data() {
            assert!((d - 0.5).abs() < 1e-15); // 2.0 / 4 elements
        }
    }

    #[test]
    fn pool_constant_plane() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 3, 3], vec![3.0; 9]));
        let y = g.adaptive_avg_pool(x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::scalar(0.0));
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).item(), 0.5);
    }

    #[test]
    fn mse_and_bce_and_absdiff_values() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(t(&[3], vec![1.0, 2.0, 3.0]));
        let y = g.mse(a, a).unwrap();
        assert_eq!(g.value(y).item(), 0.0);

        let p = g.constant(Tensor::scalar(0.5));
        let lbl = g.constant(Tensor::scalar(1.0));
        let l = g.bce(p, lbl).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-4);

        let u = g.constant(Tensor::scalar(0.2));
        let v = g.constant(Tensor::scalar(0.5));
        let d = g.abs_diff(u, v).unwrap();
        assert!((g.value(d).item() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn adversarial_loss_values() {
        let mut g = Graph::<f64>::new();
        let half = g.constant(Tensor::scalar(0.5));
        let l = g.neg_log_one_minus(half).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);

        let fooled = g.constant(Tensor::scalar(EPS_LOG));
        let l0 = g.neg_log_one_minus(fooled).unwrap();
        assert!(g.value(l0).item() < 2e-6);

        let caught = g.constant(Tensor::scalar(1.0 - EPS_LOG));
        let lbig = g.neg_log_one_minus(caught).unwrap();
        assert!((g.value(lbig).item() - (-EPS_LOG.ln())).abs() < 1e-6);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::scalar(1e308));
        let y = g.scale(x, 1e10);
        assert!(matches!(y, Err(AutodiffError::NonFinite { .. })));
    }

    #[test]
    fn gradient_mass_is_conserved_by_linear_ops() {
        // concat + pool adjoints: sum of input grads equals sum of upstream
        let mut g = Graph::<f64>::new();
        let mut rng = crate::rng::SplitMix64::new(21);
        let a = g.param(t(&[1, 2, 2, 2], (0..8).map(|_| rng.next_f64()).collect()));
        let b = g.param(t(&[1, 3, 2, 2], (0..12).map(|_| rng.next_f64()).collect()));
        let cat = g.concat_channels(&[a, b]).unwrap();
        let pooled = g.adaptive_avg_pool(cat).unwrap(); // [1,5]
        let weights: Vec<f64> = (0..5).map(|_| rng.next_f64()).collect();
        let root = g.dot_const(pooled, &weights).unwrap();
        g.backward(root).unwrap();
        let mass_in: f64 = g.grad(a).unwrap().data().iter().sum::<f64>()
            + g.grad(b).unwrap().data().iter().sum::<f64>();
        // upstream grad of pooled output is `weights`; pool preserves mass
        let mass_up: f64 = weights.iter().sum();
        assert!((mass_in - mass_up).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], vec![1.0, 2.0]));
        assert!(matches!(
            g.backward(x),
            Err(AutodiffError::NonScalarRoot(_))
        ));
    }

    #[test]
    fn forward_is_deterministic_across_runs() {
        let run = || -> Vec<f32> {
            let mut g = Graph::<f32>::new();
            let mut rng = crate::rng::SplitMix64::new(77);
            let x = g.constant(Tensor::from_vec(
                &[4, 3, 8, 8],
                (0..4 * 3 * 64).map(|_| rng.next_f32()).collect(),
            ));
            let w = g.constant(Tensor::from_vec(
                &[16, 3, 3, 3],
                (0..16 * 27).map(|_| rng.next_f32() - 0.5).collect(),
            ));
            let b = g.constant(Tensor::from_vec(
                &[16],
                (0..16).map(|_| rng.next_f32()).collect(),
            ));
            let y = g.conv2d(x, w, b, 1, 1).unwrap();
            let r = g.relu(y).unwrap();
            g.value(r).data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
