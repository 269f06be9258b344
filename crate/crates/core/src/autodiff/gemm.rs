//! Small dense linear-algebra kernels behind the convolution ops.
//!
//! Everything is row-major. The matmul keeps a 4x32 accumulator tile in
//! registers; with FMA available it runs close to memory speed for the
//! matrix sizes convolutions produce here. No threading at this level:
//! callers parallelize over batch samples, which keeps every write owned by
//! exactly one thread and reductions in a fixed order.

use super::tensor::Scalar;

const MR: usize = 4;
const NR: usize = 32;

/// `c[M,N] += a[M,K] * b[K,N]`.
pub fn gemm_acc<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    gemm::<S, true>(c, a, b, m, k, n);
}

/// `c[M,N] = a[M,K] * b[K,N]`, ignoring (and fully overwriting) prior
/// contents, so the destination can come from uninitialized scratch.
pub fn gemm_set<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    gemm::<S, false>(c, a, b, m, k, n);
}

fn gemm<S: Scalar, const ACC: bool>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut mi = 0;
    while mi < m {
        let mr = MR.min(m - mi);
        let mut nj = 0;
        while nj < n {
            let nr = NR.min(n - nj);
            if mr == MR && nr == NR {
                kernel_full::<S, ACC>(c, a, b, k, n, mi, nj);
            } else {
                kernel_edge::<S, ACC>(c, a, b, k, n, mi, nj, mr, nr);
            }
            nj += NR;
        }
        mi += MR;
    }
}

/// Full 4x32 register tile.
#[inline]
fn kernel_full<S: Scalar, const ACC: bool>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    k: usize,
    n: usize,
    mi: usize,
    nj: usize,
) {
    let mut acc = [[S::ZERO; NR]; MR];
    if ACC {
        for (r, row) in acc.iter_mut().enumerate() {
            let base = (mi + r) * n + nj;
            row.copy_from_slice(&c[base..base + NR]);
        }
    }
    let a0 = &a[mi * k..(mi + 1) * k];
    let a1 = &a[(mi + 1) * k..(mi + 2) * k];
    let a2 = &a[(mi + 2) * k..(mi + 3) * k];
    let a3 = &a[(mi + 3) * k..(mi + 4) * k];
    for kk in 0..k {
        let brow: &[S; NR] = b[kk * n + nj..kk * n + nj + NR].try_into().unwrap();
        let (x0, x1, x2, x3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
        for j in 0..NR {
            let bv = brow[j];
            acc[0][j] = x0.mul_add(bv, acc[0][j]);
            acc[1][j] = x1.mul_add(bv, acc[1][j]);
            acc[2][j] = x2.mul_add(bv, acc[2][j]);
            acc[3][j] = x3.mul_add(bv, acc[3][j]);
        }
    }
    for (r, row) in acc.iter().enumerate() {
        let base = (mi + r) * n + nj;
        c[base..base + NR].copy_from_slice(row);
    }
}

/// Ragged edges of the tile grid.
#[inline]
fn kernel_edge<S: Scalar, const ACC: bool>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    k: usize,
    n: usize,
    mi: usize,
    nj: usize,
    mr: usize,
    nr: usize,
) {
    for r in 0..mr {
        let arow = &a[(mi + r) * k..(mi + r) * k + k];
        let crow = &mut c[(mi + r) * n + nj..(mi + r) * n + nj + nr];
        if !ACC {
            crow.fill(S::ZERO);
        }
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n + nj..kk * n + nj + nr];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = av.mul_add(bv, *cv);
            }
        }
    }
}

/// Dot product with 16 independent partial sums in a fixed combination
/// order: vectorizes without reassociating the math differently run to run.
#[inline]
fn dot16<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut partial = [S::ZERO; 16];
    let mut ac = a.chunks_exact(16);
    let mut bc = b.chunks_exact(16);
    for (av, bv) in ac.by_ref().zip(bc.by_ref()) {
        for l in 0..16 {
            partial[l] = av[l].mul_add(bv[l], partial[l]);
        }
    }
    for (l, (&x, &y)) in ac.remainder().iter().zip(bc.remainder()).enumerate() {
        partial[l] = x.mul_add(y, partial[l]);
    }
    let mut acc = S::ZERO;
    for p in partial {
        acc += p;
    }
    acc
}

/// `c[M,K] += a[M,N] * b[K,N]^T`: dot products of row pairs, with a 4x4
/// row-reuse tile. This is the weight-gradient shape, where both operands
/// are naturally row-major over the contraction axis.
pub fn gemm_abt_acc<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, n: usize, k: usize) {
    gemm_abt::<S, true>(c, a, b, m, n, k);
}

/// `c[M,K] = a[M,N] * b[K,N]^T`, overwriting the destination.
pub fn gemm_abt_set<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, n: usize, k: usize) {
    gemm_abt::<S, false>(c, a, b, m, n, k);
}

fn gemm_abt<S: Scalar, const ACC: bool>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    m: usize,
    n: usize,
    k: usize,
) {
    debug_assert_eq!(c.len(), m * k);
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    const TM: usize = 4;
    const TK: usize = 4;
    let mut mi = 0;
    while mi < m {
        let tm = TM.min(m - mi);
        let mut kj = 0;
        while kj < k {
            let tk = TK.min(k - kj);
            for r in 0..tm {
                let arow = &a[(mi + r) * n..(mi + r + 1) * n];
                for cc in 0..tk {
                    let brow = &b[(kj + cc) * n..(kj + cc + 1) * n];
                    let dot = dot16(arow, brow);
                    let slot = &mut c[(mi + r) * k + kj + cc];
                    if ACC {
                        *slot += dot;
                    } else {
                        *slot = dot;
                    }
                }
            }
            kj += TK;
        }
        mi += TM;
    }
}

/// Row-major transpose: `out[N,M]` from `a[M,N]`.
pub fn transpose<S: Scalar>(a: &[S], m: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Shape bookkeeping for one 2-D convolution.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvDims {
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_spatial(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Lower one sample to column form `col[patch_len, out_h*out_w]`:
/// `col[(ci*kh+ky)*kw+kx, oy*out_w+ox] = x[ci, oy*s+ky-pad, ox*s+kx-pad]`
/// with zeros outside the image.
pub fn im2col<S: Scalar>(x: &[S], d: &ConvDims, col: &mut [S]) {
    debug_assert_eq!(x.len(), d.c_in * d.h * d.w);
    debug_assert_eq!(col.len(), d.patch_len() * d.out_spatial());
    let ow = d.out_w;
    for ci in 0..d.c_in {
        let plane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = ((ci * d.kh + ky) * d.kw + kx) * d.out_spatial();
                for oy in 0..d.out_h {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy >= d.h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let iy = iy as usize;
                    if d.stride == 1 {
                        // contiguous run of valid ox positions
                        let shift = kx as isize - d.pad as isize;
                        let ox_lo = (-shift).max(0) as usize;
                        let ox_hi = ((d.w as isize - shift).min(ow as isize)).max(0) as usize;
                        dst[..ox_lo.min(ow)].fill(S::ZERO);
                        if ox_hi > ox_lo {
                            let src_lo = (ox_lo as isize + shift) as usize;
                            dst[ox_lo..ox_hi].copy_from_slice(
                                &plane[iy * d.w + src_lo..iy * d.w + src_lo + (ox_hi - ox_lo)],
                            );
                        }
                        dst[ox_hi.max(ox_lo)..].fill(S::ZERO);
                    } else {
                        for (ox, v) in dst.iter_mut().enumerate() {
                            let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                            *v = if ix >= 0 && ix < d.w as isize {
                                plane[iy * d.w + ix as usize]
                            } else {
                                S::ZERO
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Column form transposed: `col_t[out_h*out_w, patch_len]`, used as the
/// right operand when accumulating weight gradients.
pub fn im2col_t<S: Scalar>(x: &[S], d: &ConvDims, col_t: &mut [S]) {
    debug_assert_eq!(col_t.len(), d.patch_len() * d.out_spatial());
    let pl = d.patch_len();
    col_t.fill(S::ZERO);
    for ci in 0..d.c_in {
        let plane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (ci * d.kh + ky) * d.kw + kx;
                for oy in 0..d.out_h {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..d.out_w {
                        let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            col_t[(oy * d.out_w + ox) * pl + row] = plane[iy * d.w + ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `g[patch_len, out_spatial]` back into
/// image layout.
pub fn col2im_acc<S: Scalar>(g: &[S], d: &ConvDims, dx: &mut [S]) {
    debug_assert_eq!(g.len(), d.patch_len() * d.out_spatial());
    debug_assert_eq!(dx.len(), d.c_in * d.h * d.w);
    for ci in 0..d.c_in {
        let plane = ci * d.h * d.w;
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = ((ci * d.kh + ky) * d.kw + kx) * d.out_spatial();
                for oy in 0..d.out_h {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let src = &g[row + oy * d.out_w..row + (oy + 1) * d.out_w];
                    if d.stride == 1 {
                        let shift = kx as isize - d.pad as isize;
                        let ox_lo = (-shift).max(0) as usize;
                        let ox_hi =
                            ((d.w as isize - shift).min(d.out_w as isize)).max(0) as usize;
                        if ox_hi > ox_lo {
                            let dst_lo = plane + iy * d.w + (ox_lo as isize + shift) as usize;
                            let dst = &mut dx[dst_lo..dst_lo + (ox_hi - ox_lo)];
                            for (dv, &sv) in dst.iter_mut().zip(&src[ox_lo..ox_hi]) {
                                *dv += sv;
                            }
                        }
                    } else {
                        for (ox, &sv) in src.iter().enumerate() {
                            let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                dx[plane + iy * d.w + ix as usize] += sv;
                            }
                        }
                    }
                }
            }
        }
    }
}
