//! Layer kernels shared by forward, backward and incremental re-evaluation.
//!
//! Conv kernels compute a caller-chosen range of output columns (TDNN) or rows
//! (CNN) so an occlusion only re-evaluates the affected region. The full
//! forward pass calls the same kernels over the whole range, so both paths
//! produce identical values.

use super::params::Affine;

pub(crate) const VAR_EPS: f64 = 1e-8;

/// `c[m x n] += a[m x k] * b[k x n]` with explicit strides, each slice starting at element (0, 0).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Time convolution with same padding followed by ReLU; writes output columns `[t0, t1)`.
/// `x` is `[cin][t_len]`, `out` is `[cout][t_len]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_relu(
    x: &[f64],
    cin: usize,
    t_len: usize,
    p: &Affine,
    k: usize,
    cout: usize,
    t0: usize,
    t1: usize,
    out: &mut [f64],
) {
    let pad = (k / 2) as isize;
    for co in 0..cout {
        out[co * t_len + t0..co * t_len + t1].fill(p.bias[co]);
    }
    for j in 0..k {
        let s = j as isize - pad;
        let lo = (t0 as isize).max(-s) as usize;
        let hi = (t1 as isize).min(t_len as isize - s);
        if hi <= lo as isize {
            continue;
        }
        let hi = hi as usize;
        gemm(
            cout,
            cin,
            hi - lo,
            &p.weight[j * cout * cin..],
            cin,
            1,
            &x[(lo as isize + s) as usize..],
            t_len,
            1,
            &mut out[lo..],
            t_len,
            1,
        );
    }
    for co in 0..cout {
        relu_inplace(&mut out[co * t_len + t0..co * t_len + t1]);
    }
}

/// Accumulates parameter gradients and, when `dx` is given, the input gradient.
/// `dout` must already include the ReLU mask.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    x: &[f64],
    cin: usize,
    t_len: usize,
    p: &Affine,
    k: usize,
    cout: usize,
    dout: &[f64],
    grad: &mut Affine,
    mut dx: Option<&mut [f64]>,
) {
    let pad = (k / 2) as isize;
    for co in 0..cout {
        grad.bias[co] += dout[co * t_len..(co + 1) * t_len].iter().sum::<f64>();
    }
    for j in 0..k {
        let s = j as isize - pad;
        let lo = 0isize.max(-s) as usize;
        let hi = t_len as isize - 0isize.max(s);
        if hi <= lo as isize {
            continue;
        }
        let n = hi as usize - lo;
        let xo = (lo as isize + s) as usize;
        gemm(
            cout,
            n,
            cin,
            &dout[lo..],
            t_len,
            1,
            &x[xo..],
            1,
            t_len,
            &mut grad.weight[j * cout * cin..],
            cin,
            1,
        );
        if let Some(dx) = dx.as_deref_mut() {
            gemm(
                cin,
                cout,
                n,
                &p.weight[j * cout * cin..],
                1,
                cin,
                &dout[lo..],
                t_len,
                1,
                &mut dx[xo..],
                t_len,
                1,
            );
        }
    }
}

/// Zero-padded slab of input rows `[r0 - pad, r1 + pad)` with `pad` blank columns each side.
fn padded_slab(x: &[f64], cin: usize, h: usize, w: usize, pad: usize, r0: usize, r1: usize) -> (Vec<f64>, usize, usize) {
    let wp = w + 2 * pad;
    let rows = r1 - r0 + 2 * pad;
    let mut slab = vec![0.0; cin * rows * wp];
    for ci in 0..cin {
        for r in 0..rows {
            let src = r0 as isize - pad as isize + r as isize;
            if src < 0 || src >= h as isize {
                continue;
            }
            let src = src as usize;
            let dst = ci * rows * wp + r * wp + pad;
            slab[dst..dst + w].copy_from_slice(&x[ci * h * w + src * w..ci * h * w + (src + 1) * w]);
        }
    }
    (slab, rows, wp)
}

/// 2-D `k x k` convolution with same padding followed by ReLU; writes output rows `[r0, r1)`.
/// `x` is `[cin][h][w]`, `out` is `[cout][h][w]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_relu(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    p: &Affine,
    k: usize,
    cout: usize,
    r0: usize,
    r1: usize,
    out: &mut [f64],
) {
    if r1 <= r0 {
        return;
    }
    let pad = k / 2;
    let (slab, rows, wp) = padded_slab(x, cin, h, w, pad, r0, r1);
    // "wide" output: row pitch wp, trailing 2*pad columns of each row are junk
    let n = (r1 - r0 - 1) * wp + w;
    let mut wide = vec![0.0; cout * n];
    for di in 0..k {
        for dj in 0..k {
            let tap = di * k + dj;
            gemm(
                cout,
                cin,
                n,
                &p.weight[tap * cout * cin..],
                cin,
                1,
                &slab[di * wp + dj..],
                rows * wp,
                1,
                &mut wide,
                n,
                1,
            );
        }
    }
    for co in 0..cout {
        for r in r0..r1 {
            let src = &wide[co * n + (r - r0) * wp..co * n + (r - r0) * wp + w];
            let dst = &mut out[co * h * w + r * w..co * h * w + (r + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                let v = s + p.bias[co];
                *d = if v > 0.0 { v } else { 0.0 };
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    p: &Affine,
    k: usize,
    cout: usize,
    dout: &[f64],
    grad: &mut Affine,
    dx: Option<&mut [f64]>,
) {
    let pad = k / 2;
    let (slab, rows, wp) = padded_slab(x, cin, h, w, pad, 0, h);
    let n = (h - 1) * wp + w;
    let mut dwide = vec![0.0; cout * n];
    for co in 0..cout {
        grad.bias[co] += dout[co * h * w..(co + 1) * h * w].iter().sum::<f64>();
        for r in 0..h {
            dwide[co * n + r * wp..co * n + r * wp + w].copy_from_slice(&dout[co * h * w + r * w..co * h * w + (r + 1) * w]);
        }
    }
    let mut dslab = dx.as_ref().map(|_| vec![0.0; cin * rows * wp]);
    for di in 0..k {
        for dj in 0..k {
            let tap = di * k + dj;
            let off = di * wp + dj;
            gemm(
                cout,
                n,
                cin,
                &dwide,
                n,
                1,
                &slab[off..],
                1,
                rows * wp,
                &mut grad.weight[tap * cout * cin..],
                cin,
                1,
            );
            if let Some(ds) = dslab.as_mut() {
                gemm(
                    cin,
                    cout,
                    n,
                    &p.weight[tap * cout * cin..],
                    1,
                    cin,
                    &dwide,
                    n,
                    1,
                    &mut ds[off..],
                    rows * wp,
                    1,
                );
            }
        }
    }
    if let (Some(dx), Some(ds)) = (dx, dslab) {
        for ci in 0..cin {
            for r in 0..h {
                let src = ci * rows * wp + (r + pad) * wp + pad;
                for c in 0..w {
                    dx[ci * h * w + r * w + c] += ds[src + c];
                }
            }
        }
    }
}

/// 2x2 stride-2 max-pool (floor) over `[c][h][w]`; writes output rows `[r0, r1)` and argmax offsets.
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool2(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    r0: usize,
    r1: usize,
    out: &mut [f64],
    idx: &mut [u32],
) {
    let (ho, wo) = (h / 2, w / 2);
    for ch in 0..c {
        let base = ch * h * w;
        for r in r0..r1 {
            for q in 0..wo {
                let mut best = (2 * r) * w + 2 * q;
                for (dr, dq) in [(0, 1), (1, 0), (1, 1)] {
                    let cand = (2 * r + dr) * w + 2 * q + dq;
                    if x[base + cand] > x[base + best] {
                        best = cand;
                    }
                }
                out[ch * ho * wo + r * wo + q] = x[base + best];
                idx[ch * ho * wo + r * wo + q] = best as u32;
            }
        }
    }
}

pub(crate) fn maxpool2_backward(dout: &[f64], idx: &[u32], c: usize, h: usize, w: usize) -> Vec<f64> {
    let per_out = (h / 2) * (w / 2);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for o in 0..per_out {
            dx[ch * h * w + idx[ch * per_out + o] as usize] += dout[ch * per_out + o];
        }
    }
    dx
}

/// Per-feature mean and `sqrt(var + eps)` over time for a `[c][t][w]` grid.
/// Feature `f = ch * w + col`; output is all means followed by all deviations.
pub(crate) fn stats_pool_grid(x: &[f64], c: usize, t_len: usize, w: usize) -> Vec<f64> {
    let nf = c * w;
    let mut out = vec![0.0; 2 * nf];
    let inv = 1.0 / t_len as f64;
    for ch in 0..c {
        for col in 0..w {
            let f = ch * w + col;
            let at = |t: usize| x[ch * t_len * w + t * w + col];
            let mean = (0..t_len).map(at).sum::<f64>() * inv;
            let var = (0..t_len).map(|t| (at(t) - mean) * (at(t) - mean)).sum::<f64>() * inv;
            out[f] = mean;
            out[nf + f] = (var + VAR_EPS).sqrt();
        }
    }
    out
}

pub(crate) fn stats_pool_grid_backward(x: &[f64], pooled: &[f64], dpooled: &[f64], c: usize, t_len: usize, w: usize) -> Vec<f64> {
    let nf = c * w;
    let inv = 1.0 / t_len as f64;
    let mut dx = vec![0.0; x.len()];
    for ch in 0..c {
        for col in 0..w {
            let f = ch * w + col;
            let (mean, std) = (pooled[f], pooled[nf + f]);
            let dm = dpooled[f] * inv;
            let ds = dpooled[nf + f] * inv / std;
            for t in 0..t_len {
                let i = ch * t_len * w + t * w + col;
                dx[i] = dm + ds * (x[i] - mean);
            }
        }
    }
    dx
}

pub(crate) fn dense(p: &Affine, x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    p.bias
        .iter()
        .enumerate()
        .map(|(o, b)| b + p.weight[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

/// Accumulates `dW += dy x^T`, `db += dy`; returns `W^T dy`.
pub(crate) fn dense_backward(p: &Affine, x: &[f64], dy: &[f64], grad: Option<&mut Affine>) -> Vec<f64> {
    let n_in = x.len();
    if let Some(g) = grad {
        for (o, d) in dy.iter().enumerate() {
            g.bias[o] += d;
            for (gw, v) in g.weight[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                *gw += d * v;
            }
        }
    }
    let mut dx = vec![0.0; n_in];
    for (o, d) in dy.iter().enumerate() {
        for (a, w) in dx.iter_mut().zip(&p.weight[o * n_in..(o + 1) * n_in]) {
            *a += d * w;
        }
    }
    dx
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
