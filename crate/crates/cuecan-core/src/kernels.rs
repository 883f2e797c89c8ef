//! Numeric kernels: forward and backward passes for every structured op.
//!
//! These are pure functions over [`Tensor4`] values; the tape (see
//! [`crate::tape`]) owns recording, saved activations, and finiteness
//! checks. All loops are serial with a fixed traversal order, so results
//! are bit-identical across runs.
//!
//! Convolutions walk, for each kernel row, the contiguous span of valid
//! input columns and run an axpy over the contiguous output-channel run
//! innermost. That keeps every inner loop on plain slices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, CoreResult};
use crate::tensor::{Dims4, TapMask, Tensor4};

/// Stride-1 "same" cross-correlation. `weight` is (k, k, Cin, Cout) with odd
/// k and zero padding k/2; `bias` is (1, 1, 1, Cout). Masked taps are
/// skipped entirely, so stored values at masked positions never leak into
/// the output.
pub fn conv2d_fwd(
    x: &Tensor4,
    weight: &Tensor4,
    bias: &Tensor4,
    mask: Option<&TapMask>,
) -> CoreResult<Tensor4> {
    let (xd, wd, bd) = (x.dims(), weight.dims(), bias.dims());
    let k = wd.b;
    if wd.h != k || k % 2 == 0 {
        return arg_err("conv2d", format!("kernel must be odd square, got ({},{})", wd.b, wd.h));
    }
    if wd.w != xd.c {
        return shape_err("conv2d", format!("input C {} vs kernel Cin {}", xd.c, wd.w));
    }
    if bd != Dims4::new(1, 1, 1, wd.c) {
        return shape_err("conv2d", format!("bias dims {} for Cout {}", bd, wd.c));
    }
    if let Some(m) = mask {
        if m.k() != k {
            return shape_err("conv2d", format!("mask k {} vs kernel k {}", m.k(), k));
        }
    }
    let (cin, cout, pad) = (wd.w, wd.c, k / 2);
    let (bsz, h, w) = (xd.b, xd.h, xd.w);
    let mut out = Tensor4::zeros(Dims4::new(bsz, h, w, cout));
    {
        let xs = x.data();
        let ws = weight.data();
        let os = out.data_mut();
        for b in 0..bsz {
            for oy in 0..h {
                for ky in 0..k {
                    let iy = (oy + ky).wrapping_sub(pad);
                    if iy >= h {
                        continue;
                    }
                    for kx in 0..k {
                        if let Some(m) = mask {
                            if !m.keeps(ky, kx) {
                                continue;
                            }
                        }
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = (w + pad).saturating_sub(kx).min(w);
                        let wbase = (ky * k + kx) * cin * cout;
                        for ox in ox_lo..ox_hi {
                            let ix = ox + kx - pad;
                            let xrow = &xs[((b * h + iy) * w + ix) * cin..][..cin];
                            let orow = &mut os[((b * h + oy) * w + ox) * cout..][..cout];
                            for (ci, &xv) in xrow.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let wrow = &ws[wbase + ci * cout..][..cout];
                                for (o, &wv) in orow.iter_mut().zip(wrow) {
                                    *o += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        let bs = bias.data();
        for (i, o) in os.iter_mut().enumerate() {
            *o += bs[i % cout];
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_fwd`] with respect to input, weight, and bias.
/// Masked taps contribute nothing, so their weight gradients are exactly 0.
pub fn conv2d_bwd(
    x: &Tensor4,
    weight: &Tensor4,
    dout: &Tensor4,
    mask: Option<&TapMask>,
) -> (Tensor4, Tensor4, Tensor4) {
    let (xd, wd) = (x.dims(), weight.dims());
    let (k, cin, cout, pad) = (wd.b, wd.w, wd.c, wd.b / 2);
    let (bsz, h, w) = (xd.b, xd.h, xd.w);
    let mut dx = Tensor4::zeros(xd);
    let mut dw = Tensor4::zeros(wd);
    let mut db = Tensor4::zeros(Dims4::new(1, 1, 1, cout));
    let xs = x.data();
    let ws = weight.data();
    let gs = dout.data();
    {
        let dxs = dx.data_mut();
        let dws = dw.data_mut();
        for b in 0..bsz {
            for oy in 0..h {
                for ky in 0..k {
                    let iy = (oy + ky).wrapping_sub(pad);
                    if iy >= h {
                        continue;
                    }
                    for kx in 0..k {
                        if let Some(m) = mask {
                            if !m.keeps(ky, kx) {
                                continue;
                            }
                        }
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = (w + pad).saturating_sub(kx).min(w);
                        let wbase = (ky * k + kx) * cin * cout;
                        for ox in ox_lo..ox_hi {
                            let ix = ox + kx - pad;
                            let grow = &gs[((b * h + oy) * w + ox) * cout..][..cout];
                            let in_base = ((b * h + iy) * w + ix) * cin;
                            for ci in 0..cin {
                                let wrow = &ws[wbase + ci * cout..][..cout];
                                let mut acc = 0.0;
                                for (g, wv) in grow.iter().zip(wrow) {
                                    acc += g * wv;
                                }
                                dxs[in_base + ci] += acc;
                                let xv = xs[in_base + ci];
                                if xv != 0.0 {
                                    let dwrow = &mut dws[wbase + ci * cout..][..cout];
                                    for (d, g) in dwrow.iter_mut().zip(grow) {
                                        *d += xv * g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    {
        let dbs = db.data_mut();
        for (i, g) in gs.iter().enumerate() {
            dbs[i % cout] += g;
        }
    }
    (dx, dw, db)
}

/// 2x2 max pooling with stride 2. Requires even spatial dims. Returns the
/// pooled map and, per output element, the flat input index of its max
/// (first maximal element in scan order on ties).
pub fn maxpool2_fwd(x: &Tensor4) -> CoreResult<(Tensor4, Vec<u32>)> {
    let d = x.dims();
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return shape_err("maxpool2", format!("spatial dims {} not even", d));
    }
    let od = Dims4::new(d.b, d.h / 2, d.w / 2, d.c);
    let mut out = Tensor4::zeros(od);
    let mut arg = vec![0u32; od.numel()];
    let xs = x.data();
    let os = out.data_mut();
    for b in 0..d.b {
        for oy in 0..od.h {
            for ox in 0..od.w {
                for c in 0..d.c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0usize;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let i = d.at(b, oy * 2 + dy, ox * 2 + dx, c);
                            if xs[i] > best {
                                best = xs[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = od.at(b, oy, ox, c);
                    os[o] = best;
                    arg[o] = best_i as u32;
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2_bwd(arg: &[u32], in_dims: Dims4, dout: &Tensor4) -> Tensor4 {
    let mut dx = Tensor4::zeros(in_dims);
    let dxs = dx.data_mut();
    for (g, &i) in dout.data().iter().zip(arg) {
        dxs[i as usize] += g;
    }
    dx
}

/// Partition boundary i of `n` input cells split `out` ways.
#[inline]
fn part(i: usize, n: usize, out: usize) -> usize {
    i * n / out
}

/// Adaptive average pooling; cell (i, j) averages input rows
/// part(i)..part(i+1) and likewise for columns. Partitions tile the input.
pub fn adaptive_avg_pool_fwd(x: &Tensor4, out_h: usize, out_w: usize) -> CoreResult<Tensor4> {
    let d = x.dims();
    if out_h == 0 || out_w == 0 || out_h > d.h || out_w > d.w {
        return arg_err(
            "adaptive_avg_pool",
            format!("output ({},{}) for input {}", out_h, out_w, d),
        );
    }
    let od = Dims4::new(d.b, out_h, out_w, d.c);
    let mut out = Tensor4::zeros(od);
    let xs = x.data();
    let os = out.data_mut();
    for b in 0..d.b {
        for oy in 0..out_h {
            let (y0, y1) = (part(oy, d.h, out_h), part(oy + 1, d.h, out_h));
            for ox in 0..out_w {
                let (x0, x1) = (part(ox, d.w, out_w), part(ox + 1, d.w, out_w));
                let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                let orow = od.at(b, oy, ox, 0);
                for y in y0..y1 {
                    for xc in x0..x1 {
                        let irow = d.at(b, y, xc, 0);
                        for c in 0..d.c {
                            os[orow + c] += xs[irow + c] * inv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn adaptive_avg_pool_bwd(in_dims: Dims4, dout: &Tensor4) -> Tensor4 {
    let od = dout.dims();
    let mut dx = Tensor4::zeros(in_dims);
    let gs = dout.data();
    let dxs = dx.data_mut();
    for b in 0..in_dims.b {
        for oy in 0..od.h {
            let (y0, y1) = (part(oy, in_dims.h, od.h), part(oy + 1, in_dims.h, od.h));
            for ox in 0..od.w {
                let (x0, x1) = (part(ox, in_dims.w, od.w), part(ox + 1, in_dims.w, od.w));
                let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                let orow = od.at(b, oy, ox, 0);
                for y in y0..y1 {
                    for xc in x0..x1 {
                        let irow = in_dims.at(b, y, xc, 0);
                        for c in 0..in_dims.c {
                            dxs[irow + c] += gs[orow + c] * inv;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Source coordinate and lerp weights for one destination index under
/// half-pixel mapping with edge clamping: (lo, hi, weight of hi).
#[inline]
fn lerp_coords(dst: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let src = (dst as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
    let src = src.clamp(0.0, (n_in - 1) as f64);
    let lo = src as usize;
    let hi = (lo + 1).min(n_in - 1);
    (lo, hi, src - lo as f64)
}

/// Bilinear upsampling with half-pixel centers and edge clamping.
pub fn bilinear_upsample_fwd(x: &Tensor4, out_h: usize, out_w: usize) -> CoreResult<Tensor4> {
    let d = x.dims();
    if out_h < d.h || out_w < d.w {
        return arg_err(
            "bilinear_upsample",
            format!("output ({},{}) smaller than input {}", out_h, out_w, d),
        );
    }
    let od = Dims4::new(d.b, out_h, out_w, d.c);
    let mut out = Tensor4::zeros(od);
    let xs = x.data();
    let os = out.data_mut();
    for b in 0..d.b {
        for oy in 0..out_h {
            let (y0, y1, wy) = lerp_coords(oy, d.h, out_h);
            for ox in 0..out_w {
                let (x0, x1, wx) = lerp_coords(ox, d.w, out_w);
                let orow = od.at(b, oy, ox, 0);
                let r00 = d.at(b, y0, x0, 0);
                let r01 = d.at(b, y0, x1, 0);
                let r10 = d.at(b, y1, x0, 0);
                let r11 = d.at(b, y1, x1, 0);
                for c in 0..d.c {
                    let top = xs[r00 + c] * (1.0 - wx) + xs[r01 + c] * wx;
                    let bot = xs[r10 + c] * (1.0 - wx) + xs[r11 + c] * wx;
                    os[orow + c] = top * (1.0 - wy) + bot * wy;
                }
            }
        }
    }
    Ok(out)
}

pub fn bilinear_upsample_bwd(in_dims: Dims4, dout: &Tensor4) -> Tensor4 {
    let od = dout.dims();
    let mut dx = Tensor4::zeros(in_dims);
    let gs = dout.data();
    let dxs = dx.data_mut();
    for b in 0..in_dims.b {
        for oy in 0..od.h {
            let (y0, y1, wy) = lerp_coords(oy, in_dims.h, od.h);
            for ox in 0..od.w {
                let (x0, x1, wx) = lerp_coords(ox, in_dims.w, od.w);
                let orow = od.at(b, oy, ox, 0);
                let r00 = in_dims.at(b, y0, x0, 0);
                let r01 = in_dims.at(b, y0, x1, 0);
                let r10 = in_dims.at(b, y1, x0, 0);
                let r11 = in_dims.at(b, y1, x1, 0);
                for c in 0..in_dims.c {
                    let g = gs[orow + c];
                    dxs[r00 + c] += g * (1.0 - wy) * (1.0 - wx);
                    dxs[r01 + c] += g * (1.0 - wy) * wx;
                    dxs[r10 + c] += g * wy * (1.0 - wx);
                    dxs[r11 + c] += g * wy * wx;
                }
            }
        }
    }
    dx
}

/// Transposed convolution, kernel 4, stride 2, padding 1: exact 2x spatial
/// upsampling. `weight` is (4, 4, Cin, Cout); output position for input iy
/// and tap ky is 2*iy + ky - 1.
pub fn convt2d_fwd(x: &Tensor4, weight: &Tensor4, bias: &Tensor4) -> CoreResult<Tensor4> {
    let (xd, wd) = (x.dims(), weight.dims());
    if wd.b != 4 || wd.h != 4 {
        return arg_err("convt2d", format!("kernel must be 4x4, got ({},{})", wd.b, wd.h));
    }
    if wd.w != xd.c {
        return shape_err("convt2d", format!("input C {} vs kernel Cin {}", xd.c, wd.w));
    }
    let (cin, cout) = (wd.w, wd.c);
    if bias.dims() != Dims4::new(1, 1, 1, cout) {
        return shape_err("convt2d", format!("bias dims {} for Cout {}", bias.dims(), cout));
    }
    let od = Dims4::new(xd.b, xd.h * 2, xd.w * 2, cout);
    let mut out = Tensor4::zeros(od);
    let xs = x.data();
    let ws = weight.data();
    {
        let os = out.data_mut();
        for b in 0..xd.b {
            for iy in 0..xd.h {
                for ky in 0..4 {
                    let oy = (2 * iy + ky).wrapping_sub(1);
                    if oy >= od.h {
                        continue;
                    }
                    for kx in 0..4 {
                        let wbase = (ky * 4 + kx) * cin * cout;
                        for ix in 0..xd.w {
                            let ox = (2 * ix + kx).wrapping_sub(1);
                            if ox >= od.w {
                                continue;
                            }
                            let xrow = &xs[((b * xd.h + iy) * xd.w + ix) * cin..][..cin];
                            let orow = &mut os[((b * od.h + oy) * od.w + ox) * cout..][..cout];
                            for (ci, &xv) in xrow.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let wrow = &ws[wbase + ci * cout..][..cout];
                                for (o, &wv) in orow.iter_mut().zip(wrow) {
                                    *o += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        let bs = bias.data();
        for (i, o) in os.iter_mut().enumerate() {
            *o += bs[i % cout];
        }
    }
    Ok(out)
}

pub fn convt2d_bwd(
    x: &Tensor4,
    weight: &Tensor4,
    dout: &Tensor4,
) -> (Tensor4, Tensor4, Tensor4) {
    let (xd, wd, od) = (x.dims(), weight.dims(), dout.dims());
    let (cin, cout) = (wd.w, wd.c);
    let mut dx = Tensor4::zeros(xd);
    let mut dw = Tensor4::zeros(wd);
    let mut db = Tensor4::zeros(Dims4::new(1, 1, 1, cout));
    let xs = x.data();
    let ws = weight.data();
    let gs = dout.data();
    {
        let dxs = dx.data_mut();
        let dws = dw.data_mut();
        for b in 0..xd.b {
            for iy in 0..xd.h {
                for ky in 0..4 {
                    let oy = (2 * iy + ky).wrapping_sub(1);
                    if oy >= od.h {
                        continue;
                    }
                    for kx in 0..4 {
                        let wbase = (ky * 4 + kx) * cin * cout;
                        for ix in 0..xd.w {
                            let ox = (2 * ix + kx).wrapping_sub(1);
                            if ox >= od.w {
                                continue;
                            }
                            let grow = &gs[((b * od.h + oy) * od.w + ox) * cout..][..cout];
                            let in_base = ((b * xd.h + iy) * xd.w + ix) * cin;
                            for ci in 0..cin {
                                let wrow = &ws[wbase + ci * cout..][..cout];
                                let mut acc = 0.0;
                                for (g, wv) in grow.iter().zip(wrow) {
                                    acc += g * wv;
                                }
                                dxs[in_base + ci] += acc;
                                let xv = xs[in_base + ci];
                                if xv != 0.0 {
                                    let dwrow = &mut dws[wbase + ci * cout..][..cout];
                                    for (d, g) in dwrow.iter_mut().zip(grow) {
                                        *d += xv * g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    {
        let dbs = db.data_mut();
        for (i, g) in gs.iter().enumerate() {
            dbs[i % cout] += g;
        }
    }
    (dx, dw, db)
}
