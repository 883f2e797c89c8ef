//! Brute-force reference implementations, kept deliberately naive and
//! structurally unlike the production kernels. The oracle suites compare
//! the two on random instances; agreement to 1e-12 (exact for blob boxes)
//! is an acceptance gate, so nothing here may share code with kernels.rs.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::fmath::{exp, ln, powf};
use crate::tensor::{Dims4, TapMask, Tensor4};

/// Seven nested loops, bounds checked per tap, no span tricks.
pub fn conv2d_ref(x: &Tensor4, w: &Tensor4, bias: &Tensor4, mask: Option<&TapMask>) -> Tensor4 {
    let (xd, wd) = (x.dims(), w.dims());
    let (k, cin, cout) = (wd.b, wd.w, wd.c);
    let pad = k / 2;
    let mut out = Tensor4::zeros(Dims4::new(xd.b, xd.h, xd.w, cout));
    for b in 0..xd.b {
        for oy in 0..xd.h {
            for ox in 0..xd.w {
                for co in 0..cout {
                    let mut acc = bias.data()[co];
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(m) = mask {
                                if !m.keeps(ky, kx) {
                                    continue;
                                }
                            }
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= xd.h as isize || ix >= xd.w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x.at(b, iy as usize, ix as usize, ci)
                                    * w.at(ky, kx, ci, co);
                            }
                        }
                    }
                    out.set(b, oy, ox, co, acc);
                }
            }
        }
    }
    out
}

/// Assigns each input row/column to its output cell by linear search over
/// the partition bounds, then divides by counts.
pub fn adaptive_avg_pool_ref(x: &Tensor4, out_h: usize, out_w: usize) -> Tensor4 {
    let d = x.dims();
    let od = Dims4::new(d.b, out_h, out_w, d.c);
    let cell_of = |i: usize, n: usize, out: usize| -> usize {
        let mut cell = 0;
        while (cell + 1) * n / out <= i {
            cell += 1;
        }
        cell
    };
    let mut sums = Tensor4::zeros(od);
    let mut counts = vec![0usize; out_h * out_w];
    for y in 0..d.h {
        let oy = cell_of(y, d.h, out_h);
        for x_ in 0..d.w {
            let ox = cell_of(x_, d.w, out_w);
            counts[oy * out_w + ox] += 1;
            for b in 0..d.b {
                for c in 0..d.c {
                    let i = od.at(b, oy, ox, c);
                    sums.data_mut()[i] += x.at(b, y, x_, c);
                }
            }
        }
    }
    for b in 0..d.b {
        for oy in 0..out_h {
            for ox in 0..out_w {
                for c in 0..d.c {
                    let i = od.at(b, oy, ox, c);
                    sums.data_mut()[i] /= counts[oy * out_w + ox] as f64;
                }
            }
        }
    }
    sums
}

/// Separable bilinear: interpolate every row to the new width, then every
/// column of that intermediate to the new height.
pub fn bilinear_upsample_ref(x: &Tensor4, out_h: usize, out_w: usize) -> Tensor4 {
    let d = x.dims();
    let sample = |vals: &dyn Fn(usize) -> f64, n_in: usize, dst: usize, n_out: usize| -> f64 {
        let mut src = (dst as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
        if src < 0.0 {
            src = 0.0;
        }
        let max = (n_in - 1) as f64;
        if src > max {
            src = max;
        }
        let lo = src as usize;
        let hi = if lo + 1 < n_in { lo + 1 } else { lo };
        let t = src - lo as f64;
        vals(lo) * (1.0 - t) + vals(hi) * t
    };
    // pass 1: widen rows
    let mid_d = Dims4::new(d.b, d.h, out_w, d.c);
    let mut mid = Tensor4::zeros(mid_d);
    for b in 0..d.b {
        for y in 0..d.h {
            for ox in 0..out_w {
                for c in 0..d.c {
                    let row = |i: usize| x.at(b, y, i, c);
                    let v = sample(&row, d.w, ox, out_w);
                    mid.set(b, y, ox, c, v);
                }
            }
        }
    }
    // pass 2: stretch columns
    let od = Dims4::new(d.b, out_h, out_w, d.c);
    let mut out = Tensor4::zeros(od);
    for b in 0..d.b {
        for oy in 0..out_h {
            for x_ in 0..out_w {
                for c in 0..d.c {
                    let col = |i: usize| mid.at(b, i, x_, c);
                    let v = sample(&col, d.h, oy, out_h);
                    out.set(b, oy, x_, c, v);
                }
            }
        }
    }
    out
}

/// Textbook per-element focal loss with naive sigmoid and log; valid for
/// moderate logits (the oracle suite keeps |z| <= 10).
pub fn focal_ref(z: &Tensor4, y: &Tensor4, alpha: f64, gamma: f64) -> f64 {
    let mut acc = 0.0;
    for (&zv, &yv) in z.data().iter().zip(y.data()) {
        let p = 1.0 / (1.0 + exp(-zv));
        let term = if yv == 1.0 {
            -alpha * powf(1.0 - p, gamma) * ln(p)
        } else {
            -(1.0 - alpha) * powf(p, gamma) * ln(1.0 - p)
        };
        acc += term;
    }
    acc / z.dims().numel() as f64
}

/// Textbook mean binary cross-entropy, same naive regime as [`focal_ref`].
pub fn bce_ref(z: &Tensor4, y: &Tensor4) -> f64 {
    let mut acc = 0.0;
    for (&zv, &yv) in z.data().iter().zip(y.data()) {
        let p = 1.0 / (1.0 + exp(-zv));
        acc += -(yv * ln(p) + (1.0 - yv) * ln(1.0 - p));
    }
    acc / z.dims().numel() as f64
}

/// (x, y, w, h, area) of each kept blob, matching the production contract:
/// strict threshold, 4-connectivity, min area filter, area-descending order
/// with (y, x) tie break. BFS flood fill, no union-find.
pub fn blob_boxes_ref(
    prob: &[f64],
    h: usize,
    w: usize,
    tau: f64,
    min_area: usize,
) -> Vec<(usize, usize, usize, usize, usize)> {
    let mut seen = vec![false; h * w];
    let mut blobs = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if seen[sy * w + sx] || prob[sy * w + sx] <= tau {
                continue;
            }
            let mut queue = VecDeque::new();
            queue.push_back((sy, sx));
            seen[sy * w + sx] = true;
            let (mut x0, mut x1, mut y0, mut y1) = (sx, sx, sy, sy);
            let mut area = 0usize;
            while let Some((cy, cx)) = queue.pop_front() {
                area += 1;
                if cx < x0 {
                    x0 = cx;
                }
                if cx > x1 {
                    x1 = cx;
                }
                if cy < y0 {
                    y0 = cy;
                }
                if cy > y1 {
                    y1 = cy;
                }
                let mut push = |ny: usize, nx: usize| {
                    if !seen[ny * w + nx] && prob[ny * w + nx] > tau {
                        seen[ny * w + nx] = true;
                        queue.push_back((ny, nx));
                    }
                };
                if cy > 0 {
                    push(cy - 1, cx);
                }
                if cy + 1 < h {
                    push(cy + 1, cx);
                }
                if cx > 0 {
                    push(cy, cx - 1);
                }
                if cx + 1 < w {
                    push(cy, cx + 1);
                }
            }
            if area >= min_area {
                blobs.push((x0, y0, x1 - x0 + 1, y1 - y0 + 1, area));
            }
        }
    }
    blobs.sort_by(|a, b| b.4.cmp(&a.4).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    blobs
}
