//! Thresholded-prediction blobs: 4-connected components with tight boxes,
//! and the 6 region features fed to the random forest.
//!
//! Production labeling is two-pass scanline with union-find; the test
//! oracle (reference.rs) uses BFS flood fill instead.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath::hypot;
use crate::tensor::Tensor4;

/// Blobs smaller than this many pixels are noise and dropped.
pub const MIN_BLOB_AREA: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blob {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub area: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // smaller root wins, keeping labels stable in scan order
        if ra < rb {
            parent[rb] = ra;
        } else {
            parent[ra] = rb;
        }
    }
}

/// 4-connected components of {p : map[p] > tau}, tight boxes, blobs below
/// `min_area` dropped, sorted by area descending with ties by (y, x).
pub fn extract_blobs(map: &[f64], h: usize, w: usize, tau: f64, min_area: usize) -> Vec<Blob> {
    debug_assert_eq!(map.len(), h * w);
    const NONE: usize = usize::MAX;
    let mut labels = vec![NONE; h * w];
    let mut parent: Vec<usize> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if map[i] <= tau {
                continue;
            }
            let left = if x > 0 { labels[i - 1] } else { NONE };
            let up = if y > 0 { labels[i - w] } else { NONE };
            labels[i] = match (left, up) {
                (NONE, NONE) => {
                    parent.push(parent.len());
                    parent.len() - 1
                }
                (l, NONE) => l,
                (NONE, u) => u,
                (l, u) => {
                    union(&mut parent, l, u);
                    l.min(u)
                }
            };
        }
    }
    // one accumulator per root, keyed by first-seen order for determinism
    let mut acc: Vec<(usize, usize, usize, usize, usize, usize)> = Vec::new(); // root,x0,y0,x1,y1,area
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == NONE {
                continue;
            }
            let root = find(&mut parent, l);
            match acc.iter_mut().find(|e| e.0 == root) {
                Some(e) => {
                    e.1 = e.1.min(x);
                    e.2 = e.2.min(y);
                    e.3 = e.3.max(x);
                    e.4 = e.4.max(y);
                    e.5 += 1;
                }
                None => acc.push((root, x, y, x, y, 1)),
            }
        }
    }
    let mut blobs: Vec<Blob> = acc
        .into_iter()
        .filter(|e| e.5 >= min_area)
        .map(|(_, x0, y0, x1, y1, area)| Blob {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
            area,
        })
        .collect();
    blobs.sort_by(|a, b| b.area.cmp(&a.area).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    blobs
}

/// Blob extraction on a (1, H, W, 1) probability map.
pub fn extract_blobs_map(prob: &Tensor4, tau: f64, min_area: usize) -> Vec<Blob> {
    let d = prob.dims();
    debug_assert!(d.b == 1 && d.c == 1);
    extract_blobs(prob.data(), d.h, d.w, tau, min_area)
}

/// The paper's six region features:
/// center x, center y, height, width, distance from image center, aspect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionFeatures {
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
    pub dist_center: f64,
    pub aspect: f64,
}

impl RegionFeatures {
    pub fn from_blob(blob: &Blob, img_h: usize, img_w: usize) -> Self {
        let cx = blob.x as f64 + blob.w as f64 / 2.0;
        let cy = blob.y as f64 + blob.h as f64 / 2.0;
        let dist_center = hypot(cx - img_w as f64 / 2.0, cy - img_h as f64 / 2.0);
        RegionFeatures {
            cx,
            cy,
            h: blob.h as f64,
            w: blob.w as f64,
            dist_center,
            aspect: blob.w as f64 / blob.h as f64,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.cx, self.cy, self.h, self.w, self.dist_center, self.aspect]
    }
}
