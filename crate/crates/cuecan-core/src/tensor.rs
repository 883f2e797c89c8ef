//! Dense rank-4 tensors in (batch, height, width, channel) order.
//!
//! Data is contiguous row-major with the channel axis fastest, so the
//! convolution kernels can walk channel runs as plain slices. Gradients are
//! not stored here; they live on the recording tape (see [`crate::tape`]).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, CoreResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims4 {
    pub b: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims4 {
    pub const fn new(b: usize, h: usize, w: usize, c: usize) -> Self {
        Dims4 { b, h, w, c }
    }

    pub const fn numel(&self) -> usize {
        self.b * self.h * self.w * self.c
    }

    /// Flat offset of (b, y, x, c).
    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(b < self.b && y < self.h && x < self.w && c < self.c);
        ((b * self.h + y) * self.w + x) * self.c + c
    }

    pub fn same_spatial(&self, other: &Dims4) -> bool {
        self.b == other.b && self.h == other.h && self.w == other.w
    }
}

impl core::fmt::Display for Dims4 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({},{},{},{})", self.b, self.h, self.w, self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: Dims4,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: Dims4) -> Self {
        Tensor4 { dims, data: vec![0.0; dims.numel()] }
    }

    pub fn filled(dims: Dims4, value: f64) -> Self {
        Tensor4 { dims, data: vec![value; dims.numel()] }
    }

    pub fn from_vec(dims: Dims4, data: Vec<f64>) -> CoreResult<Self> {
        if data.len() != dims.numel() {
            return shape_err(
                "Tensor4::from_vec",
                format!("dims {} need {} elements, got {}", dims, dims.numel(), data.len()),
            );
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn from_fn(dims: Dims4, mut f: impl FnMut(usize) -> f64) -> Self {
        Tensor4 { dims, data: (0..dims.numel()).map(|i| f(i)).collect() }
    }

    /// Like `from_fn` but hands the closure unflattened (b, y, x, c).
    pub fn from_coords(dims: Dims4, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        Tensor4 {
            dims,
            data: (0..dims.numel())
                .map(|i| {
                    let c = i % dims.c;
                    let x = i / dims.c % dims.w;
                    let y = i / (dims.c * dims.w) % dims.h;
                    let b = i / (dims.c * dims.w * dims.h);
                    f(b, y, x, c)
                })
                .collect(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor4 { dims: Dims4::new(1, 1, 1, 1), data: vec![v] }
    }

    #[inline]
    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.dims.at(b, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, y: usize, x: usize, c: usize, v: f64) {
        let i = self.dims.at(b, y, x, c);
        self.data[i] = v;
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute element, 0 for the empty tensor.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Binary spatial tap mask for a (k, k, cin, cout) convolution weight.
/// The same pattern applies to every (cin, cout) slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapMask {
    k: usize,
    keep: Vec<bool>,
}

impl TapMask {
    pub fn new(k: usize, keep: Vec<bool>) -> CoreResult<Self> {
        if keep.len() != k * k {
            return shape_err("TapMask::new", format!("need {} taps, got {}", k * k, keep.len()));
        }
        Ok(TapMask { k, keep })
    }

    pub fn full(k: usize) -> Self {
        TapMask { k, keep: vec![true; k * k] }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn keeps(&self, ky: usize, kx: usize) -> bool {
        self.keep[ky * self.k + kx]
    }

    pub fn kept_taps(&self) -> usize {
        self.keep.iter().filter(|&&v| v).count()
    }

    /// Rows of the pattern as 0/1 values, row-major.
    pub fn pattern(&self) -> Vec<Vec<u8>> {
        (0..self.k)
            .map(|ky| (0..self.k).map(|kx| u8::from(self.keeps(ky, kx))).collect())
            .collect()
    }

    /// Zero out the masked taps of a (k, k, cin, cout) weight tensor.
    pub fn apply_to(&self, weights: &mut Tensor4) {
        let d = weights.dims();
        debug_assert_eq!(d.b, self.k);
        debug_assert_eq!(d.h, self.k);
        let slice = d.w * d.c;
        for ky in 0..self.k {
            for kx in 0..self.k {
                if !self.keeps(ky, kx) {
                    let base = (ky * self.k + kx) * slice;
                    for v in &mut weights.data_mut()[base..base + slice] {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}
