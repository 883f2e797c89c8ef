//! Record-replay reverse-mode autodiff.
//!
//! A [`Tape`] owns the value of every recorded variable. Ops append a node
//! and its output; [`Tape::backward`] walks the nodes once in reverse,
//! accumulating gradients for every variable. The tape is rebuilt each
//! training step; parameters live outside it and are pushed as leaves.
//!
//! Every forward output and every backward contribution is checked for
//! finiteness; NaN or Inf anywhere is a hard error, not a warning.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, CoreError, CoreResult};
use crate::fmath::{powf, sigmoid, softplus};
use crate::kernels;
use crate::tensor::{Dims4, TapMask, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Node {
    Leaf,
    Conv2d { x: VarId, w: VarId, b: VarId, mask: Option<TapMask> },
    ConvT2d { x: VarId, w: VarId, b: VarId },
    MaxPool2 { x: VarId, arg: Vec<u32> },
    AdaptivePool { x: VarId },
    Upsample { x: VarId },
    Relu { x: VarId },
    Sigmoid { x: VarId },
    Add { a: VarId, b: VarId },
    Sub { a: VarId, b: VarId },
    Mul { a: VarId, b: VarId },
    Scale { x: VarId, k: f64 },
    ConcatC { parts: Vec<VarId> },
    SumAll { x: VarId },
    MeanAll { x: VarId },
    SelectOne { x: VarId, idx: usize },
    BceWithLogits { z: VarId, y: Tensor4 },
    Focal { z: VarId, y: Tensor4, alpha: f64, gamma: f64 },
}

/// Per-variable gradients produced by one backward pass.
pub struct Grads {
    g: Vec<Option<Tensor4>>,
}

impl Grads {
    pub fn get(&self, v: VarId) -> Option<&Tensor4> {
        self.g[v.0].as_ref()
    }

    pub fn take(&mut self, v: VarId) -> Option<Tensor4> {
        self.g[v.0].take()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<Tensor4>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn val(&self, v: VarId) -> &Tensor4 {
        &self.vals[v.0]
    }

    pub fn dims(&self, v: VarId) -> Dims4 {
        self.vals[v.0].dims()
    }

    /// Record an input or parameter value.
    pub fn leaf(&mut self, t: Tensor4) -> VarId {
        self.push_unchecked(Node::Leaf, t)
    }

    fn push_unchecked(&mut self, node: Node, val: Tensor4) -> VarId {
        self.nodes.push(node);
        self.vals.push(val);
        VarId(self.vals.len() - 1)
    }

    fn push(&mut self, op: &'static str, node: Node, val: Tensor4) -> CoreResult<VarId> {
        if !val.is_all_finite() {
            return Err(CoreError::NonFinite { op });
        }
        Ok(self.push_unchecked(node, val))
    }

    pub fn conv2d(
        &mut self,
        x: VarId,
        w: VarId,
        b: VarId,
        mask: Option<TapMask>,
    ) -> CoreResult<VarId> {
        let out = kernels::conv2d_fwd(self.val(x), self.val(w), self.val(b), mask.as_ref())?;
        self.push("conv2d", Node::Conv2d { x, w, b, mask }, out)
    }

    pub fn convt2d(&mut self, x: VarId, w: VarId, b: VarId) -> CoreResult<VarId> {
        let out = kernels::convt2d_fwd(self.val(x), self.val(w), self.val(b))?;
        self.push("convt2d", Node::ConvT2d { x, w, b }, out)
    }

    pub fn maxpool2(&mut self, x: VarId) -> CoreResult<VarId> {
        let (out, arg) = kernels::maxpool2_fwd(self.val(x))?;
        self.push("maxpool2", Node::MaxPool2 { x, arg }, out)
    }

    pub fn adaptive_avg_pool(&mut self, x: VarId, out_h: usize, out_w: usize) -> CoreResult<VarId> {
        let out = kernels::adaptive_avg_pool_fwd(self.val(x), out_h, out_w)?;
        self.push("adaptive_avg_pool", Node::AdaptivePool { x }, out)
    }

    /// Global average pool to (B, 1, 1, C).
    pub fn global_avg_pool(&mut self, x: VarId) -> CoreResult<VarId> {
        self.adaptive_avg_pool(x, 1, 1)
    }

    pub fn bilinear_upsample(&mut self, x: VarId, out_h: usize, out_w: usize) -> CoreResult<VarId> {
        let out = kernels::bilinear_upsample_fwd(self.val(x), out_h, out_w)?;
        self.push("bilinear_upsample", Node::Upsample { x }, out)
    }

    pub fn relu(&mut self, x: VarId) -> CoreResult<VarId> {
        let mut out = self.val(x).clone();
        for v in out.data_mut() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        self.push("relu", Node::Relu { x }, out)
    }

    pub fn sigmoid(&mut self, x: VarId) -> CoreResult<VarId> {
        let mut out = self.val(x).clone();
        for v in out.data_mut() {
            *v = sigmoid(*v);
        }
        self.push("sigmoid", Node::Sigmoid { x }, out)
    }

    fn binary_dims(&self, op: &'static str, a: VarId, b: VarId) -> CoreResult<Dims4> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return shape_err(op, format!("{} vs {}", da, db));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> CoreResult<VarId> {
        let d = self.binary_dims("add", a, b)?;
        let mut out = Tensor4::zeros(d);
        for ((o, &x), &y) in out.data_mut().iter_mut().zip(self.vals[a.0].data()).zip(self.vals[b.0].data()) {
            *o = x + y;
        }
        self.push("add", Node::Add { a, b }, out)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> CoreResult<VarId> {
        let d = self.binary_dims("sub", a, b)?;
        let mut out = Tensor4::zeros(d);
        for ((o, &x), &y) in out.data_mut().iter_mut().zip(self.vals[a.0].data()).zip(self.vals[b.0].data()) {
            *o = x - y;
        }
        self.push("sub", Node::Sub { a, b }, out)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> CoreResult<VarId> {
        let d = self.binary_dims("mul", a, b)?;
        let mut out = Tensor4::zeros(d);
        for ((o, &x), &y) in out.data_mut().iter_mut().zip(self.vals[a.0].data()).zip(self.vals[b.0].data()) {
            *o = x * y;
        }
        self.push("mul", Node::Mul { a, b }, out)
    }

    pub fn scale(&mut self, x: VarId, k: f64) -> CoreResult<VarId> {
        let mut out = self.val(x).clone();
        for v in out.data_mut() {
            *v *= k;
        }
        self.push("scale", Node::Scale { x, k }, out)
    }

    pub fn concat_channels(&mut self, parts: &[VarId]) -> CoreResult<VarId> {
        let Some(&first) = parts.first() else {
            return arg_err("concat_channels", String::from("no inputs"));
        };
        let d0 = self.dims(first);
        let mut c_total = 0;
        for &p in parts {
            let d = self.dims(p);
            if !d.same_spatial(&d0) {
                return shape_err("concat_channels", format!("{} vs {}", d, d0));
            }
            c_total += d.c;
        }
        let od = Dims4::new(d0.b, d0.h, d0.w, c_total);
        let mut out = Tensor4::zeros(od);
        {
            let os = out.data_mut();
            let mut c_off = 0;
            for &p in parts {
                let d = self.vals[p.0].dims();
                let ps = self.vals[p.0].data();
                for b in 0..d.b {
                    for y in 0..d.h {
                        for x in 0..d.w {
                            let src = d.at(b, y, x, 0);
                            let dst = od.at(b, y, x, c_off);
                            os[dst..dst + d.c].copy_from_slice(&ps[src..src + d.c]);
                        }
                    }
                }
                c_off += d.c;
            }
        }
        self.push("concat_channels", Node::ConcatC { parts: parts.to_vec() }, out)
    }

    pub fn sum_all(&mut self, x: VarId) -> CoreResult<VarId> {
        let s: f64 = self.val(x).data().iter().sum();
        self.push("sum_all", Node::SumAll { x }, Tensor4::scalar(s))
    }

    pub fn mean_all(&mut self, x: VarId) -> CoreResult<VarId> {
        let n = self.dims(x).numel();
        let s: f64 = self.val(x).data().iter().sum();
        self.push("mean_all", Node::MeanAll { x }, Tensor4::scalar(s / n as f64))
    }

    /// Select one element as a scalar (the Grad-CAM target picker).
    pub fn select_one(
        &mut self,
        x: VarId,
        b: usize,
        y: usize,
        xc: usize,
        c: usize,
    ) -> CoreResult<VarId> {
        let d = self.dims(x);
        if b >= d.b || y >= d.h || xc >= d.w || c >= d.c {
            return arg_err("select_one", format!("({},{},{},{}) out of {}", b, y, xc, c, d));
        }
        let idx = d.at(b, y, xc, c);
        let v = self.val(x).data()[idx];
        self.push("select_one", Node::SelectOne { x, idx }, Tensor4::scalar(v))
    }

    fn check_targets(op: &'static str, z: Dims4, y: &Tensor4) -> CoreResult<()> {
        if y.dims() != z {
            return shape_err(op, format!("targets {} vs logits {}", y.dims(), z));
        }
        if y.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return arg_err(op, String::from("targets must be exactly 0 or 1"));
        }
        Ok(())
    }

    /// Mean binary cross-entropy over all elements, stable form
    /// softplus(z) - y*z.
    pub fn bce_with_logits(&mut self, z: VarId, targets: &Tensor4) -> CoreResult<VarId> {
        Self::check_targets("bce_with_logits", self.dims(z), targets)?;
        let zs = self.val(z).data();
        let ys = targets.data();
        let mut acc = 0.0;
        for (&zv, &yv) in zs.iter().zip(ys) {
            acc += softplus(zv) - yv * zv;
        }
        let n = zs.len() as f64;
        self.push(
            "bce_with_logits",
            Node::BceWithLogits { z, y: targets.clone() },
            Tensor4::scalar(acc / n),
        )
    }

    /// Mean focal loss. Positives contribute a*s(-z)^g*softplus(-z),
    /// negatives the mirror with 1-a and z negated; g=0, a=0.5 reduces to
    /// 0.5*BCE exactly.
    pub fn focal_loss(
        &mut self,
        z: VarId,
        targets: &Tensor4,
        alpha: f64,
        gamma: f64,
    ) -> CoreResult<VarId> {
        if !(0.0 < alpha && alpha < 1.0) || gamma < 0.0 {
            return arg_err("focal_loss", format!("alpha={}, gamma={}", alpha, gamma));
        }
        Self::check_targets("focal_loss", self.dims(z), targets)?;
        let zs = self.val(z).data();
        let ys = targets.data();
        let mut acc = 0.0;
        for (&zv, &yv) in zs.iter().zip(ys) {
            let (a_t, zt) = if yv == 1.0 { (alpha, zv) } else { (1.0 - alpha, -zv) };
            acc += a_t * powf(sigmoid(-zt), gamma) * softplus(-zt);
        }
        let n = zs.len() as f64;
        self.push(
            "focal_loss",
            Node::Focal { z, y: targets.clone(), alpha, gamma },
            Tensor4::scalar(acc / n),
        )
    }

    fn accumulate(
        grads: &mut [Option<Tensor4>],
        v: VarId,
        partial: Tensor4,
    ) -> CoreResult<()> {
        if !partial.is_all_finite() {
            return Err(CoreError::NonFinite { op: "backward" });
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(partial.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(partial),
        }
        Ok(())
    }

    /// Reverse pass from a scalar root. Consumes the tape's one backward
    /// budget; recording again requires a fresh tape.
    pub fn backward(&mut self, root: VarId) -> CoreResult<Grads> {
        if self.consumed {
            return Err(CoreError::BackwardConsumed);
        }
        let numel = self.dims(root).numel();
        if numel != 1 {
            return Err(CoreError::NonScalarRoot { numel });
        }
        self.consumed = true;
        let mut g: Vec<Option<Tensor4>> = (0..self.vals.len()).map(|_| None).collect();
        g[root.0] = Some(Tensor4::scalar(1.0));
        for i in (0..self.nodes.len()).rev() {
            // clone, not take: Grads keeps every node's gradient so callers
            // can read activation gradients (Grad-CAM does)
            let Some(gout) = g[i].clone() else { continue };
            match &self.nodes[i] {
                Node::Leaf => {}
                Node::Conv2d { x, w, b, mask } => {
                    let (dx, dw, db) = kernels::conv2d_bwd(
                        &self.vals[x.0],
                        &self.vals[w.0],
                        &gout,
                        mask.as_ref(),
                    );
                    Self::accumulate(&mut g, *x, dx)?;
                    Self::accumulate(&mut g, *w, dw)?;
                    Self::accumulate(&mut g, *b, db)?;
                }
                Node::ConvT2d { x, w, b } => {
                    let (dx, dw, db) =
                        kernels::convt2d_bwd(&self.vals[x.0], &self.vals[w.0], &gout);
                    Self::accumulate(&mut g, *x, dx)?;
                    Self::accumulate(&mut g, *w, dw)?;
                    Self::accumulate(&mut g, *b, db)?;
                }
                Node::MaxPool2 { x, arg } => {
                    let dx = kernels::maxpool2_bwd(arg, self.vals[x.0].dims(), &gout);
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::AdaptivePool { x } => {
                    let dx = kernels::adaptive_avg_pool_bwd(self.vals[x.0].dims(), &gout);
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::Upsample { x } => {
                    let dx = kernels::bilinear_upsample_bwd(self.vals[x.0].dims(), &gout);
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::Relu { x } => {
                    let mut dx = gout;
                    for (d, &xv) in dx.data_mut().iter_mut().zip(self.vals[x.0].data()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::Sigmoid { x } => {
                    let mut dx = gout;
                    for (d, &s) in dx.data_mut().iter_mut().zip(self.vals[i].data()) {
                        *d *= s * (1.0 - s);
                    }
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::Add { a, b } => {
                    Self::accumulate(&mut g, *a, gout.clone())?;
                    Self::accumulate(&mut g, *b, gout)?;
                }
                Node::Sub { a, b } => {
                    let mut db = gout.clone();
                    for v in db.data_mut() {
                        *v = -*v;
                    }
                    Self::accumulate(&mut g, *a, gout)?;
                    Self::accumulate(&mut g, *b, db)?;
                }
                Node::Mul { a, b } => {
                    let mut da = gout.clone();
                    for (d, &bv) in da.data_mut().iter_mut().zip(self.vals[b.0].data()) {
                        *d *= bv;
                    }
                    let mut db = gout;
                    for (d, &av) in db.data_mut().iter_mut().zip(self.vals[a.0].data()) {
                        *d *= av;
                    }
                    Self::accumulate(&mut g, *a, da)?;
                    Self::accumulate(&mut g, *b, db)?;
                }
                Node::Scale { x, k } => {
                    let mut dx = gout;
                    for v in dx.data_mut() {
                        *v *= k;
                    }
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::ConcatC { parts } => {
                    let od = gout.dims();
                    let gs = gout.data();
                    let mut c_off = 0;
                    for &p in parts {
                        let d = self.vals[p.0].dims();
                        let mut dp = Tensor4::zeros(d);
                        {
                            let ds = dp.data_mut();
                            for b in 0..d.b {
                                for y in 0..d.h {
                                    for x in 0..d.w {
                                        let dst = d.at(b, y, x, 0);
                                        let src = od.at(b, y, x, c_off);
                                        ds[dst..dst + d.c].copy_from_slice(&gs[src..src + d.c]);
                                    }
                                }
                            }
                        }
                        Self::accumulate(&mut g, p, dp)?;
                        c_off += d.c;
                    }
                }
                Node::SumAll { x } => {
                    let d = self.vals[x.0].dims();
                    let dx = Tensor4::filled(d, gout.data()[0]);
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::MeanAll { x } => {
                    let d = self.vals[x.0].dims();
                    let dx = Tensor4::filled(d, gout.data()[0] / d.numel() as f64);
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::SelectOne { x, idx } => {
                    let mut dx = Tensor4::zeros(self.vals[x.0].dims());
                    dx.data_mut()[*idx] = gout.data()[0];
                    Self::accumulate(&mut g, *x, dx)?;
                }
                Node::BceWithLogits { z, y } => {
                    let scale = gout.data()[0] / y.dims().numel() as f64;
                    let mut dz = Tensor4::zeros(y.dims());
                    for ((d, &zv), &yv) in
                        dz.data_mut().iter_mut().zip(self.vals[z.0].data()).zip(y.data())
                    {
                        *d = scale * (sigmoid(zv) - yv);
                    }
                    Self::accumulate(&mut g, *z, dz)?;
                }
                Node::Focal { z, y, alpha, gamma } => {
                    let scale = gout.data()[0] / y.dims().numel() as f64;
                    let mut dz = Tensor4::zeros(y.dims());
                    for ((d, &zv), &yv) in
                        dz.data_mut().iter_mut().zip(self.vals[z.0].data()).zip(y.data())
                    {
                        // d/dz of a_t*u^g*softplus(-zt) with u = s(-zt),
                        // zt = z for positives and -z for negatives
                        let (a_t, zt, sign) =
                            if yv == 1.0 { (*alpha, zv, -1.0) } else { (1.0 - *alpha, -zv, 1.0) };
                        let u = sigmoid(-zt);
                        let sp = softplus(-zt);
                        let inner = gamma * sigmoid(zt) * sp + u;
                        *d = scale * sign * a_t * powf(u, *gamma) * inner;
                    }
                    Self::accumulate(&mut g, *z, dz)?;
                }
            }
        }
        Ok(Grads { g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sum_relu_grad_is_ones_for_positive_input() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::from_fn(Dims4::new(1, 2, 2, 1), |i| (i + 1) as f64));
        let r = t.relu(x).unwrap();
        let s = t.sum_all(r).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn pool_upsample_identity_cancellation() {
        let mut t = Tape::new();
        let f = t.leaf(Tensor4::from_fn(Dims4::new(1, 4, 4, 2), |i| (i as f64).sin()));
        let p = t.adaptive_avg_pool(f, 4, 4).unwrap();
        let u = t.bilinear_upsample(p, 4, 4).unwrap();
        let d = t.sub(f, u).unwrap();
        let s = t.sum_all(d).unwrap();
        assert_eq!(t.val(s).data()[0], 0.0);
        let g = t.backward(s).unwrap();
        assert!(g.get(f).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::scalar(2.0));
        let s = t.sum_all(x).unwrap();
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(CoreError::BackwardConsumed)));
    }

    #[test]
    fn non_scalar_root_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::zeros(Dims4::new(1, 2, 2, 1)));
        assert!(matches!(t.backward(x), Err(CoreError::NonScalarRoot { numel: 4 })));
    }

    #[test]
    fn bce_known_values() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor4::scalar(0.0));
        let y = Tensor4::scalar(1.0);
        let l = t.bce_with_logits(z, &y).unwrap();
        assert!((t.val(l).data()[0] - core::f64::consts::LN_2).abs() < 1e-12);

        let mut t = Tape::new();
        let z = t.leaf(Tensor4::scalar(20.0));
        let l = t.bce_with_logits(z, &y).unwrap();
        let v = t.val(l).data()[0];
        assert!(v > 0.0 && (v - 2.061e-9).abs() < 1e-11);
    }

    #[test]
    fn bce_rejects_soft_targets() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor4::scalar(0.0));
        assert!(t.bce_with_logits(z, &Tensor4::scalar(0.5)).is_err());
    }

    #[test]
    fn focal_gamma0_half_alpha_is_half_bce() {
        let zs = [-3.0, -0.7, 0.0, 0.4, 2.5, 19.0];
        for (i, &zv) in zs.iter().enumerate() {
            let yv = (i % 2) as f64;
            let y = Tensor4::scalar(yv);
            let mut t = Tape::new();
            let z = t.leaf(Tensor4::scalar(zv));
            let f = t.focal_loss(z, &y, 0.5, 0.0).unwrap();
            let fval = t.val(f).data()[0];
            let gf = t.backward(f).unwrap();
            let mut t2 = Tape::new();
            let z2 = t2.leaf(Tensor4::scalar(zv));
            let b = t2.bce_with_logits(z2, &y).unwrap();
            let bval = t2.val(b).data()[0];
            let gb = t2.backward(b).unwrap();
            assert!((fval - 0.5 * bval).abs() < 1e-12);
            let (df, db) = (gf.get(z).unwrap().data()[0], gb.get(z2).unwrap().data()[0]);
            assert!((df - 0.5 * db).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_confident_correct_is_near_zero() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor4::from_vec(
            Dims4::new(2, 1, 1, 1),
            vec![20.0, -20.0],
        )
        .unwrap());
        let y = Tensor4::from_vec(Dims4::new(2, 1, 1, 1), vec![1.0, 0.0]).unwrap();
        let l = t.focal_loss(z, &y, 0.25, 2.0).unwrap();
        assert!(t.val(l).data()[0] < 1e-9);
    }

    #[test]
    fn concat_and_split_roundtrip_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor4::from_fn(Dims4::new(1, 2, 2, 2), |i| i as f64));
        let b = t.leaf(Tensor4::from_fn(Dims4::new(1, 2, 2, 3), |i| -(i as f64)));
        let c = t.concat_channels(&[a, b]).unwrap();
        assert_eq!(t.dims(c).c, 5);
        for y in 0..2 {
            for x in 0..2 {
                for ch in 0..2 {
                    assert_eq!(t.val(c).at(0, y, x, ch), t.val(a).at(0, y, x, ch));
                }
                for ch in 0..3 {
                    assert_eq!(t.val(c).at(0, y, x, 2 + ch), t.val(b).at(0, y, x, ch));
                }
            }
        }
        // weight channels differently so the split is visible in gradients
        let w = t.leaf(Tensor4::from_fn(Dims4::new(1, 2, 2, 5), |i| (i % 5) as f64));
        let m = t.mul(c, w).unwrap();
        let s = t.sum_all(m).unwrap();
        let g = t.backward(s).unwrap();
        let ga = g.get(a).unwrap();
        let gb = g.get(b).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                for ch in 0..2 {
                    assert_eq!(ga.at(0, y, x, ch), ch as f64);
                }
                for ch in 0..3 {
                    assert_eq!(gb.at(0, y, x, ch), (2 + ch) as f64);
                }
            }
        }
    }

    #[test]
    fn mul_gradients_cross() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor4::scalar(3.0));
        let b = t.leaf(Tensor4::scalar(5.0));
        let m = t.mul(a, b).unwrap();
        let g = t.backward(m).unwrap();
        assert_eq!(g.get(a).unwrap().data()[0], 5.0);
        assert_eq!(g.get(b).unwrap().data()[0], 3.0);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::scalar(0.0));
        let s = t.sigmoid(x).unwrap();
        assert_eq!(t.val(s).data()[0], 0.5);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data()[0], 0.25);
    }

    #[test]
    fn fanout_accumulates() {
        // loss = sum(x + x) -> dx = 2
        let mut t = Tape::new();
        let x = t.leaf(Tensor4::scalar(1.5));
        let a = t.add(x, x).unwrap();
        let s = t.sum_all(a).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data()[0], 2.0);
    }
}
