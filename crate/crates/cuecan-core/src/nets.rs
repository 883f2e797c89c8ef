//! Model definitions: the scaled-down VGG encoder with optional CueCAn
//! units after blocks 3..5, the binary classifier head, the FCN-8-style
//! decoder, and Grad-CAM. Parameters live in a flat [`ParamSet`] so the
//! optimizer and checkpoint code never need to know the model topology.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cuecan::{
    build_mask, init_masked_weight, unit_forward, unit_param_count, CueCanConfig, CueCanWires,
    Orientation, UnitSpec, POOLED_ROWS,
};
use crate::error::{arg_err, shape_err, CoreResult};
use crate::fmath;
use crate::rng::{stream, uniform, Domain, Rng};
use crate::tape::{Grads, Tape, VarId};
use crate::tensor::{Dims4, TapMask, Tensor4};

/// Channel widths of the five encoder blocks.
pub const BLOCK_WIDTHS: [usize; 5] = [8, 16, 32, 64, 64];
/// Input channels (RGB).
pub const IN_CHANNELS: usize = 3;

/// Index into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Flat, named parameter registry. Masked entries carry the tap mask that
/// their gradient and value must respect.
#[derive(Debug, Clone)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor4>,
    masks: Vec<Option<TapMask>>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), tensors: Vec::new(), masks: Vec::new() }
    }

    pub fn add(&mut self, name: String, t: Tensor4) -> ParamId {
        self.add_masked(name, t, None)
    }

    pub fn add_masked(&mut self, name: String, t: Tensor4, mask: Option<TapMask>) -> ParamId {
        debug_assert!(!self.names.contains(&name), "duplicate parameter name");
        self.names.push(name);
        self.tensors.push(t);
        self.masks.push(mask);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elems(&self) -> usize {
        self.tensors.iter().map(|t| t.dims().numel()).sum()
    }

    /// Learnable parameter count: masked tensors contribute kept taps only
    /// (the zeroed taps are storage, not parameters).
    pub fn learnable_elems(&self) -> usize {
        self.tensors
            .iter()
            .zip(&self.masks)
            .map(|(t, m)| {
                let d = t.dims();
                match m {
                    Some(mask) => mask.kept_taps() * d.c * d.w,
                    None => d.numel(),
                }
            })
            .sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor4 {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor4 {
        &mut self.tensors[id.0]
    }

    pub fn mask(&self, id: ParamId) -> Option<&TapMask> {
        self.masks[id.0].as_ref()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Push every parameter onto the tape; the result maps `ParamId` index
    /// to the leaf's `VarId`.
    pub fn push_leaves(&self, tape: &mut Tape) -> Vec<VarId> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Collect d(loss)/d(param) for every parameter, zeros where the
    /// parameter did not reach the loss.
    pub fn collect_grads(&self, leaves: &[VarId], grads: &mut Grads) -> Vec<Tensor4> {
        self.ids()
            .map(|id| {
                grads.take(leaves[id.0]).unwrap_or_else(|| Tensor4::zeros(self.tensors[id.0].dims()))
            })
            .collect()
    }

    pub fn snapshot(&self) -> Vec<Tensor4> {
        self.tensors.clone()
    }

    pub fn restore(&mut self, snap: &[Tensor4]) -> CoreResult<()> {
        if snap.len() != self.tensors.len()
            || snap.iter().zip(&self.tensors).any(|(a, b)| a.dims() != b.dims())
        {
            return arg_err("ParamSet::restore", "snapshot does not match parameter shapes");
        }
        self.tensors.clone_from_slice(snap);
        Ok(())
    }

    /// True when every masked tap of every masked kernel is exactly 0.0.
    pub fn masked_positions_are_zero(&self) -> bool {
        self.ids().all(|id| {
            let Some(mask) = self.mask(id) else { return true };
            let t = self.tensor(id);
            let d = t.dims();
            (0..d.b).all(|ky| {
                (0..d.h).all(|kx| {
                    mask.keeps(ky, kx)
                        || (0..d.w).all(|ci| (0..d.c).all(|co| t.at(ky, kx, ci, co) == 0.0))
                })
            })
        })
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

fn glorot(rng: &mut Rng, dims: Dims4, fan_in: usize, fan_out: usize) -> Tensor4 {
    let bound = fmath::sqrt(6.0 / (fan_in + fan_out) as f64);
    Tensor4::from_fn(dims, |_| uniform(rng, -bound, bound))
}

fn add_conv(
    params: &mut ParamSet,
    rng: &mut Rng,
    prefix: &str,
    k: usize,
    cin: usize,
    cout: usize,
) -> ConvPair {
    let w = glorot(rng, Dims4::new(k, k, cin, cout), k * k * cin, k * k * cout);
    ConvPair {
        w: params.add(format!("{prefix}.weight"), w),
        b: params.add(format!("{prefix}.bias"), Tensor4::zeros(Dims4::new(1, 1, 1, cout))),
    }
}

/// The 2x-upsampling transposed conv starts as exact bilinear interpolation.
fn bilinear_kernel_4x4(cin: usize, cout: usize) -> Tensor4 {
    let taps = [0.25, 0.75, 0.75, 0.25];
    Tensor4::from_coords(Dims4::new(4, 4, cin, cout), |ky, kx, ci, co| {
        if ci == co {
            taps[ky] * taps[kx]
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ConvPair {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub struct CueCanParams {
    pub spec: UnitSpec,
    pub row_mask: TapMask,
    pub col_mask: TapMask,
    pub row: ConvPair,
    pub col: ConvPair,
    pub merge: ConvPair,
}

#[derive(Debug, Clone)]
struct BlockDef {
    conv1: ConvPair,
    conv2: ConvPair,
    cuecan: Option<CueCanParams>,
}

/// The five-block encoder skeleton; parameters live in the owning model's
/// [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Encoder {
    blocks: Vec<BlockDef>,
    config: CueCanConfig,
}

/// Per-block activations recorded during an encoder pass. `pre_pool` is the
/// map Grad-CAM reads (after the CueCAn unit when one is placed).
pub struct EncoderTaps {
    pub pre_pool: Vec<VarId>,
    pub post_pool: Vec<VarId>,
}

impl Encoder {
    fn build(params: &mut ParamSet, rng: &mut Rng, config: &CueCanConfig) -> Encoder {
        let mut blocks = Vec::with_capacity(5);
        let mut cin = IN_CHANNELS;
        for (bi, &width) in BLOCK_WIDTHS.iter().enumerate() {
            let block_no = bi + 1;
            let conv1 = add_conv(params, rng, &format!("block{block_no}.conv1"), 3, cin, width);
            let conv2 = add_conv(params, rng, &format!("block{block_no}.conv2"), 3, width, width);
            let cuecan = if block_no >= 3 {
                config.unit_for_block(block_no).map(|spec| {
                    add_cuecan(params, rng, block_no, width, spec)
                })
            } else {
                None
            };
            blocks.push(BlockDef { conv1, conv2, cuecan });
            cin = width;
        }
        Encoder { blocks, config: config.clone() }
    }

    pub fn config(&self) -> &CueCanConfig {
        &self.config
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        image: VarId,
    ) -> CoreResult<EncoderTaps> {
        let d = tape.dims(image);
        if d.c != IN_CHANNELS {
            return shape_err("encoder", "input must have 3 channels");
        }
        if d.h == 0 || d.w == 0 || d.h % 32 != 0 || d.w % 32 != 0 {
            return shape_err("encoder", "input spatial dims must be positive multiples of 32");
        }
        let mut x = image;
        let mut taps = EncoderTaps { pre_pool: Vec::with_capacity(5), post_pool: Vec::with_capacity(5) };
        for block in &self.blocks {
            let c1 = tape.conv2d(x, leaves[block.conv1.w.0], leaves[block.conv1.b.0], None)?;
            x = tape.relu(c1)?;
            let c2 = tape.conv2d(x, leaves[block.conv2.w.0], leaves[block.conv2.b.0], None)?;
            x = tape.relu(c2)?;
            if let Some(cc) = &block.cuecan {
                let h_here = tape.dims(x).h;
                let n_eff = POOLED_ROWS.min(h_here);
                let wires = CueCanWires {
                    row_w: leaves[cc.row.w.0],
                    row_b: leaves[cc.row.b.0],
                    col_w: leaves[cc.col.w.0],
                    col_b: leaves[cc.col.b.0],
                    merge_w: leaves[cc.merge.w.0],
                    merge_b: leaves[cc.merge.b.0],
                };
                x = unit_forward(tape, x, &wires, &cc.row_mask, &cc.col_mask, n_eff)?;
            }
            taps.pre_pool.push(x);
            x = tape.maxpool2(x)?;
            taps.post_pool.push(x);
        }
        Ok(taps)
    }
}

fn add_cuecan(
    params: &mut ParamSet,
    rng: &mut Rng,
    block_no: usize,
    c: usize,
    spec: UnitSpec,
) -> CueCanParams {
    let row_mask = build_mask(spec.k, spec.variant(), Orientation::RowFill).expect("valid k");
    let col_mask = build_mask(spec.k, spec.variant(), Orientation::ColumnFill).expect("valid k");
    let p = format!("cuecan.b{block_no}");
    let row_w = init_masked_weight(spec.k, c, c, &row_mask, rng);
    let col_w = init_masked_weight(spec.k, c, c, &col_mask, rng);
    let row = ConvPair {
        w: params.add_masked(format!("{p}.rowfill.weight"), row_w, Some(row_mask.clone())),
        b: params.add(format!("{p}.rowfill.bias"), Tensor4::zeros(Dims4::new(1, 1, 1, c))),
    };
    let col = ConvPair {
        w: params.add_masked(format!("{p}.colfill.weight"), col_w, Some(col_mask.clone())),
        b: params.add(format!("{p}.colfill.bias"), Tensor4::zeros(Dims4::new(1, 1, 1, c))),
    };
    let merge_w = glorot(rng, Dims4::new(1, 1, 3 * c, c), 3 * c, c);
    let merge = ConvPair {
        w: params.add(format!("{p}.merge.weight"), merge_w),
        b: params.add(format!("{p}.merge.bias"), Tensor4::zeros(Dims4::new(1, 1, 1, c))),
    };
    CueCanParams { spec, row_mask, col_mask, row, col, merge }
}

/// Encoder plus GAP -> linear head producing one cue-presence logit.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub params: ParamSet,
    pub encoder: Encoder,
    pub head: ConvPair,
}

pub struct ClsForward {
    pub leaves: Vec<VarId>,
    pub taps: EncoderTaps,
    /// (B,1,1,1) logits.
    pub logits: VarId,
}

impl Classifier {
    pub fn new(config: &CueCanConfig, seed: u64) -> Classifier {
        let mut rng = stream(seed, Domain::Init, 0);
        let mut params = ParamSet::new();
        let encoder = Encoder::build(&mut params, &mut rng, config);
        let head = add_conv(&mut params, &mut rng, "head", 1, BLOCK_WIDTHS[4], 1);
        Classifier { params, encoder, head }
    }

    pub fn forward(&self, tape: &mut Tape, image: &Tensor4) -> CoreResult<ClsForward> {
        let leaves = self.params.push_leaves(tape);
        let x = tape.leaf(image.clone());
        let taps = self.encoder.forward(tape, &leaves, x)?;
        let pooled = tape.global_avg_pool(taps.post_pool[4])?;
        let logits = tape.conv2d(pooled, leaves[self.head.w.0], leaves[self.head.b.0], None)?;
        Ok(ClsForward { leaves, taps, logits })
    }

    /// Grad-CAM heat map of the item-`b` logit at encoder block `block_no`
    /// (1-based, pre-pool activation).
    pub fn grad_cam(&self, image: &Tensor4, block_no: usize, b: usize) -> CoreResult<Tensor4> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, image)?;
        let target = tape.select_one(fwd.logits, b, 0, 0, 0)?;
        cam_at_block(tape, &fwd.taps, target, block_no, b)
    }
}

/// Encoder plus FCN-8 decoder producing a per-pixel missing-region logit map.
#[derive(Debug, Clone)]
pub struct Segmenter {
    pub params: ParamSet,
    pub encoder: Encoder,
    pub score3: ConvPair,
    pub score4: ConvPair,
    pub score5: ConvPair,
    pub up1: ConvPair,
    pub up2: ConvPair,
}

pub struct SegForward {
    pub leaves: Vec<VarId>,
    pub taps: EncoderTaps,
    /// Fused skip map at stride 8, before the fixed 8x upsampling.
    pub score_pre8: VarId,
    /// Deepest score map at stride 32.
    pub score5: VarId,
    /// (B,H,W,1) logit map at input resolution.
    pub map: VarId,
}

impl Segmenter {
    pub fn new(config: &CueCanConfig, seed: u64) -> Segmenter {
        let mut rng = stream(seed, Domain::Init, 0);
        let mut params = ParamSet::new();
        let encoder = Encoder::build(&mut params, &mut rng, config);
        let score3 = add_conv(&mut params, &mut rng, "decoder.score3", 1, BLOCK_WIDTHS[2], 1);
        let score4 = add_conv(&mut params, &mut rng, "decoder.score4", 1, BLOCK_WIDTHS[3], 1);
        let score5 = add_conv(&mut params, &mut rng, "decoder.score5", 1, BLOCK_WIDTHS[4], 1);
        let up1 = ConvPair {
            w: params.add("decoder.up1.weight".into(), bilinear_kernel_4x4(1, 1)),
            b: params.add("decoder.up1.bias".into(), Tensor4::zeros(Dims4::new(1, 1, 1, 1))),
        };
        let up2 = ConvPair {
            w: params.add("decoder.up2.weight".into(), bilinear_kernel_4x4(1, 1)),
            b: params.add("decoder.up2.bias".into(), Tensor4::zeros(Dims4::new(1, 1, 1, 1))),
        };
        Segmenter { params, encoder, score3, score4, score5, up1, up2 }
    }

    /// Start a segmenter from a trained classifier: the whole encoder
    /// (CueCAn included) carries over, the decoder is fresh.
    pub fn from_classifier(cls: &Classifier, seed: u64) -> Segmenter {
        let mut seg = Segmenter::new(cls.encoder.config(), seed);
        for id in seg.params.ids() {
            let name = String::from(seg.params.name(id));
            if name.starts_with("decoder.") {
                continue;
            }
            let src = cls.params.find(&name).expect("encoder names match");
            *seg.params.tensor_mut(id) = cls.params.tensor(src).clone();
        }
        seg
    }

    pub fn forward(&self, tape: &mut Tape, image: &Tensor4) -> CoreResult<SegForward> {
        let leaves = self.params.push_leaves(tape);
        let x = tape.leaf(image.clone());
        let taps = self.encoder.forward(tape, &leaves, x)?;
        let d = tape.dims(x);
        let s3 = tape.conv2d(taps.post_pool[2], leaves[self.score3.w.0], leaves[self.score3.b.0], None)?;
        let s4 = tape.conv2d(taps.post_pool[3], leaves[self.score4.w.0], leaves[self.score4.b.0], None)?;
        let s5 = tape.conv2d(taps.post_pool[4], leaves[self.score5.w.0], leaves[self.score5.b.0], None)?;
        let u1 = tape.convt2d(s5, leaves[self.up1.w.0], leaves[self.up1.b.0])?;
        let f4 = tape.add(u1, s4)?;
        let u2 = tape.convt2d(f4, leaves[self.up2.w.0], leaves[self.up2.b.0])?;
        let f3 = tape.add(u2, s3)?;
        let map = tape.bilinear_upsample(f3, d.h, d.w)?;
        Ok(SegForward { leaves, taps, score_pre8: f3, score5: s5, map })
    }

    /// Grad-CAM heat map of the segmentation logit at pixel (y, x) of item
    /// `b`, read at encoder block `block_no`.
    pub fn grad_cam(
        &self,
        image: &Tensor4,
        block_no: usize,
        b: usize,
        y: usize,
        x: usize,
    ) -> CoreResult<Tensor4> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, image)?;
        let target = tape.select_one(fwd.map, b, y, x, 0)?;
        cam_at_block(tape, &fwd.taps, target, block_no, b)
    }
}

fn cam_at_block(
    mut tape: Tape,
    taps: &EncoderTaps,
    target: VarId,
    block_no: usize,
    b: usize,
) -> CoreResult<Tensor4> {
    if !(1..=5).contains(&block_no) {
        return arg_err("grad_cam", "block id must be in 1..=5");
    }
    let act_var = taps.pre_pool[block_no - 1];
    let act = tape.val(act_var).clone();
    let mut grads = tape.backward(target)?;
    let da = grads.take(act_var).expect("activation reaches the target");
    cam_from(&act, &da, b)
}

/// The Grad-CAM combination rule, shared by both model entry points:
/// channel weights are the spatial mean of d(target)/d(activation), the map
/// is relu of the weighted channel sum, normalized to [0,1] when any mass
/// survives the relu.
pub fn cam_from(act: &Tensor4, dact: &Tensor4, b: usize) -> CoreResult<Tensor4> {
    let d = act.dims();
    if d != dact.dims() {
        return shape_err("grad_cam", "activation and gradient dims differ");
    }
    if b >= d.b {
        return arg_err("grad_cam", "batch index out of range");
    }
    if d.h == 0 || d.w == 0 || d.c == 0 {
        return arg_err("grad_cam", "zero-size layer");
    }
    let hw = (d.h * d.w) as f64;
    let mut weights = vec![0.0f64; d.c];
    for y in 0..d.h {
        for x in 0..d.w {
            for (c, w) in weights.iter_mut().enumerate() {
                *w += dact.at(b, y, x, c);
            }
        }
    }
    for w in &mut weights {
        *w /= hw;
    }
    let mut map = Tensor4::zeros(Dims4::new(1, d.h, d.w, 1));
    let mut max = 0.0f64;
    for y in 0..d.h {
        for x in 0..d.w {
            let mut s = 0.0;
            for (c, w) in weights.iter().enumerate() {
                s += w * act.at(b, y, x, c);
            }
            let v = if s > 0.0 { s } else { 0.0 };
            map.set(0, y, x, 0, v);
            if v > max {
                max = v;
            }
        }
    }
    if max > 0.0 {
        let inv = 1.0 / max;
        for v in map.data_mut() {
            *v *= inv;
        }
    }
    Ok(map)
}

fn conv_param_count(k: usize, cin: usize, cout: usize) -> usize {
    k * k * cin * cout + cout
}

/// Closed-form encoder parameter count for a config.
pub fn encoder_param_count(config: &CueCanConfig) -> usize {
    let mut total = 0;
    let mut cin = IN_CHANNELS;
    for (bi, &w) in BLOCK_WIDTHS.iter().enumerate() {
        total += conv_param_count(3, cin, w) + conv_param_count(3, w, w);
        if let Some(spec) = config.unit_for_block(bi + 1) {
            total += unit_param_count(spec, w);
        }
        cin = w;
    }
    total
}

pub fn classifier_param_count(config: &CueCanConfig) -> usize {
    encoder_param_count(config) + conv_param_count(1, BLOCK_WIDTHS[4], 1)
}

pub fn segmenter_param_count(config: &CueCanConfig) -> usize {
    encoder_param_count(config)
        + conv_param_count(1, BLOCK_WIDTHS[2], 1)
        + conv_param_count(1, BLOCK_WIDTHS[3], 1)
        + conv_param_count(1, BLOCK_WIDTHS[4], 1)
        + 2 * conv_param_count(4, 1, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuecan::CueCanConfig;
    use crate::rng::index;

    fn rand_image(seed: u64, b: usize, h: usize, w: usize) -> Tensor4 {
        let mut rng = stream(seed, Domain::Data, 0);
        Tensor4::from_fn(Dims4::new(b, h, w, 3), |_| uniform(&mut rng, 0.0, 1.0))
    }

    #[test]
    fn param_counts_match_closed_forms() {
        for cfg in ["", "333", "5e5e3", "3e3e3e"] {
            let config = CueCanConfig::parse(cfg).unwrap();
            let cls = Classifier::new(&config, 1);
            assert_eq!(cls.params.learnable_elems(), classifier_param_count(&config), "cls {cfg:?}");
            let seg = Segmenter::new(&config, 1);
            assert_eq!(seg.params.learnable_elems(), segmenter_param_count(&config), "seg {cfg:?}");
        }
    }

    #[test]
    fn adding_units_grows_count_by_exactly_their_size() {
        let vanilla = CueCanConfig::parse("").unwrap();
        let with_units = CueCanConfig::parse("333").unwrap();
        let expected: usize = (3..=5)
            .map(|b| unit_param_count(with_units.unit_for_block(b).unwrap(), BLOCK_WIDTHS[b - 1]))
            .sum();
        assert_eq!(
            classifier_param_count(&with_units) - classifier_param_count(&vanilla),
            expected
        );
    }

    #[test]
    fn classify_is_deterministic_and_batch_independent() {
        let config = CueCanConfig::parse("333").unwrap();
        let cls = Classifier::new(&config, 3);
        let one = rand_image(9, 1, 64, 64);
        let two = Tensor4::from_coords(Dims4::new(2, 64, 64, 3), |_, y, x, c| one.at(0, y, x, c));

        let mut t1 = Tape::new();
        let f1 = cls.forward(&mut t1, &one).unwrap();
        let l1 = t1.val(f1.logits).data()[0];
        let mut t2 = Tape::new();
        let f2 = cls.forward(&mut t2, &one).unwrap();
        let l2 = t2.val(f2.logits).data()[0];
        assert_eq!(l1.to_bits(), l2.to_bits(), "same model, same input, same logit");

        let mut t3 = Tape::new();
        let f3 = cls.forward(&mut t3, &two).unwrap();
        let pair = t3.val(f3.logits).data().to_vec();
        assert_eq!(pair[0].to_bits(), pair[1].to_bits());
        assert_eq!(pair[0].to_bits(), l1.to_bits());
    }

    #[test]
    fn encoder_rejects_bad_dims() {
        let config = CueCanConfig::parse("").unwrap();
        let cls = Classifier::new(&config, 3);
        let img = rand_image(9, 1, 48, 64);
        let mut t = Tape::new();
        assert!(cls.forward(&mut t, &img).is_err());
    }

    #[test]
    fn segment_output_matches_input_dims() {
        let config = CueCanConfig::parse("5e5e3").unwrap();
        let seg = Segmenter::new(&config, 3);
        let img = rand_image(10, 1, 64, 64);
        let mut t = Tape::new();
        let f = seg.forward(&mut t, &img).unwrap();
        assert_eq!(t.dims(f.map), Dims4::new(1, 64, 64, 1));
        assert_eq!(t.dims(f.score_pre8), Dims4::new(1, 8, 8, 1));
        assert_eq!(t.dims(f.score5), Dims4::new(1, 2, 2, 1));
    }

    #[test]
    fn zeroed_score_convs_give_a_constant_map() {
        let config = CueCanConfig::parse("").unwrap();
        let mut seg = Segmenter::new(&config, 3);
        for pair in [seg.score3, seg.score4, seg.score5] {
            for id in [pair.w, pair.b] {
                let d = seg.params.tensor(id).dims();
                *seg.params.tensor_mut(id) = Tensor4::zeros(d);
            }
        }
        let img = rand_image(11, 1, 64, 64);
        let mut t = Tape::new();
        let f = seg.forward(&mut t, &img).unwrap();
        let map = t.val(f.map);
        let first = map.data()[0];
        assert!(map.data().iter().all(|&v| v == first));
    }

    #[test]
    fn block3_skip_ablation_changes_the_map() {
        let config = CueCanConfig::parse("").unwrap();
        let seg = Segmenter::new(&config, 3);
        let img = rand_image(12, 1, 64, 64);
        let mut t = Tape::new();
        let base_map = seg.forward(&mut t, &img).unwrap().map;
        let base = t.val(base_map).clone();

        let mut cut = seg.clone();
        for id in [cut.score3.w, cut.score3.b] {
            let d = cut.params.tensor(id).dims();
            *cut.params.tensor_mut(id) = Tensor4::zeros(d);
        }
        let mut t2 = Tape::new();
        let cut_map = cut.forward(&mut t2, &img).unwrap().map;
        let ablated = t2.val(cut_map).clone();
        let diff = base
            .data()
            .iter()
            .zip(ablated.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(diff > 1e-9, "block-3 skip had no effect");
    }

    #[test]
    fn tiny_classifier_end_to_end_fd() {
        let config = CueCanConfig::parse("333").unwrap();
        let mut cls = Classifier::new(&config, 5);
        let img = rand_image(13, 1, 32, 32);
        let y = Tensor4::scalar(1.0);
        let h = 1e-5;

        let loss_of = |c: &Classifier| -> f64 {
            let mut t = Tape::new();
            let f = c.forward(&mut t, &img).unwrap();
            let l = t.bce_with_logits(f.logits, &y).unwrap();
            t.val(l).data()[0]
        };
        let mut t = Tape::new();
        let f = cls.forward(&mut t, &img).unwrap();
        let l = t.bce_with_logits(f.logits, &y).unwrap();
        let mut grads = t.backward(l).unwrap();
        let g = cls.params.collect_grads(&f.leaves, &mut grads);

        let mut rng = stream(23, Domain::Check, 0);
        let n_params = cls.params.len();
        for _ in 0..12 {
            let pid = ParamId(index(&mut rng, n_params));
            let n = cls.params.tensor(pid).dims().numel();
            let mut i = index(&mut rng, n);
            if let Some(mask) = cls.params.mask(pid) {
                // land on a kept tap so the FD signal is nonzero
                let k = mask.k();
                let cc = n / (k * k);
                while !mask.keeps((i / cc) / k, (i / cc) % k) {
                    i = index(&mut rng, n);
                }
            }
            let orig = cls.params.tensor(pid).data()[i];
            cls.params.tensor_mut(pid).data_mut()[i] = orig + h;
            let fp = loss_of(&cls);
            cls.params.tensor_mut(pid).data_mut()[i] = orig - h;
            let fm = loss_of(&cls);
            cls.params.tensor_mut(pid).data_mut()[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let a = g[pid.0].data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {} elem {i}: analytic {a} fd {fd}", cls.params.name(pid));
        }
    }

    #[test]
    fn translation_by_stride_shifts_score_maps() {
        let config = CueCanConfig::parse("").unwrap();
        let seg = Segmenter::new(&config, 7);
        let base = rand_image(17, 1, 64, 320);
        // shift right by 32 pixels, zero-filling the vacated strip
        let shifted = Tensor4::from_coords(Dims4::new(1, 64, 320, 3), |_, y, x, c| {
            if x >= 32 {
                base.at(0, y, x - 32, c)
            } else {
                0.0
            }
        });
        let mut t1 = Tape::new();
        let f1 = seg.forward(&mut t1, &base).unwrap();
        let pre8_a = t1.val(f1.score_pre8).clone();
        let s5_a = t1.val(f1.score5).clone();
        let mut t2 = Tape::new();
        let f2 = seg.forward(&mut t2, &shifted).unwrap();
        let pre8_b = t2.val(f2.score_pre8).clone();
        let s5_b = t2.val(f2.score5).clone();

        // stride-32 map shifts by one cell, stride-8 map by four. The
        // encoder path sees ~125 px and the fused decoder path ~220 px, so
        // only cells whose receptive field stays inside the content both
        // frames share (base pixels 0..288) are comparable.
        for x in 3..=6 {
            for y in 0..2 {
                let a = s5_a.at(0, y, x, 0);
                let b = s5_b.at(0, y, x + 1, 0);
                assert!((a - b).abs() < 1e-9, "s5 ({y},{x}): {a} vs {b}");
            }
        }
        for x in 15..=20 {
            for y in 0..8 {
                let a = pre8_a.at(0, y, x, 0);
                let b = pre8_b.at(0, y, x + 4, 0);
                assert!((a - b).abs() < 1e-9, "pre8 ({y},{x}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn transfer_copies_encoder_and_refreshes_decoder() {
        let config = CueCanConfig::parse("333").unwrap();
        let cls = Classifier::new(&config, 3);
        let seg = Segmenter::from_classifier(&cls, 99);
        let mut encoder_params = 0;
        for id in seg.params.ids() {
            let name = seg.params.name(id);
            if name.starts_with("decoder.") {
                continue;
            }
            encoder_params += 1;
            let src = cls.params.find(name).unwrap();
            assert_eq!(seg.params.tensor(id).data(), cls.params.tensor(src).data(), "{name}");
        }
        assert!(encoder_params > 0);
        assert!(seg.params.find("decoder.up1.weight").is_some());
        assert!(seg.params.find("head.weight").is_none());
        assert_eq!(seg.encoder.config().render(), "333");
    }

    #[test]
    fn grad_cam_is_normalized_and_sized_to_the_block() {
        let config = CueCanConfig::parse("333").unwrap();
        let cls = Classifier::new(&config, 3);
        let img = rand_image(19, 1, 64, 64);
        for block in 1..=5 {
            let cam = cls.grad_cam(&img, block, 0).unwrap();
            let side = 64 >> (block - 1);
            assert_eq!(cam.dims(), Dims4::new(1, side, side, 1));
            assert!(cam.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let seg = Segmenter::new(&config, 3);
        let cam = seg.grad_cam(&img, 4, 0, 40, 22).unwrap();
        assert_eq!(cam.dims(), Dims4::new(1, 8, 8, 1));
        assert!(cam.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn cam_of_single_channel_mean_is_relu_of_that_channel() {
        let mut rng = stream(29, Domain::Check, 1);
        let d = Dims4::new(1, 5, 5, 3);
        let act = Tensor4::from_fn(d, |_| uniform(&mut rng, -1.0, 1.0));
        // d(mean of channel 1)/d(act) is 1/(h*w) on channel 1, zero elsewhere
        let hw = 25.0;
        let dact = Tensor4::from_coords(d, |_, _, _, c| if c == 1 { 1.0 / hw } else { 0.0 });
        let cam = cam_from(&act, &dact, 0).unwrap();
        let mut expect = Tensor4::zeros(Dims4::new(1, 5, 5, 1));
        let mut max = 0.0f64;
        for y in 0..5 {
            for x in 0..5 {
                let v = act.at(0, y, x, 1).max(0.0) / hw;
                expect.set(0, y, x, 0, v);
                max = max.max(v);
            }
        }
        for y in 0..5 {
            for x in 0..5 {
                let want = expect.at(0, y, x, 0) / max;
                assert!((cam.at(0, y, x, 0) - want).abs() < 1e-12);
            }
        }
    }
}
