//! Training loops for the classifier and the segmenter, plus the declared
//! localization protocol: components of sigma(z) > tau, matched to ground
//! truth at IoU >= iou_min, either as raw pixel sets or as their tight
//! rectangles (the CueCAn-P variant).

use alloc::vec::Vec;

use crate::blob::{Blob, MIN_BLOB_AREA};
use crate::error::{arg_err, CoreResult};
use crate::fmath;
use crate::metrics::{box_iou, f_from_pr, PrfCounts};
use crate::nets::{Classifier, Segmenter};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{shuffle, stream, Domain};
use crate::synth::{CueType, Rect, SyntheticScene};
use crate::tape::Tape;
use crate::tensor::{Dims4, Tensor4};

/// The paper's epoch count; desk-scale runs default far lower.
pub const PAPER_EPOCHS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_classifier: f64,
    pub lr_segmenter: f64,
    pub epochs: usize,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    /// Early stop after this many epochs without a validation-F improvement.
    pub patience: usize,
    /// Optional convergence stop: halt once validation F reaches this.
    pub stop_at_val_f: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr_classifier: 1e-4,
            lr_segmenter: 1e-3,
            epochs: 50,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            patience: 10,
            stop_at_val_f: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> CoreResult<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return arg_err("TrainConfig", "batch_size and epochs must be at least 1");
        }
        if self.lr_classifier <= 0.0 || self.lr_segmenter <= 0.0 {
            return arg_err("TrainConfig", "learning rates must be positive");
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) || self.focal_gamma < 0.0 {
            return arg_err("TrainConfig", "focal alpha in (0,1), gamma >= 0");
        }
        Ok(())
    }
}

/// Classification tallies including true negatives (pixel tallies reuse it).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClsCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fneg: u64,
}

impl ClsCounts {
    pub fn tally(&mut self, predicted: bool, positive: bool) {
        match (predicted, positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fneg += 1,
            (false, false) => self.tn += 1,
        }
    }

    fn prf(&self) -> PrfCounts {
        PrfCounts { tp: self.tp, fp: self.fp, fneg: self.fneg }
    }

    pub fn precision(&self) -> f64 {
        self.prf().precision()
    }

    pub fn recall(&self) -> f64 {
        self.prf().recall()
    }

    pub fn f_measure(&self) -> f64 {
        f_from_pr(self.precision(), self.recall())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Region recall of the raw masks; segmentation epochs only.
    pub region_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f: f64,
    pub adam_steps: u64,
}

/// Test-split classification report with per-cue-type breakdowns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsReport {
    pub counts: ClsCounts,
    pub loss: f64,
    pub per_cue: Vec<(&'static str, ClsCounts)>,
}

pub fn cue_tag(cue: Option<CueType>) -> &'static str {
    match cue {
        Some(CueType::Ridge) => "ridge",
        Some(CueType::MedianGap) => "median_gap",
        Some(CueType::Curve) => "curve",
        None => "none",
    }
}

fn batch_images(scenes: &[&SyntheticScene]) -> CoreResult<Tensor4> {
    let d0 = scenes[0].image.dims();
    let per = d0.h * d0.w * d0.c;
    let mut t = Tensor4::zeros(Dims4::new(scenes.len(), d0.h, d0.w, d0.c));
    for (b, s) in scenes.iter().enumerate() {
        let d = s.image.dims();
        if d.b != 1 || (d.h, d.w, d.c) != (d0.h, d0.w, d0.c) {
            return arg_err("batch_images", "scenes disagree in image shape");
        }
        t.data_mut()[b * per..(b + 1) * per].copy_from_slice(s.image.data());
    }
    Ok(t)
}

fn batch_cue_labels(scenes: &[&SyntheticScene]) -> Tensor4 {
    Tensor4::from_fn(Dims4::new(scenes.len(), 1, 1, 1), |i| scenes[i].cue_label())
}

fn batch_target_maps(scenes: &[&SyntheticScene]) -> CoreResult<Tensor4> {
    let d0 = scenes[0].image.dims();
    let per = d0.h * d0.w;
    let mut t = Tensor4::zeros(Dims4::new(scenes.len(), d0.h, d0.w, 1));
    for (b, s) in scenes.iter().enumerate() {
        if s.missing_mask.len() != per {
            return arg_err("batch_target_maps", "scenes disagree in mask shape");
        }
        let dst = &mut t.data_mut()[b * per..(b + 1) * per];
        for (d, m) in dst.iter_mut().zip(&s.missing_mask) {
            *d = *m as f64;
        }
    }
    Ok(t)
}

/// Slice item `b` of a batched tensor out as a (1,H,W,C) tensor.
fn slice_item(t: &Tensor4, b: usize) -> Tensor4 {
    let d = t.dims();
    let per = d.h * d.w * d.c;
    Tensor4::from_vec(Dims4::new(1, d.h, d.w, d.c), t.data()[b * per..(b + 1) * per].to_vec())
        .expect("slice length matches")
}

enum Task {
    Classify,
    Segment,
}

/// One shuffled pass; returns (mean loss, tallies, adam steps taken).
fn run_epoch(
    task: &Task,
    cls: Option<&mut Classifier>,
    seg: Option<&mut Segmenter>,
    scenes: &[SyntheticScene],
    cfg: &TrainConfig,
    adam: &mut Adam,
    epoch: usize,
) -> CoreResult<(f64, ClsCounts)> {
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut rng = stream(cfg.seed, Domain::Shuffle, epoch as u64);
    shuffle(&mut rng, &mut order);

    let mut counts = ClsCounts::default();
    let mut loss_sum = 0.0;
    let mut seen = 0usize;
    let mut cls = cls;
    let mut seg = seg;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&SyntheticScene> = chunk.iter().map(|&i| &scenes[i]).collect();
        let images = batch_images(&batch)?;
        let mut tape = Tape::new();
        match task {
            Task::Classify => {
                let model = cls.as_mut().expect("classifier present");
                let targets = batch_cue_labels(&batch);
                let fwd = model.forward(&mut tape, &images)?;
                let loss = tape.bce_with_logits(fwd.logits, &targets)?;
                tally_scalar(tape.val(fwd.logits), &targets, &mut counts);
                loss_sum += tape.val(loss).data()[0] * batch.len() as f64;
                let mut grads = tape.backward(loss)?;
                let gs = model.params.collect_grads(&fwd.leaves, &mut grads);
                adam.step(&mut model.params, &gs)?;
            }
            Task::Segment => {
                let model = seg.as_mut().expect("segmenter present");
                let targets = batch_target_maps(&batch)?;
                let fwd = model.forward(&mut tape, &images)?;
                let loss =
                    tape.focal_loss(fwd.map, &targets, cfg.focal_alpha, cfg.focal_gamma)?;
                tally_scalar(tape.val(fwd.map), &targets, &mut counts);
                loss_sum += tape.val(loss).data()[0] * batch.len() as f64;
                let mut grads = tape.backward(loss)?;
                let gs = model.params.collect_grads(&fwd.leaves, &mut grads);
                adam.step(&mut model.params, &gs)?;
            }
        }
        seen += batch.len();
    }
    Ok((loss_sum / seen as f64, counts))
}

/// Element-wise tally: prediction is logit > 0, truth is target > 0.5.
fn tally_scalar(logits: &Tensor4, targets: &Tensor4, counts: &mut ClsCounts) {
    for (z, y) in logits.data().iter().zip(targets.data()) {
        counts.tally(*z > 0.0, *y > 0.5);
    }
}

fn record(epoch: usize, split: &'static str, loss: f64, c: &ClsCounts, rr: Option<f64>) -> EpochRecord {
    EpochRecord {
        epoch,
        split,
        loss,
        precision: c.precision(),
        recall: c.recall(),
        f: c.f_measure(),
        region_recall: rr,
    }
}

pub fn train_classifier(
    model: &mut Classifier,
    train: &[SyntheticScene],
    val: &[SyntheticScene],
    cfg: &TrainConfig,
) -> CoreResult<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return arg_err("train_classifier", "empty split");
    }
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr_classifier), &model.params)?;
    let mut history = Vec::new();
    let mut best_f = -1.0;
    let mut best_epoch = 0;
    let mut best_snap = model.params.snapshot();
    let mut stale = 0usize;
    for epoch in 1..=cfg.epochs {
        let (loss, counts) =
            run_epoch(&Task::Classify, Some(model), None, train, cfg, &mut adam, epoch)?;
        history.push(record(epoch, "train", loss, &counts, None));

        let (vloss, vcounts) = eval_classifier_counts(model, val, cfg.batch_size)?;
        let vf = vcounts.f_measure();
        history.push(record(epoch, "val", vloss, &vcounts, None));

        if vf > best_f + 1e-12 {
            best_f = vf;
            best_epoch = epoch;
            best_snap = model.params.snapshot();
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.stop_at_val_f.is_some_and(|t| vf >= t) {
            break;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    model.params.restore(&best_snap)?;
    Ok(TrainOutcome { history, best_epoch, best_val_f: best_f, adam_steps: adam.steps_taken() })
}

fn eval_classifier_counts(
    model: &Classifier,
    scenes: &[SyntheticScene],
    batch: usize,
) -> CoreResult<(f64, ClsCounts)> {
    let mut counts = ClsCounts::default();
    let mut loss_sum = 0.0;
    let refs: Vec<&SyntheticScene> = scenes.iter().collect();
    for chunk in refs.chunks(batch) {
        let images = batch_images(chunk)?;
        let targets = batch_cue_labels(chunk);
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &images)?;
        let loss = tape.bce_with_logits(fwd.logits, &targets)?;
        tally_scalar(tape.val(fwd.logits), &targets, &mut counts);
        loss_sum += tape.val(loss).data()[0] * chunk.len() as f64;
    }
    Ok((loss_sum / scenes.len() as f64, counts))
}

/// Full test-split report with per-cue-type breakdowns.
pub fn eval_classifier(
    model: &Classifier,
    scenes: &[SyntheticScene],
    batch: usize,
) -> CoreResult<ClsReport> {
    if scenes.is_empty() {
        return arg_err("eval_classifier", "empty split");
    }
    let (loss, counts) = eval_classifier_counts(model, scenes, batch)?;
    let mut per_cue: Vec<(&'static str, ClsCounts)> = Vec::new();
    let refs: Vec<&SyntheticScene> = scenes.iter().collect();
    for chunk in refs.chunks(batch) {
        let images = batch_images(chunk)?;
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &images)?;
        let logits = tape.val(fwd.logits).data().to_vec();
        for (s, z) in chunk.iter().zip(logits) {
            let tag = cue_tag(s.cue_type);
            let slot = match per_cue.iter_mut().find(|(t, _)| *t == tag) {
                Some((_, c)) => c,
                None => {
                    per_cue.push((tag, ClsCounts::default()));
                    &mut per_cue.last_mut().expect("just pushed").1
                }
            };
            slot.tally(z > 0.0, s.cue_label() > 0.5);
        }
    }
    Ok(ClsReport { counts, loss, per_cue })
}

/// Segmentation corpus per the declared protocol: every S2 scene plus an
/// equal number of empty-mask negatives drawn alternately from S3 and S4,
/// in corpus order.
pub fn segmentation_corpus(scenes: &[SyntheticScene]) -> Vec<SyntheticScene> {
    use crate::synth::Subset;
    let positives: Vec<&SyntheticScene> =
        scenes.iter().filter(|s| s.subset == Subset::S2).collect();
    let s3: Vec<&SyntheticScene> = scenes.iter().filter(|s| s.subset == Subset::S3).collect();
    let s4: Vec<&SyntheticScene> = scenes.iter().filter(|s| s.subset == Subset::S4).collect();
    let mut out: Vec<SyntheticScene> = positives.iter().map(|s| (*s).clone()).collect();
    let mut i3 = 0;
    let mut i4 = 0;
    for k in 0..positives.len() {
        let pick_s3 = k % 2 == 0;
        let next = if pick_s3 && i3 < s3.len() {
            i3 += 1;
            s3.get(i3 - 1)
        } else if i4 < s4.len() {
            i4 += 1;
            s4.get(i4 - 1)
        } else if i3 < s3.len() {
            i3 += 1;
            s3.get(i3 - 1)
        } else {
            None
        };
        match next {
            Some(s) => out.push((*s).clone()),
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionMode {
    /// IoU between the component's pixel set and the ground-truth box.
    RawMask,
    /// IoU between the component's tight rectangle and the box (CueCAn-P).
    Rectangles,
}

struct Component {
    pixels: Vec<(usize, usize)>,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

/// 4-connected components of prob > tau, smaller than `min_area` dropped.
fn label_components(prob: &[f64], h: usize, w: usize, tau: f64, min_area: usize) -> Vec<Component> {
    let mut seen = alloc::vec![false; h * w];
    let mut comps = Vec::new();
    for start in 0..h * w {
        if seen[start] || prob[start] <= tau {
            continue;
        }
        let mut stack = alloc::vec![start];
        seen[start] = true;
        let mut comp = Component {
            pixels: Vec::new(),
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            comp.pixels.push((x, y));
            comp.x0 = comp.x0.min(x);
            comp.y0 = comp.y0.min(y);
            comp.x1 = comp.x1.max(x);
            comp.y1 = comp.y1.max(y);
            let mut push = |j: usize| {
                if !seen[j] && prob[j] > tau {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        if comp.pixels.len() >= min_area {
            comps.push(comp);
        }
    }
    comps
}

fn component_iou(comp: &Component, gt: &Rect, mode: RegionMode) -> f64 {
    match mode {
        RegionMode::RawMask => {
            let inter = comp
                .pixels
                .iter()
                .filter(|&&(x, y)| {
                    x >= gt.x && x < gt.x + gt.w && y >= gt.y && y < gt.y + gt.h
                })
                .count();
            let union = comp.pixels.len() + gt.area() - inter;
            inter as f64 / union as f64
        }
        RegionMode::Rectangles => {
            let rect = Blob {
                x: comp.x0,
                y: comp.y0,
                w: comp.x1 - comp.x0 + 1,
                h: comp.y1 - comp.y0 + 1,
                area: comp.pixels.len(),
            };
            box_iou(&rect, &gt.as_blob())
        }
    }
}

/// Region recall over logit maps: a ground-truth box counts recalled iff
/// some predicted component reaches IoU >= iou_min (inclusive). Scenes with
/// no ground truth contribute nothing; all-negative ground truth gives None.
pub fn eval_localization(
    maps: &[Tensor4],
    gts: &[Option<Rect>],
    tau: f64,
    iou_min: f64,
    mode: RegionMode,
) -> CoreResult<Option<f64>> {
    if maps.len() != gts.len() {
        return arg_err("eval_localization", "maps and ground truth differ in length");
    }
    if !(tau > 0.0 && tau < 1.0) {
        return arg_err("eval_localization", "tau must lie in (0,1)");
    }
    if !(0.0..=1.0).contains(&iou_min) {
        return arg_err("eval_localization", "iou_min must lie in [0,1]");
    }
    let mut total = 0usize;
    let mut recalled = 0usize;
    for (map, gt) in maps.iter().zip(gts) {
        let Some(gt) = gt else { continue };
        let d = map.dims();
        if d.b != 1 || d.c != 1 {
            return arg_err("eval_localization", "maps must be (1,H,W,1)");
        }
        total += 1;
        let prob: Vec<f64> = map.data().iter().map(|&z| fmath::sigmoid(z)).collect();
        let comps = label_components(&prob, d.h, d.w, tau, MIN_BLOB_AREA);
        if comps.iter().any(|c| component_iou(c, gt, mode) >= iou_min) {
            recalled += 1;
        }
    }
    Ok((total > 0).then(|| recalled as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegReport {
    pub loss: f64,
    pub pixel: ClsCounts,
    pub recall_raw: Option<f64>,
    pub recall_rect: Option<f64>,
}

fn eval_segmenter_parts(
    model: &Segmenter,
    scenes: &[SyntheticScene],
    cfg: &TrainConfig,
    tau: f64,
    iou_min: f64,
) -> CoreResult<SegReport> {
    let mut counts = ClsCounts::default();
    let mut loss_sum = 0.0;
    let mut maps: Vec<Tensor4> = Vec::with_capacity(scenes.len());
    let refs: Vec<&SyntheticScene> = scenes.iter().collect();
    for chunk in refs.chunks(cfg.batch_size) {
        let images = batch_images(chunk)?;
        let targets = batch_target_maps(chunk)?;
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &images)?;
        let loss = tape.focal_loss(fwd.map, &targets, cfg.focal_alpha, cfg.focal_gamma)?;
        tally_scalar(tape.val(fwd.map), &targets, &mut counts);
        loss_sum += tape.val(loss).data()[0] * chunk.len() as f64;
        let map_val = tape.val(fwd.map);
        for b in 0..chunk.len() {
            maps.push(slice_item(map_val, b));
        }
    }
    let gts: Vec<Option<Rect>> = scenes.iter().map(|s| s.missing_box).collect();
    Ok(SegReport {
        loss: loss_sum / scenes.len() as f64,
        pixel: counts,
        recall_raw: eval_localization(&maps, &gts, tau, iou_min, RegionMode::RawMask)?,
        recall_rect: eval_localization(&maps, &gts, tau, iou_min, RegionMode::Rectangles)?,
    })
}

pub fn eval_segmenter(
    model: &Segmenter,
    scenes: &[SyntheticScene],
    cfg: &TrainConfig,
    tau: f64,
    iou_min: f64,
) -> CoreResult<SegReport> {
    if scenes.is_empty() {
        return arg_err("eval_segmenter", "empty split");
    }
    eval_segmenter_parts(model, scenes, cfg, tau, iou_min)
}

pub fn train_segmenter(
    model: &mut Segmenter,
    train: &[SyntheticScene],
    val: &[SyntheticScene],
    cfg: &TrainConfig,
) -> CoreResult<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return arg_err("train_segmenter", "empty split");
    }
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr_segmenter), &model.params)?;
    let mut history = Vec::new();
    let mut best_f = -1.0;
    let mut best_epoch = 0;
    let mut best_snap = model.params.snapshot();
    let mut stale = 0usize;
    for epoch in 1..=cfg.epochs {
        let (loss, counts) =
            run_epoch(&Task::Segment, None, Some(model), train, cfg, &mut adam, epoch)?;
        history.push(record(epoch, "train", loss, &counts, None));

        let vr = eval_segmenter_parts(model, val, cfg, 0.5, 0.25)?;
        let vf = vr.pixel.f_measure();
        history.push(record(epoch, "val", vr.loss, &vr.pixel, vr.recall_raw));

        if vf > best_f + 1e-12 {
            best_f = vf;
            best_epoch = epoch;
            best_snap = model.params.snapshot();
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.stop_at_val_f.is_some_and(|t| vf >= t) {
            break;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    model.params.restore(&best_snap)?;
    Ok(TrainOutcome { history, best_epoch, best_val_f: best_f, adam_steps: adam.steps_taken() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuecan::CueCanConfig;
    use crate::synth::{generate, GeneratorParams, Subset};

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig { batch_size: 8, epochs, patience: 50, seed: 3, ..TrainConfig::default() }
    }

    fn scenes(n: usize, seed: u64) -> Vec<SyntheticScene> {
        generate(&GeneratorParams::default(), n, seed).unwrap()
    }

    #[test]
    fn classifier_training_is_deterministic_and_learns() {
        let data = scenes(32, 41);
        let (train, val) = data.split_at(24);
        let cfg = tiny_config(3);
        let config = CueCanConfig::parse("333").unwrap();

        let mut a = Classifier::new(&config, 5);
        let out_a = train_classifier(&mut a, train, val, &cfg).unwrap();
        let mut b = Classifier::new(&config, 5);
        let out_b = train_classifier(&mut b, train, val, &cfg).unwrap();
        assert_eq!(out_a, out_b, "same seed must give identical histories");

        let first = out_a.history.iter().find(|r| r.split == "train").unwrap().loss;
        let last = out_a.history.iter().rev().find(|r| r.split == "train").unwrap().loss;
        assert!(last < first, "training loss did not drop: {first} -> {last}");
        assert_eq!(out_a.adam_steps, 9, "24 scenes / batch 8 over 3 epochs");
        assert!(a.params.masked_positions_are_zero());
    }

    #[test]
    fn best_val_weights_are_restored() {
        let data = scenes(24, 42);
        let (train, val) = data.split_at(16);
        let cfg = tiny_config(3);
        let mut model = Classifier::new(&CueCanConfig::vanilla(), 7);
        let out = train_classifier(&mut model, train, val, &cfg).unwrap();
        let (_, counts) = eval_classifier_counts(&model, val, cfg.batch_size).unwrap();
        assert_eq!(
            counts.f_measure(),
            out.best_val_f,
            "restored weights must reproduce the best recorded validation F"
        );
        assert!(out.best_epoch >= 1);
    }

    #[test]
    fn stop_at_val_f_halts_after_one_epoch() {
        let data = scenes(16, 43);
        let (train, val) = data.split_at(8);
        let cfg = TrainConfig { stop_at_val_f: Some(0.0), ..tiny_config(20) };
        let mut model = Classifier::new(&CueCanConfig::vanilla(), 1);
        let out = train_classifier(&mut model, train, val, &cfg).unwrap();
        assert_eq!(out.history.len(), 2, "one train and one val record");
    }

    #[test]
    fn empty_splits_and_bad_configs_are_rejected() {
        let data = scenes(8, 44);
        let mut model = Classifier::new(&CueCanConfig::vanilla(), 1);
        assert!(train_classifier(&mut model, &[], &data, &tiny_config(1)).is_err());
        assert!(train_classifier(&mut model, &data, &[], &tiny_config(1)).is_err());
        let bad = TrainConfig { lr_classifier: 0.0, ..TrainConfig::default() };
        assert!(train_classifier(&mut model, &data, &data, &bad).is_err());
        let bad = TrainConfig { focal_alpha: 1.5, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn segmenter_best_loss_decreases_on_easy_data() {
        let data = scenes(48, 45);
        let seg_scenes: Vec<SyntheticScene> = data
            .into_iter()
            .filter(|s| matches!(s.subset, Subset::S2 | Subset::S4))
            .collect();
        let (train, val) = seg_scenes.split_at(seg_scenes.len() - 8);
        let cfg = TrainConfig { batch_size: 8, epochs: 4, patience: 50, seed: 9, ..Default::default() };
        let mut model = Segmenter::new(&CueCanConfig::parse("333").unwrap(), 11);
        let out = train_segmenter(&mut model, train, val, &cfg).unwrap();
        let train_losses: Vec<f64> =
            out.history.iter().filter(|r| r.split == "train").map(|r| r.loss).collect();
        let mut best_so_far = f64::INFINITY;
        let mut bests = Vec::new();
        for l in &train_losses {
            best_so_far = best_so_far.min(*l);
            bests.push(best_so_far);
        }
        assert!(bests.windows(2).all(|w| w[1] <= w[0]));
        assert!(
            bests.last().unwrap() < &train_losses[0],
            "no loss improvement over {} epochs: {train_losses:?}",
            train_losses.len()
        );
        let report = eval_segmenter(&model, val, &cfg, 0.5, 0.25).unwrap();
        assert!(report.loss.is_finite());
    }

    #[test]
    fn localization_hand_cases() {
        // an 8x8 logit map with a solid positive 2x2 block at (0,0)
        let mut z = Tensor4::filled(Dims4::new(1, 8, 8, 1), -10.0);
        for y in 0..2 {
            for x in 0..2 {
                z.set(0, y, x, 0, 10.0);
            }
        }
        // identical prediction and truth: recalled in both modes
        let gt = Some(Rect { x: 0, y: 0, w: 2, h: 2 });
        for mode in [RegionMode::RawMask, RegionMode::Rectangles] {
            let r = eval_localization(&[z.clone()], &[gt], 0.5, 0.25, mode).unwrap();
            assert_eq!(r, Some(1.0));
        }
        // disjoint truth: no recall
        let far = Some(Rect { x: 5, y: 5, w: 2, h: 2 });
        let r = eval_localization(&[z.clone()], &[far], 0.5, 0.25, RegionMode::RawMask).unwrap();
        assert_eq!(r, Some(0.0));
        // 2x2 prediction inside a 4x4 truth: IoU exactly 0.25, and the
        // inclusive threshold counts it
        let wide = Some(Rect { x: 0, y: 0, w: 4, h: 4 });
        for mode in [RegionMode::RawMask, RegionMode::Rectangles] {
            let r = eval_localization(&[z.clone()], &[wide], 0.5, 0.25, mode).unwrap();
            assert_eq!(r, Some(1.0), "IoU 0.25 vs iou_min 0.25 must recall");
            let r = eval_localization(&[z.clone()], &[wide], 0.5, 0.2500001, mode).unwrap();
            assert_eq!(r, Some(0.0));
        }
        // no ground truth anywhere: absent, not zero
        let r = eval_localization(&[z.clone()], &[None], 0.5, 0.25, RegionMode::RawMask).unwrap();
        assert_eq!(r, None);
        // degenerate thresholds are rejected
        assert!(eval_localization(&[z.clone()], &[gt], 0.0, 0.25, RegionMode::RawMask).is_err());
        assert!(eval_localization(&[z], &[gt], 0.5, 1.5, RegionMode::RawMask).is_err());
    }

    #[test]
    fn rectangle_mode_fills_holes_that_raw_mode_keeps() {
        // a ring: 4x4 block minus its 2x2 interior; truth is the full 4x4
        let mut z = Tensor4::filled(Dims4::new(1, 8, 8, 1), -10.0);
        for y in 0..4 {
            for x in 0..4 {
                let edge = y == 0 || y == 3 || x == 0 || x == 3;
                if edge {
                    z.set(0, y, x, 0, 10.0);
                }
            }
        }
        let gt = Some(Rect { x: 0, y: 0, w: 4, h: 4 });
        let raw = eval_localization(&[z.clone()], &[gt], 0.5, 0.8, RegionMode::RawMask).unwrap();
        let rect = eval_localization(&[z], &[gt], 0.5, 0.8, RegionMode::Rectangles).unwrap();
        // raw IoU is 12/16 = 0.75 < 0.8; the tight rectangle reaches 1.0
        assert_eq!(raw, Some(0.0));
        assert_eq!(rect, Some(1.0));
    }

    #[test]
    fn per_cue_breakdown_partitions_the_split() {
        let data = scenes(24, 46);
        let model = Classifier::new(&CueCanConfig::vanilla(), 2);
        let report = eval_classifier(&model, &data, 8).unwrap();
        let total: u64 = report
            .per_cue
            .iter()
            .map(|(_, c)| c.tp + c.fp + c.tn + c.fneg)
            .sum();
        assert_eq!(total, 24);
        let c = report.counts;
        assert_eq!(c.tp + c.fp + c.tn + c.fneg, 24);
    }
}
