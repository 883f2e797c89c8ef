//! Procedural desk-scale scenes: a gradient background plus one of three
//! cue families (horizontal ridges, a gapped median band, a corner arc) and
//! an optional sign glyph. Subset semantics follow the four-way balanced
//! recipe: S1 cue+sign, S2 cue with the sign removed (the segmentation
//! target), S3 sign only, S4 neither.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, CoreResult};
use crate::fmath;
use crate::rng::{index, normal, stream, uniform, Domain, Rng};
use crate::tensor::{Dims4, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueType {
    Ridge,
    MedianGap,
    Curve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    S1,
    S2,
    S3,
    S4,
}

impl Subset {
    pub fn has_cue(self) -> bool {
        matches!(self, Subset::S1 | Subset::S2)
    }

    pub fn has_sign(self) -> bool {
        matches!(self, Subset::S1 | Subset::S3)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Subset::S1 => "S1",
            Subset::S2 => "S2",
            Subset::S3 => "S3",
            Subset::S4 => "S4",
        }
    }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn as_blob(&self) -> crate::blob::Blob {
        crate::blob::Blob { x: self.x, y: self.y, w: self.w, h: self.h, area: self.area() }
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy)]
pub struct IRange {
    pub lo: usize,
    pub hi: usize,
}

impl IRange {
    fn sample(&self, rng: &mut Rng) -> usize {
        self.lo + index(rng, self.hi - self.lo + 1)
    }
}

/// Inclusive float range.
#[derive(Debug, Clone, Copy)]
pub struct FRange {
    pub lo: f64,
    pub hi: f64,
}

impl FRange {
    fn sample(&self, rng: &mut Rng) -> f64 {
        uniform(rng, self.lo, self.hi)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub img_h: usize,
    pub img_w: usize,
    /// Base background gray level.
    pub bg: FRange,
    pub noise_sigma: f64,
    pub ridge_count: IRange,
    pub ridge_thickness: IRange,
    /// Bright-stripe level; dark stripes mirror it below mid-gray.
    pub ridge_level: FRange,
    pub band_width: IRange,
    pub gap_height: IRange,
    /// Brightness of the median band and the curve band.
    pub band_level: FRange,
    pub curve_radius: IRange,
    pub curve_thickness: IRange,
    pub sign_side: IRange,
    pub balanced: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            img_h: 64,
            img_w: 64,
            bg: FRange { lo: 0.35, hi: 0.55 },
            noise_sigma: 0.03,
            ridge_count: IRange { lo: 2, hi: 4 },
            ridge_thickness: IRange { lo: 2, hi: 3 },
            ridge_level: FRange { lo: 0.82, hi: 0.95 },
            band_width: IRange { lo: 4, hi: 7 },
            gap_height: IRange { lo: 8, hi: 14 },
            band_level: FRange { lo: 0.75, hi: 0.9 },
            curve_radius: IRange { lo: 14, hi: 22 },
            curve_thickness: IRange { lo: 3, hi: 5 },
            sign_side: IRange { lo: 7, hi: 11 },
            balanced: true,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> CoreResult<()> {
        let side = self.img_h.min(self.img_w);
        if side < 48 {
            return arg_err("synth", "image sides must be at least 48");
        }
        for (name, r) in [
            ("ridge_count", &self.ridge_count),
            ("ridge_thickness", &self.ridge_thickness),
            ("band_width", &self.band_width),
            ("gap_height", &self.gap_height),
            ("curve_radius", &self.curve_radius),
            ("curve_thickness", &self.curve_thickness),
            ("sign_side", &self.sign_side),
        ] {
            if r.lo == 0 || r.lo > r.hi {
                return arg_err("synth", name);
            }
        }
        for (name, r) in [
            ("bg", &self.bg),
            ("ridge_level", &self.ridge_level),
            ("band_level", &self.band_level),
        ] {
            if !(0.0..=1.0).contains(&r.lo) || !(r.lo <= r.hi) || r.hi > 1.0 {
                return arg_err("synth", name);
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return arg_err("synth", "noise_sigma must be non-negative");
        }
        if self.sign_side.hi + 8 > side {
            return arg_err("synth", "sign does not fit the image");
        }
        if self.curve_radius.hi + self.curve_thickness.hi + 14 > side {
            return arg_err("synth", "curve band does not fit the image");
        }
        if self.gap_height.hi + 10 > self.img_h {
            return arg_err("synth", "median gap does not fit the image");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// (1, H, W, 3), values in [0,1].
    pub image: Tensor4,
    pub subset: Subset,
    pub cue_type: Option<CueType>,
    /// 1 where cue pixels were drawn, row-major H*W.
    pub cue_mask: Vec<u8>,
    /// Rendered signs (S1, S3).
    pub sign_boxes: Vec<Rect>,
    /// The removed sign's box (S2 only).
    pub missing_box: Option<Rect>,
    /// 1 inside the removed sign's box, row-major H*W.
    pub missing_mask: Vec<u8>,
    pub master_seed: u64,
    pub scene_index: u64,
}

impl SyntheticScene {
    /// Classifier target: cue present (S1, S2).
    pub fn cue_label(&self) -> f64 {
        if self.subset.has_cue() {
            1.0
        } else {
            0.0
        }
    }

    /// Segmentation target as a (1,H,W,1) tensor of {0,1}.
    pub fn target_map(&self) -> Tensor4 {
        let d = self.image.dims();
        Tensor4::from_fn(Dims4::new(1, d.h, d.w, 1), |i| self.missing_mask[i] as f64)
    }
}

struct Canvas {
    h: usize,
    w: usize,
    px: Vec<f64>,
    cue: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, y: usize, x: usize, rgb: (f64, f64, f64), cue: bool) {
        let i = (y * self.w + x) * 3;
        self.px[i] = rgb.0;
        self.px[i + 1] = rgb.1;
        self.px[i + 2] = rgb.2;
        if cue {
            self.cue[y * self.w + x] = 1;
        }
    }
}

fn paint_background(c: &mut Canvas, rng: &mut Rng, p: &GeneratorParams) {
    let base = p.bg.sample(rng);
    let slope = uniform(rng, -0.08, 0.08);
    let tint = (uniform(rng, -0.03, 0.03), uniform(rng, -0.03, 0.03), uniform(rng, -0.03, 0.03));
    for y in 0..c.h {
        let g = base + slope * y as f64 / c.h as f64;
        for x in 0..c.w {
            c.put(y, x, (g + tint.0, g + tint.1, g + tint.2), false);
        }
    }
}

/// Horizontal bright/dark stripe stack spanning the full width; returns the
/// stripe stack's top row and height for sign placement.
fn paint_ridge(c: &mut Canvas, rng: &mut Rng, p: &GeneratorParams) -> (usize, usize) {
    let count = p.ridge_count.sample(rng);
    let t = p.ridge_thickness.sample(rng);
    let gap = 1 + index(rng, 2);
    let span = count * t + (count - 1) * gap;
    let y_lo = c.h / 4;
    let y_hi = c.h - c.h / 4 - span;
    let y0 = y_lo + index(rng, y_hi.saturating_sub(y_lo).max(1));
    let bright = p.ridge_level.sample(rng);
    let dark = 1.0 - bright;
    for s in 0..count {
        let lvl = if s % 2 == 0 { bright } else { dark };
        let top = y0 + s * (t + gap);
        for y in top..top + t {
            for x in 0..c.w {
                c.put(y, x, (lvl, lvl, lvl * 0.97), true);
            }
        }
    }
    (y0, span)
}

/// Vertical band interrupted by a gap; returns (band x, band width, gap y,
/// gap height).
fn paint_median_gap(
    c: &mut Canvas,
    rng: &mut Rng,
    p: &GeneratorParams,
) -> (usize, usize, usize, usize) {
    let bw = p.band_width.sample(rng);
    let x_lo = c.w / 5;
    let x_hi = c.w - c.w / 5 - bw;
    let xc = x_lo + index(rng, x_hi.saturating_sub(x_lo).max(1));
    let gh = p.gap_height.sample(rng);
    let yg = 4 + index(rng, c.h - 8 - gh);
    let lvl = p.band_level.sample(rng);
    for y in 0..c.h {
        if (yg..yg + gh).contains(&y) {
            continue;
        }
        for x in xc..xc + bw {
            c.put(y, x, (lvl, lvl, lvl * 0.93), true);
        }
    }
    (xc, bw, yg, gh)
}

/// Quarter-arc band anchored near one image corner; returns (center, radius)
/// with the center possibly off-canvas by a pixel or two.
fn paint_curve(c: &mut Canvas, rng: &mut Rng, p: &GeneratorParams) -> ((f64, f64), f64) {
    let r = p.curve_radius.sample(rng) as f64;
    let t = p.curve_thickness.sample(rng) as f64;
    let lvl = p.band_level.sample(rng);
    let corner = index(rng, 4);
    let jx = index(rng, 5) as f64;
    let jy = index(rng, 5) as f64;
    let (cx, cy) = match corner {
        0 => (jx, c.h as f64 - 1.0 - jy),
        1 => (c.w as f64 - 1.0 - jx, c.h as f64 - 1.0 - jy),
        2 => (jx, jy),
        _ => (c.w as f64 - 1.0 - jx, jy),
    };
    for y in 0..c.h {
        for x in 0..c.w {
            let d = fmath::hypot(x as f64 - cx, y as f64 - cy);
            if (d - r).abs() <= t / 2.0 {
                c.put(y, x, (lvl * 0.95, lvl, lvl * 0.9), true);
            }
        }
    }
    ((cx, cy), r + t / 2.0)
}

fn rect_hits_cue(c: &Canvas, r: &Rect) -> bool {
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            if c.cue[y * c.w + x] == 1 {
                return true;
            }
        }
    }
    false
}

/// Clamp the wanted position into the frame, then walk outward until the
/// box stops touching cue pixels. Deterministic, and total because the cue
/// never covers the whole frame.
fn place_disjoint(c: &Canvas, side: usize, want_x: i64, want_y: i64) -> Rect {
    let max_x = (c.w - 1 - side) as i64;
    let max_y = (c.h - 1 - side) as i64;
    let clamp = |v: i64, hi: i64| v.clamp(1, hi) as usize;
    let base_x = clamp(want_x, max_x);
    let base_y = clamp(want_y, max_y);
    for d in 0..c.w.max(c.h) as i64 {
        for (dx, dy) in
            [(d, 0), (-d, 0), (0, d), (0, -d), (d, d), (-d, -d), (d, -d), (-d, d)]
        {
            let r = Rect {
                x: clamp(base_x as i64 + dx, max_x),
                y: clamp(base_y as i64 + dy, max_y),
                w: side,
                h: side,
            };
            if !rect_hits_cue(c, &r) {
                return r;
            }
        }
    }
    unreachable!("no cue-free sign position exists");
}

fn draw_sign(c: &mut Canvas, r: &Rect) {
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            c.put(y, x, (0.85, 0.12, 0.1), false);
        }
    }
    if r.w > 4 && r.h > 4 {
        for y in r.y + 2..r.y + r.h - 2 {
            for x in r.x + 2..r.x + r.w - 2 {
                c.put(y, x, (0.95, 0.95, 0.92), false);
            }
        }
    }
}

fn make_scene(
    p: &GeneratorParams,
    subset: Subset,
    forced_cue: Option<CueType>,
    master_seed: u64,
    scene_index: u64,
) -> SyntheticScene {
    let mut rng = stream(master_seed, Domain::Scene, scene_index);
    let mut canvas = Canvas {
        h: p.img_h,
        w: p.img_w,
        px: vec![0.0; p.img_h * p.img_w * 3],
        cue: vec![0u8; p.img_h * p.img_w],
    };
    paint_background(&mut canvas, &mut rng, p);

    let cue_type = if subset.has_cue() {
        Some(forced_cue.unwrap_or_else(|| {
            [CueType::Ridge, CueType::MedianGap, CueType::Curve][index(&mut rng, 3)]
        }))
    } else {
        None
    };

    let side = p.sign_side.sample(&mut rng);
    // where a sign belongs for this cue, jitter included
    let want = match cue_type {
        Some(CueType::Ridge) => {
            let (y0, span) = paint_ridge(&mut canvas, &mut rng, p);
            let wx = 2 + index(&mut rng, p.img_w.saturating_sub(side + 4).max(1));
            let gap = 2 + index(&mut rng, 4);
            let above = y0 as i64 - gap as i64 - side as i64;
            let wy = if above >= 1 { above } else { (y0 + span + gap) as i64 };
            (wx as i64, wy)
        }
        Some(CueType::MedianGap) => {
            let (xc, bw, yg, gh) = paint_median_gap(&mut canvas, &mut rng, p);
            let right = xc + bw + 2 + index(&mut rng, 3);
            let wx = if right + side + 1 < p.img_w {
                right as i64
            } else {
                xc as i64 - 3 - side as i64 - index(&mut rng, 3) as i64
            };
            let wy = yg as i64 + gh as i64 / 2 - side as i64 / 2 + index(&mut rng, 5) as i64 - 2;
            (wx, wy)
        }
        Some(CueType::Curve) => {
            let ((cx, cy), outer_r) = paint_curve(&mut canvas, &mut rng, p);
            let toward_x = if cx < p.img_w as f64 / 2.0 { 1.0 } else { -1.0 };
            let toward_y = if cy < p.img_h as f64 / 2.0 { 1.0 } else { -1.0 };
            let reach = outer_r + 4.0 + index(&mut rng, 4) as f64;
            let diag = core::f64::consts::FRAC_1_SQRT_2;
            let wx = cx + toward_x * reach * diag - side as f64 / 2.0;
            let wy = cy + toward_y * reach * diag - side as f64 / 2.0;
            (wx as i64, wy as i64)
        }
        None => {
            let wx = 1 + index(&mut rng, p.img_w.saturating_sub(side + 2).max(1));
            let wy = 1 + index(&mut rng, p.img_h.saturating_sub(side + 2).max(1));
            (wx as i64, wy as i64)
        }
    };

    let mut sign_boxes = Vec::new();
    let mut missing_box = None;
    let mut missing_mask = vec![0u8; p.img_h * p.img_w];
    if subset.has_sign() || subset == Subset::S2 {
        let rect = place_disjoint(&canvas, side, want.0, want.1);
        if subset == Subset::S2 {
            for y in rect.y..rect.y + rect.h {
                for x in rect.x..rect.x + rect.w {
                    missing_mask[y * p.img_w + x] = 1;
                }
            }
            missing_box = Some(rect);
        } else {
            draw_sign(&mut canvas, &rect);
            sign_boxes.push(rect);
        }
    }

    if p.noise_sigma > 0.0 {
        for v in &mut canvas.px {
            *v += p.noise_sigma * normal(&mut rng);
        }
    }
    for v in &mut canvas.px {
        *v = v.clamp(0.0, 1.0);
    }

    let image =
        Tensor4::from_vec(Dims4::new(1, p.img_h, p.img_w, 3), canvas.px).expect("sized buffer");
    SyntheticScene {
        image,
        subset,
        cue_type,
        cue_mask: canvas.cue,
        sign_boxes,
        missing_box,
        missing_mask,
        master_seed,
        scene_index,
    }
}

/// Subset of scene i out of n under the balance rule: round-robin
/// S1,S2,S3,S4, with the remainder handed out in the order S4,S3,S2.
fn subset_for(i: usize, n: usize) -> Subset {
    const CYCLE: [Subset; 4] = [Subset::S1, Subset::S2, Subset::S3, Subset::S4];
    let full = n / 4 * 4;
    if i < full {
        CYCLE[i % 4]
    } else {
        [Subset::S4, Subset::S3, Subset::S2][i - full]
    }
}

pub fn generate(
    params: &GeneratorParams,
    n: usize,
    seed: u64,
) -> CoreResult<Vec<SyntheticScene>> {
    generate_with_cue(params, n, seed, None)
}

/// Like [`generate`] but every cue-bearing scene uses the given family;
/// the difficulty-sweep checks rely on this.
pub fn generate_with_cue(
    params: &GeneratorParams,
    n: usize,
    seed: u64,
    forced_cue: Option<CueType>,
) -> CoreResult<Vec<SyntheticScene>> {
    params.validate()?;
    if n == 0 {
        return arg_err("synth", "scene count must be positive");
    }
    Ok((0..n)
        .map(|i| {
            let subset = if params.balanced {
                subset_for(i, n)
            } else {
                let mut rng = stream(seed, Domain::Scene, i as u64 ^ (1 << 40));
                [Subset::S1, Subset::S2, Subset::S3, Subset::S4][index(&mut rng, 4)]
            };
            make_scene(params, subset, forced_cue, seed, i as u64)
        })
        .collect())
}

/// Stratified deterministic split. Per-subset floors first, then leftovers
/// go to whichever split lags its global target most.
pub fn split(
    scenes: Vec<SyntheticScene>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> CoreResult<(Vec<SyntheticScene>, Vec<SyntheticScene>, Vec<SyntheticScene>)> {
    if scenes.is_empty() {
        return arg_err("split", "no scenes to split");
    }
    let (rt, rv, rs) = ratios;
    if !(rt >= 0.0 && rv >= 0.0 && rs >= 0.0) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return arg_err("split", "ratios must be non-negative and sum to 1");
    }
    let n = scenes.len();
    let targets = [n as f64 * rt, n as f64 * rv, n as f64 * rs];
    let mut assigned = [0usize; 3];
    // destination split of each scene: per-group floors first, and only
    // once every floor is counted do leftovers chase the global targets
    let mut dest = vec![0usize; n];
    let mut leftovers: Vec<usize> = Vec::new();
    for (gi, subset) in [Subset::S1, Subset::S2, Subset::S3, Subset::S4].iter().enumerate() {
        let mut members: Vec<usize> =
            (0..n).filter(|&i| scenes[i].subset == *subset).collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = stream(seed, Domain::Split, gi as u64);
        crate::rng::shuffle(&mut rng, &mut members);
        let g = members.len();
        let floors = [
            (g as f64 * rt) as usize,
            (g as f64 * rv) as usize,
            (g as f64 * rs) as usize,
        ];
        let mut cursor = 0;
        for (split_id, &take) in floors.iter().enumerate() {
            for _ in 0..take {
                dest[members[cursor]] = split_id;
                assigned[split_id] += 1;
                cursor += 1;
            }
        }
        leftovers.extend_from_slice(&members[cursor..]);
    }
    for i in leftovers {
        let mut best = 0;
        for s in 1..3 {
            if targets[s] - assigned[s] as f64 > targets[best] - assigned[best] as f64 {
                best = s;
            }
        }
        dest[i] = best;
        assigned[best] += 1;
    }
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (i, scene) in scenes.into_iter().enumerate() {
        match dest[i] {
            0 => out.0.push(scene),
            1 => out.1.push(scene),
            _ => out.2.push(scene),
        }
    }
    Ok(out)
}
