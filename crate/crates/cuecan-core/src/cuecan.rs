//! The CueCAn unit: masked row/column context filling on a pooled feature
//! map, upsample, subtract, concat, 1x1 merge.
//!
//! A filling kernel is an ordinary conv kernel with a fixed spatial mask.
//! The center variant zeroes only the central row (or column), so a cell is
//! reconstructed from everything but its own line; the edge variant keeps
//! only the outermost row (or column) pair. The two coincide at k = 3 and
//! differ at k = 5.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, CoreError, CoreResult};
use crate::fmath::sqrt;
use crate::rng::{uniform, Rng};
use crate::tape::{Tape, VarId};
use crate::tensor::{Dims4, TapMask, Tensor4};

/// Pooled row count of the unit ("N"), before clamping to the feature height.
pub const POOLED_ROWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillVariant {
    /// Only the central row/column is fixed to zero.
    Center,
    /// Only the outermost row/column pair is learnable.
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Fills rows from neighboring rows: masking acts on kernel rows.
    RowFill,
    /// Fills columns from neighboring columns: masking acts on kernel columns.
    ColumnFill,
}

/// Spatial tap mask for a filling kernel. k must be 3 or 5.
pub fn build_mask(k: usize, variant: FillVariant, orientation: Orientation) -> CoreResult<TapMask> {
    if k != 3 && k != 5 {
        return arg_err("build_mask", format!("kernel size {} not in {{3,5}}", k));
    }
    let line_kept = |i: usize| match variant {
        FillVariant::Center => i != k / 2,
        FillVariant::Edge => i == 0 || i == k - 1,
    };
    let mut keep = vec![false; k * k];
    for ky in 0..k {
        for kx in 0..k {
            let line = match orientation {
                Orientation::RowFill => ky,
                Orientation::ColumnFill => kx,
            };
            keep[ky * k + kx] = line_kept(line);
        }
    }
    TapMask::new(k, keep)
}

/// One config token: kernel size plus edge flag ("5e" is k=5 edge-filling).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitSpec {
    pub k: usize,
    pub edge: bool,
}

impl UnitSpec {
    pub fn variant(&self) -> FillVariant {
        if self.edge {
            FillVariant::Edge
        } else {
            FillVariant::Center
        }
    }
}

/// Parsed CueCAn configuration: empty (vanilla encoder) or one entry per
/// placement block 3, 4, 5, in that order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CueCanConfig {
    units: Vec<UnitSpec>,
}

impl CueCanConfig {
    pub fn vanilla() -> Self {
        CueCanConfig::default()
    }

    pub fn from_units(units: [UnitSpec; 3]) -> Self {
        CueCanConfig { units: units.to_vec() }
    }

    /// Grammar: empty, or exactly three tokens from {"3","5","3e","5e"}
    /// concatenated left to right for blocks 3, 4, 5.
    pub fn parse(s: &str) -> CoreResult<Self> {
        if s.is_empty() {
            return Ok(CueCanConfig::vanilla());
        }
        let bad = |detail: String| Err(CoreError::Config { detail });
        let mut units = Vec::new();
        let mut chars = s.chars().peekable();
        while let Some(c) = chars.next() {
            let k = match c {
                '3' => 3,
                '5' => 5,
                other => return bad(format!("config {:?}: unexpected {:?}", s, other)),
            };
            let edge = chars.peek() == Some(&'e');
            if edge {
                chars.next();
            }
            units.push(UnitSpec { k, edge });
        }
        if units.len() != 3 {
            return bad(format!("config {:?}: {} tokens, need exactly 3", s, units.len()));
        }
        Ok(CueCanConfig { units })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for u in &self.units {
            s.push(if u.k == 3 { '3' } else { '5' });
            if u.edge {
                s.push('e');
            }
        }
        s
    }

    pub fn is_vanilla(&self) -> bool {
        self.units.is_empty()
    }

    /// Unit spec for encoder block 3, 4, or 5; None for vanilla configs.
    pub fn unit_for_block(&self, block: usize) -> Option<UnitSpec> {
        if self.is_vanilla() {
            return None;
        }
        match block {
            3..=5 => Some(self.units[block - 3]),
            _ => None,
        }
    }

    pub fn units(&self) -> &[UnitSpec] {
        &self.units
    }
}

/// Learnable parameter count of one unit with C channels: unmasked taps of
/// both filling kernels, the 1x1 merge (3C -> C), and three biases.
pub fn unit_param_count(spec: UnitSpec, c: usize) -> usize {
    let row_mask = build_mask(spec.k, spec.variant(), Orientation::RowFill).expect("valid k");
    let fill = row_mask.kept_taps() * c * c + c;
    // column mask is the transpose pattern: identical tap count
    2 * fill + (3 * c * c + c)
}

/// Glorot-uniform init over the unmasked taps only; masked taps are 0.
pub fn init_masked_weight(k: usize, cin: usize, cout: usize, mask: &TapMask, rng: &mut Rng) -> Tensor4 {
    let taps = mask.kept_taps();
    let bound = sqrt(6.0 / ((taps * cin + taps * cout) as f64));
    let mut w = Tensor4::zeros(Dims4::new(k, k, cin, cout));
    for ky in 0..k {
        for kx in 0..k {
            for ci in 0..cin {
                for co in 0..cout {
                    if mask.keeps(ky, kx) {
                        let i = ((ky * k + kx) * cin + ci) * cout + co;
                        w.data_mut()[i] = uniform(rng, -bound, bound);
                    }
                }
            }
        }
    }
    w
}

/// Tape variables of one unit's six parameter tensors for the current step.
#[derive(Debug, Clone, Copy)]
pub struct CueCanWires {
    pub row_w: VarId,
    pub row_b: VarId,
    pub col_w: VarId,
    pub col_b: VarId,
    pub merge_w: VarId,
    pub merge_b: VarId,
}

/// Record one CueCAn unit application on the tape. `n` is the pooled row
/// count (already clamped to the placement's height by the caller).
pub fn unit_forward(
    tape: &mut Tape,
    f: VarId,
    wires: &CueCanWires,
    row_mask: &TapMask,
    col_mask: &TapMask,
    n: usize,
) -> CoreResult<VarId> {
    let d = tape.dims(f);
    if d.h < n {
        return arg_err("cuecan", format!("feature height {} below pooled rows {}", d.h, n));
    }
    if d.w < 2 {
        return arg_err("cuecan", format!("feature width {} below 2", d.w));
    }
    let pw = (d.w / 2).max(1);
    let p = tape.adaptive_avg_pool(f, n, pw)?;
    let f_horiz = tape.conv2d(p, wires.row_w, wires.row_b, Some(row_mask.clone()))?;
    let f_vert = tape.conv2d(p, wires.col_w, wires.col_b, Some(col_mask.clone()))?;
    let f_horiz_up = tape.bilinear_upsample(f_horiz, d.h, d.w)?;
    let f_vert_up = tape.bilinear_upsample(f_vert, d.h, d.w)?;
    let d_h = tape.sub(f, f_horiz_up)?;
    let d_v = tape.sub(f, f_vert_up)?;
    let f_concat = tape.concat_channels(&[f, d_h, d_v])?;
    let merged = tape.conv2d(f_concat, wires.merge_w, wires.merge_b, None)?;
    tape.relu(merged)
}
