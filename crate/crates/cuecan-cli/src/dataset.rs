//! Dataset directory layout: images/NNNN.ppm, masks/NNNN.pgm (missing-sign
//! masks), cues/NNNN.pgm (cue pixels), and meta.jsonl with one line per
//! scene carrying subset, cue type, boxes, and the generator seed.

use std::fs;
use std::path::{Path, PathBuf};

use cuecan_core::synth::{CueType, Rect, Subset, SyntheticScene};
use serde::{Deserialize, Serialize};

use crate::errors::{data_err, io_err, parse_err, CliResult};
use crate::netpbm;

#[derive(Debug, Serialize, Deserialize)]
struct MetaLine {
    index: u64,
    subset: String,
    cue_type: Option<String>,
    sign_boxes: Vec<[usize; 4]>,
    missing_box: Option<[usize; 4]>,
    seed: u64,
}

fn rect_to_arr(r: &Rect) -> [usize; 4] {
    [r.x, r.y, r.w, r.h]
}

fn arr_to_rect(a: [usize; 4]) -> Rect {
    Rect { x: a[0], y: a[1], w: a[2], h: a[3] }
}

fn cue_to_tag(c: CueType) -> &'static str {
    match c {
        CueType::Ridge => "ridge",
        CueType::MedianGap => "median_gap",
        CueType::Curve => "curve",
    }
}

fn tag_to_cue(path: &Path, s: &str) -> CliResult<CueType> {
    match s {
        "ridge" => Ok(CueType::Ridge),
        "median_gap" => Ok(CueType::MedianGap),
        "curve" => Ok(CueType::Curve),
        other => Err(data_err(path, format!("unknown cue type '{other}'"))),
    }
}

fn subset_to_tag(s: Subset) -> &'static str {
    match s {
        Subset::S1 => "S1",
        Subset::S2 => "S2",
        Subset::S3 => "S3",
        Subset::S4 => "S4",
    }
}

fn tag_to_subset(path: &Path, s: &str) -> CliResult<Subset> {
    match s {
        "S1" => Ok(Subset::S1),
        "S2" => Ok(Subset::S2),
        "S3" => Ok(Subset::S3),
        "S4" => Ok(Subset::S4),
        other => Err(data_err(path, format!("unknown subset '{other}'"))),
    }
}

fn mask_to_bytes(mask: &[u8]) -> Vec<u8> {
    mask.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect()
}

fn bytes_to_mask(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().map(|&v| u8::from(v >= 128)).collect()
}

fn scene_file(dir: &Path, sub: &str, index: u64, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("{index:04}.{ext}"))
}

pub fn export(dir: &Path, scenes: &[SyntheticScene]) -> CliResult<()> {
    for sub in ["images", "masks", "cues"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(&dir.join(sub), e))?;
    }
    let mut meta = String::new();
    for scene in scenes {
        let d = scene.image.dims();
        let index = scene.scene_index;
        netpbm::write_ppm(&scene_file(dir, "images", index, "ppm"), &scene.image)?;
        netpbm::write_pgm(
            &scene_file(dir, "masks", index, "pgm"),
            &mask_to_bytes(&scene.missing_mask),
            d.h,
            d.w,
        )?;
        netpbm::write_pgm(
            &scene_file(dir, "cues", index, "pgm"),
            &mask_to_bytes(&scene.cue_mask),
            d.h,
            d.w,
        )?;
        let line = MetaLine {
            index,
            subset: String::from(subset_to_tag(scene.subset)),
            cue_type: scene.cue_type.map(|c| String::from(cue_to_tag(c))),
            sign_boxes: scene.sign_boxes.iter().map(rect_to_arr).collect(),
            missing_box: scene.missing_box.as_ref().map(rect_to_arr),
            seed: scene.master_seed,
        };
        meta.push_str(&serde_json::to_string(&line).expect("meta serializes"));
        meta.push('\n');
    }
    let meta_path = dir.join("meta.jsonl");
    fs::write(&meta_path, meta).map_err(|e| io_err(&meta_path, e))
}

pub fn import(dir: &Path) -> CliResult<Vec<SyntheticScene>> {
    let meta_path = dir.join("meta.jsonl");
    let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let mut scenes = Vec::new();
    let mut offset = 0usize;
    for line in text.lines() {
        if line.trim().is_empty() {
            offset += line.len() + 1;
            continue;
        }
        let meta: MetaLine = serde_json::from_str(line)
            .map_err(|e| parse_err(&meta_path, offset + e.column().saturating_sub(1), e.to_string()))?;
        let image = netpbm::read_ppm(&scene_file(dir, "images", meta.index, "ppm"))?;
        let d = image.dims();

        let mask_path = scene_file(dir, "masks", meta.index, "pgm");
        let (mh, mw, mask_bytes) = netpbm::read_pgm(&mask_path)?;
        if (mh, mw) != (d.h, d.w) {
            return Err(data_err(&mask_path, "mask size does not match its image"));
        }

        // cues/ is a layout extension; absent files mean an empty cue mask
        let cue_path = scene_file(dir, "cues", meta.index, "pgm");
        let cue_mask = if cue_path.exists() {
            let (ch, cw, bytes) = netpbm::read_pgm(&cue_path)?;
            if (ch, cw) != (d.h, d.w) {
                return Err(data_err(&cue_path, "cue mask size does not match its image"));
            }
            bytes_to_mask(&bytes)
        } else {
            vec![0u8; d.h * d.w]
        };

        let subset = tag_to_subset(&meta_path, &meta.subset)?;
        let cue_type = match &meta.cue_type {
            Some(tag) => Some(tag_to_cue(&meta_path, tag)?),
            None => None,
        };
        scenes.push(SyntheticScene {
            image,
            subset,
            cue_type,
            cue_mask,
            sign_boxes: meta.sign_boxes.into_iter().map(arr_to_rect).collect(),
            missing_box: meta.missing_box.map(arr_to_rect),
            missing_mask: bytes_to_mask(&mask_bytes),
            master_seed: meta.seed,
            scene_index: meta.index,
        });
        offset += line.len() + 1;
    }
    if scenes.is_empty() {
        return Err(data_err(&meta_path, "dataset holds no scenes"));
    }
    Ok(scenes)
}
