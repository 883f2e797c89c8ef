//! Post-processing glue shared by subcommands: predicted regions with
//! features, the forest's JSON persistence, synthetic video intervals over
//! dataset scenes, and the per-frame region JSONL lines.

use std::path::Path;

use cuecan_core::blob::{extract_blobs, Blob, RegionFeatures, MIN_BLOB_AREA};
use cuecan_core::fmath;
use cuecan_core::forest::{ForestHyper, Node, RandomForest, Tree};
use cuecan_core::metrics::box_iou;
use cuecan_core::nets::Segmenter;
use cuecan_core::synth::SyntheticScene;
use cuecan_core::tape::Tape;
use cuecan_core::tensor::Tensor4;
use serde::{Deserialize, Serialize};

use crate::errors::{data_err, io_err, parse_err, CliResult, CoreExt};

#[derive(Debug, Clone)]
pub struct Region {
    pub blob: Blob,
    pub features: [f64; 6],
}

/// Forward one (1,H,W,3) image through the segmenter, returning the
/// (1,H,W,1) logit map.
pub fn predict_map(model: &Segmenter, image: &Tensor4) -> CliResult<Tensor4> {
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, image).lift()?;
    Ok(tape.val(fwd.map).clone())
}

/// Thresholded components of the sigmoid map as regions with features.
pub fn regions_from_map(logits: &Tensor4, tau: f64) -> CliResult<Vec<Region>> {
    let d = logits.dims();
    if d.b != 1 || d.c != 1 {
        return Err(crate::errors::usage(format!(
            "region extraction wants a (1,H,W,1) map, got {d:?}"
        )));
    }
    let prob: Vec<f64> = logits.data().iter().map(|&z| fmath::sigmoid(z)).collect();
    let blobs = extract_blobs(&prob, d.h, d.w, tau, MIN_BLOB_AREA);
    Ok(blobs
        .into_iter()
        .map(|blob| {
            let features = RegionFeatures::from_blob(&blob, d.h, d.w).to_array();
            Region { blob, features }
        })
        .collect())
}

/// Label one region for forest training: does its rectangle hit the
/// ground-truth missing box at IoU >= iou_min?
pub fn region_label(region: &Region, gt: Option<&cuecan_core::synth::Rect>, iou_min: f64) -> bool {
    gt.is_some_and(|r| box_iou(&region.blob, &r.as_blob()) >= iou_min)
}

// --- forest persistence ---------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NodeFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf: Option<[u64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<(usize, f64, u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    nodes: Vec<NodeFile>,
    root: u32,
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    n_trees: usize,
    max_depth: usize,
    min_leaf: usize,
    features_per_split: usize,
    seed: u64,
    oob_error: Option<f64>,
    trees: Vec<TreeFile>,
}

pub fn save_forest(path: &Path, forest: &RandomForest, oob_error: Option<f64>) -> CliResult<()> {
    let file = ForestFile {
        n_trees: forest.hyper.n_trees,
        max_depth: forest.hyper.max_depth,
        min_leaf: forest.hyper.min_leaf,
        features_per_split: forest.hyper.features_per_split,
        seed: forest.hyper.seed,
        oob_error,
        trees: forest
            .trees
            .iter()
            .map(|t| TreeFile {
                root: t.root,
                nodes: t
                    .nodes
                    .iter()
                    .map(|n| match n {
                        Node::Leaf { counts } => NodeFile { leaf: Some(*counts), split: None },
                        Node::Split { feat, thresh, left, right } => NodeFile {
                            leaf: None,
                            split: Some((*feat, *thresh, *left, *right)),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&file).expect("forest serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_forest(path: &Path) -> CliResult<(RandomForest, Option<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ForestFile = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, e.column().saturating_sub(1), e.to_string()))?;
    let mut trees = Vec::with_capacity(file.trees.len());
    for (ti, tf) in file.trees.iter().enumerate() {
        let mut nodes = Vec::with_capacity(tf.nodes.len());
        for nf in &tf.nodes {
            let node = match (nf.leaf, nf.split) {
                (Some(counts), None) => Node::Leaf { counts },
                (None, Some((feat, thresh, left, right))) => {
                    if feat >= 6
                        || left as usize >= tf.nodes.len()
                        || right as usize >= tf.nodes.len()
                    {
                        return Err(data_err(path, format!("tree {ti} has an invalid split")));
                    }
                    Node::Split { feat, thresh, left, right }
                }
                _ => return Err(data_err(path, format!("tree {ti} node is neither leaf nor split"))),
            };
            nodes.push(node);
        }
        if tf.root as usize >= nodes.len() {
            return Err(data_err(path, format!("tree {ti} root out of range")));
        }
        trees.push(Tree { nodes, root: tf.root });
    }
    if trees.len() != file.n_trees {
        return Err(data_err(path, "tree count disagrees with manifest"));
    }
    let forest = RandomForest {
        hyper: ForestHyper {
            n_trees: file.n_trees,
            max_depth: file.max_depth,
            min_leaf: file.min_leaf,
            features_per_split: file.features_per_split,
            seed: file.seed,
        },
        trees,
    };
    Ok((forest, file.oob_error))
}

// --- video intervals ------------------------------------------------------

/// A synthetic interval: `missing` intervals draw their frames from S2
/// scenes, others from the rest, `frames` scenes each, sampled with the
/// Data-domain stream so interval composition is reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct Interval {
    pub interval_id: u64,
    pub missing: bool,
    /// Indices into the scene slice the interval was built from.
    pub frames: Vec<usize>,
}

pub fn build_intervals(
    scenes: &[SyntheticScene],
    n_intervals: usize,
    frames_per: usize,
    seed: u64,
) -> CliResult<Vec<Interval>> {
    use cuecan_core::rng::{index, stream, Domain};
    use cuecan_core::synth::Subset;
    if n_intervals == 0 || frames_per == 0 {
        return Err(crate::errors::usage("intervals and frames must be positive"));
    }
    let missing_pool: Vec<usize> = scenes
        .iter()
        .enumerate()
        .filter(|(_, s)| s.subset == Subset::S2)
        .map(|(i, _)| i)
        .collect();
    let other_pool: Vec<usize> = scenes
        .iter()
        .enumerate()
        .filter(|(_, s)| s.subset != Subset::S2)
        .map(|(i, _)| i)
        .collect();
    if missing_pool.is_empty() || other_pool.is_empty() {
        return Err(data_err(
            Path::new("dataset"),
            "interval construction needs both S2 scenes and non-S2 scenes",
        ));
    }
    let mut out = Vec::with_capacity(n_intervals);
    for i in 0..n_intervals {
        let mut rng = stream(seed, Domain::Data, i as u64);
        let missing = i % 2 == 0;
        let pool = if missing { &missing_pool } else { &other_pool };
        let frames = (0..frames_per).map(|_| pool[index(&mut rng, pool.len())]).collect();
        out.push(Interval { interval_id: i as u64, missing, frames });
    }
    Ok(out)
}

/// One region-JSONL line: every frame of every interval gets one.
#[derive(Serialize)]
pub struct FrameLine<'a> {
    pub frame: usize,
    pub boxes: &'a [[usize; 4]],
    pub verdicts: &'a [bool],
    pub interval_id: u64,
    #[serde(rename = "final")]
    pub final_missing: bool,
}

pub fn blob_to_arr(b: &Blob) -> [usize; 4] {
    [b.x, b.y, b.w, b.h]
}
