//! Model checkpoints: a u32-LE length-prefixed JSON manifest (model kind,
//! CueCAn config string, encoder widths, tensor name order) followed by one
//! CUET entry per tensor in manifest order.

use std::path::Path;

use cuecan_core::cuecan::CueCanConfig;
use cuecan_core::nets::{Classifier, ParamSet, Segmenter, BLOCK_WIDTHS};
use serde::{Deserialize, Serialize};

use crate::errors::{data_err, io_err, parse_err, usage, CliResult};
use crate::tensorfile::{encode_tensor, parse_tensor};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    config: String,
    widths: Vec<usize>,
    tensors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Classifier,
    Segmenter,
}

impl ModelKind {
    fn tag(self) -> &'static str {
        match self {
            ModelKind::Classifier => "classifier",
            ModelKind::Segmenter => "segmenter",
        }
    }
}

fn encode(kind: ModelKind, config: &CueCanConfig, params: &ParamSet) -> Vec<u8> {
    let manifest = Manifest {
        kind: String::from(kind.tag()),
        config: config.render(),
        widths: BLOCK_WIDTHS.to_vec(),
        tensors: params.ids().map(|id| String::from(params.name(id))).collect(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::new();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for id in params.ids() {
        encode_tensor(&mut out, params.tensor(id));
    }
    out
}

pub fn save_classifier(path: &Path, model: &Classifier) -> CliResult<()> {
    let bytes = encode(ModelKind::Classifier, model.encoder.config(), &model.params);
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn save_segmenter(path: &Path, model: &Segmenter) -> CliResult<()> {
    let bytes = encode(ModelKind::Segmenter, model.encoder.config(), &model.params);
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

struct Loaded {
    kind: ModelKind,
    config: CueCanConfig,
    names: Vec<String>,
    tensors: Vec<cuecan_core::tensor::Tensor4>,
}

fn load(path: &Path) -> CliResult<Loaded> {
    let buf = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if buf.len() < 4 {
        return Err(parse_err(path, 0, "file too short for a manifest length"));
    }
    let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    let mut at = 4usize;
    if at + len > buf.len() {
        return Err(parse_err(path, 0, format!("manifest length {len} exceeds file")));
    }
    let manifest: Manifest = serde_json::from_slice(&buf[at..at + len])
        .map_err(|e| parse_err(path, at, format!("bad manifest JSON: {e}")))?;
    at += len;

    let kind = match manifest.kind.as_str() {
        "classifier" => ModelKind::Classifier,
        "segmenter" => ModelKind::Segmenter,
        other => return Err(data_err(path, format!("unknown model kind '{other}'"))),
    };
    if manifest.widths != BLOCK_WIDTHS {
        return Err(data_err(
            path,
            format!("encoder widths {:?} do not match this build's {:?}", manifest.widths, BLOCK_WIDTHS),
        ));
    }
    let config = CueCanConfig::parse(&manifest.config)
        .map_err(|e| data_err(path, format!("bad config in manifest: {e}")))?;

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for _ in &manifest.tensors {
        tensors.push(parse_tensor(&buf, &mut at, path)?);
    }
    if at != buf.len() {
        return Err(parse_err(path, at, "trailing bytes after the last tensor"));
    }
    Ok(Loaded { kind, config, names: manifest.tensors, tensors })
}

fn fill_params(params: &mut ParamSet, loaded: &Loaded, path: &Path) -> CliResult<()> {
    if loaded.names.len() != params.len() {
        return Err(data_err(
            path,
            format!("checkpoint has {} tensors, model wants {}", loaded.names.len(), params.len()),
        ));
    }
    for (name, tensor) in loaded.names.iter().zip(&loaded.tensors) {
        let id = params
            .find(name)
            .ok_or_else(|| data_err(path, format!("checkpoint tensor '{name}' has no slot")))?;
        if params.tensor(id).dims() != tensor.dims() {
            return Err(data_err(path, format!("tensor '{name}' has mismatched dimensions")));
        }
        *params.tensor_mut(id) = tensor.clone();
    }
    if !params.masked_positions_are_zero() {
        return Err(data_err(path, "checkpoint violates the mask invariant (nonzero masked tap)"));
    }
    Ok(())
}

/// Load a classifier checkpoint. When `expect` is given, its config must
/// match the manifest's: the declared checkpoint/architecture error.
pub fn load_classifier(path: &Path, expect: Option<&CueCanConfig>) -> CliResult<Classifier> {
    let loaded = load(path)?;
    if loaded.kind != ModelKind::Classifier {
        return Err(data_err(path, "not a classifier checkpoint"));
    }
    check_expected(path, expect, &loaded.config)?;
    let mut model = Classifier::new(&loaded.config, 0);
    fill_params(&mut model.params, &loaded, path)?;
    Ok(model)
}

pub fn load_segmenter(path: &Path, expect: Option<&CueCanConfig>) -> CliResult<Segmenter> {
    let loaded = load(path)?;
    if loaded.kind != ModelKind::Segmenter {
        return Err(data_err(path, "not a segmenter checkpoint"));
    }
    check_expected(path, expect, &loaded.config)?;
    let mut model = Segmenter::new(&loaded.config, 0);
    fill_params(&mut model.params, &loaded, path)?;
    Ok(model)
}

/// Peek at a checkpoint's kind and config without constructing the model.
pub fn inspect(path: &Path) -> CliResult<(ModelKind, CueCanConfig)> {
    let loaded = load(path)?;
    Ok((loaded.kind, loaded.config))
}

fn check_expected(path: &Path, expect: Option<&CueCanConfig>, got: &CueCanConfig) -> CliResult<()> {
    if let Some(want) = expect {
        if want != got {
            return Err(usage(format!(
                "requested CueCAn config '{}' but checkpoint {} holds '{}'",
                want.render(),
                path.display(),
                got.render()
            )));
        }
    }
    Ok(())
}

/// Classifier-to-segmenter transfer with the manifest config check.
pub fn segmenter_from_checkpoint(
    path: &Path,
    expect: Option<&CueCanConfig>,
    seed: u64,
) -> CliResult<Segmenter> {
    let cls = load_classifier(path, expect)?;
    Ok(Segmenter::from_classifier(&cls, seed))
}
