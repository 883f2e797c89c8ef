//! The `cuecan` binary: dataset generation, training, evaluation,
//! post-processing, video recognition, Grad-CAM, and the self-test.
//!
//! Exit codes: 0 ok, 1 usage, 2 data, 3 numeric, 4 invariant violation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use cuecan_core::check::{run_gradient_suite, run_oracle_suite};
use cuecan_core::cuecan::CueCanConfig;
use cuecan_core::forest::{forest_predict, forest_train, ForestHyper};
use cuecan_core::kernels::bilinear_upsample_fwd;
use cuecan_core::nets::{Classifier, Segmenter};
use cuecan_core::synth::{
    generate, generate_with_cue, split, CueType, GeneratorParams, SyntheticScene,
};
use cuecan_core::train::{
    eval_classifier, eval_segmenter, segmentation_corpus, train_classifier, train_segmenter,
    TrainConfig,
};
use cuecan_core::video::{eval_video, frame_verdict, video_decide};

use cuecan_cli::checkpoint;
use cuecan_cli::dataset;
use cuecan_cli::errors::{usage, CliError, CliResult, CoreExt, EXIT_USAGE};
use cuecan_cli::metricsio::{self, RunMeta};
use cuecan_cli::netpbm;
use cuecan_cli::pipeline::{
    blob_to_arr, build_intervals, load_forest, predict_map, region_label, regions_from_map,
    save_forest, Region,
};
use cuecan_cli::report;

#[derive(Parser)]
#[command(name = "cuecan", version, about = "Missing-object pipeline: cue classification, localization, and video recognition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by the training and evaluation subcommands. Precedence for
/// each value: CLI flag, then --config file, then the built-in default.
#[derive(Args, Debug, Default)]
struct CommonOpts {
    /// JSON config file with optional keys mirroring these flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_name = "IOU")]
    iou_min: Option<f64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Stop training once validation F reaches this value
    #[arg(long, value_name = "F")]
    stop_f: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    cuecan: Option<String>,
    seed: Option<u64>,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    tau: Option<f64>,
    iou_min: Option<f64>,
    trees: Option<usize>,
    depth: Option<usize>,
    stop_f: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene dataset into a directory
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Force every cue-bearing scene to one cue type
        #[arg(long)]
        cue: Option<String>,
    },
    /// Train the cue-presence classifier
    TrainCls {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// CueCAn config string: "" or three tokens from {3,5,3e,5e}
        #[arg(long)]
        cuecan: Option<String>,
        /// Earlier train-cls run directory to compare against
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Train the segmenter, optionally transferring a classifier checkpoint
    TrainSeg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cuecan: Option<String>,
        /// Classifier checkpoint to initialize the encoder from
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Evaluate a classifier checkpoint on a dataset split
    EvalCls {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Evaluate a segmenter checkpoint: pixel metrics and region recalls
    EvalSeg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Extract rectangles and region features from segmenter predictions
    Postprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Train the random-forest region classifier from segmenter predictions
    TrainRf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Majority-vote video recognition over synthetic intervals
    EvalVideo {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Forest file from train-rf
        #[arg(long)]
        rf: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        intervals: usize,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Grad-CAM heat map and overlay for one image
    Gradcam {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 4)]
        block: usize,
        /// "cls" (classifier logit) or "seg" (segmentation logit at a pixel)
        #[arg(long, default_value = "cls")]
        target: String,
        /// For --target seg: "auto" or "x,y"
        #[arg(long, default_value = "auto")]
        pixel: String,
        /// Overlay PPM path
        #[arg(long)]
        out: PathBuf,
        /// Optional raw heat-map PGM path
        #[arg(long)]
        heat: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Run the gradient and oracle suites; exit 0 only if everything passes
    Selftest {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write the report lines to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version printing is not an error
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cuecan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_file_config(path: Option<&PathBuf>) -> CliResult<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| cuecan_cli::errors::io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        cuecan_cli::errors::parse_err(path, e.column().saturating_sub(1), e.to_string())
    })
}

struct Resolved {
    cuecan: String,
    seed: u64,
    epochs: usize,
    batch: usize,
    lr: Option<f64>,
    tau: f64,
    iou_min: f64,
    trees: usize,
    depth: usize,
    stop_f: Option<f64>,
}

fn resolve(
    opts: &CommonOpts,
    cuecan_flag: Option<&String>,
    seed_flag: Option<u64>,
) -> CliResult<Resolved> {
    let file = load_file_config(opts.config.as_ref())?;
    let r = Resolved {
        cuecan: cuecan_flag.cloned().or(file.cuecan).unwrap_or_default(),
        seed: seed_flag.or(file.seed).unwrap_or(0),
        epochs: opts.epochs.or(file.epochs).unwrap_or(50),
        batch: opts.batch.or(file.batch).unwrap_or(32),
        lr: opts.lr.or(file.lr),
        tau: opts.tau.or(file.tau).unwrap_or(0.5),
        iou_min: opts.iou_min.or(file.iou_min).unwrap_or(0.25),
        trees: opts.trees.or(file.trees).unwrap_or(50),
        depth: opts.depth.or(file.depth).unwrap_or(8),
        stop_f: opts.stop_f.or(file.stop_f),
    };
    if r.epochs == 0 || r.batch == 0 {
        return Err(usage("--epochs and --batch must be at least 1"));
    }
    if !(r.tau > 0.0 && r.tau < 1.0) {
        return Err(usage("--tau must lie strictly inside (0,1)"));
    }
    if !(0.0..=1.0).contains(&r.iou_min) {
        return Err(usage("--iou-min must lie in [0,1]"));
    }
    if r.trees == 0 {
        return Err(usage("--trees must be at least 1"));
    }
    if r.lr.is_some_and(|lr| lr <= 0.0) {
        return Err(usage("--lr must be positive"));
    }
    Ok(r)
}

fn parse_cuecan(s: &str) -> CliResult<CueCanConfig> {
    CueCanConfig::parse(s).map_err(|e| usage(e.to_string()))
}

fn import_and_split(
    data: &Path,
    seed: u64,
) -> CliResult<(Vec<SyntheticScene>, Vec<SyntheticScene>, Vec<SyntheticScene>)> {
    let scenes = dataset::import(data)?;
    split(scenes, (0.8, 0.1, 0.1), seed).lift()
}

fn pick_split(
    which: &str,
    parts: (Vec<SyntheticScene>, Vec<SyntheticScene>, Vec<SyntheticScene>),
) -> CliResult<Vec<SyntheticScene>> {
    let (train, val, test) = parts;
    Ok(match which {
        "train" => train,
        "val" => val,
        "test" => test,
        "all" => {
            let mut all = train;
            all.extend(val);
            all.extend(test);
            all
        }
        other => return Err(usage(format!("unknown split '{other}' (train|val|test|all)"))),
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| cuecan_cli::errors::io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| cuecan_cli::errors::io_err(path, e))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Gen { out, n, seed, cue } => cmd_gen(&out, n, seed, cue.as_deref()),
        Cmd::TrainCls { data, out, seed, cuecan, baseline, opts } => {
            cmd_train_cls(&data, &out, seed, cuecan.as_ref(), baseline.as_deref(), &opts)
        }
        Cmd::TrainSeg { data, out, seed, cuecan, init, opts } => {
            cmd_train_seg(&data, &out, seed, cuecan.as_ref(), init.as_deref(), &opts)
        }
        Cmd::EvalCls { data, model, seed, split, out, opts } => {
            cmd_eval_cls(&data, &model, seed, &split, out.as_deref(), &opts)
        }
        Cmd::EvalSeg { data, model, seed, split, out, opts } => {
            cmd_eval_seg(&data, &model, seed, &split, out.as_deref(), &opts)
        }
        Cmd::Postprocess { data, model, seed, split, out, opts } => {
            cmd_postprocess(&data, &model, seed, &split, out.as_deref(), &opts)
        }
        Cmd::TrainRf { data, model, out, seed, opts } => {
            cmd_train_rf(&data, &model, &out, seed, &opts)
        }
        Cmd::EvalVideo { data, model, rf, seed, intervals, frames, out, opts } => {
            cmd_eval_video(&data, &model, &rf, seed, intervals, frames, out.as_deref(), &opts)
        }
        Cmd::Gradcam { model, image, block, target, pixel, out, heat, opts } => {
            cmd_gradcam(&model, &image, block, &target, &pixel, &out, heat.as_deref(), &opts)
        }
        Cmd::Selftest { seed, out } => cmd_selftest(seed, out.as_deref()),
    }
}

fn cmd_gen(out: &Path, n: usize, seed: u64, cue: Option<&str>) -> CliResult<()> {
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let params = GeneratorParams::default();
    let scenes = match cue {
        None => generate(&params, n, seed).lift()?,
        Some(tag) => {
            let cue = match tag {
                "ridge" => CueType::Ridge,
                "median_gap" => CueType::MedianGap,
                "curve" => CueType::Curve,
                other => return Err(usage(format!("unknown cue '{other}'"))),
            };
            generate_with_cue(&params, n, seed, Some(cue)).lift()?
        }
    };
    ensure_dir(out)?;
    dataset::export(out, &scenes)?;
    println!("wrote {n} scenes to {}", out.display());
    Ok(())
}

fn train_config(r: &Resolved, lr_field: fn(&mut TrainConfig, f64)) -> TrainConfig {
    let mut cfg = TrainConfig {
        batch_size: r.batch,
        epochs: r.epochs,
        seed: r.seed,
        stop_at_val_f: r.stop_f,
        ..TrainConfig::default()
    };
    if let Some(lr) = r.lr {
        lr_field(&mut cfg, lr);
    }
    cfg
}

fn config_json(r: &Resolved, cfg: &TrainConfig, data: &Path, extra: &[(&str, serde_json::Value)]) -> serde_json::Value {
    let mut map = BTreeMap::new();
    map.insert("cuecan", json!(r.cuecan));
    map.insert("data", json!(data.display().to_string()));
    map.insert("epochs", json!(cfg.epochs));
    map.insert("batch", json!(cfg.batch_size));
    map.insert("lr_classifier", json!(cfg.lr_classifier));
    map.insert("lr_segmenter", json!(cfg.lr_segmenter));
    map.insert("focal_alpha", json!(cfg.focal_alpha));
    map.insert("focal_gamma", json!(cfg.focal_gamma));
    map.insert("patience", json!(cfg.patience));
    map.insert("stop_f", json!(cfg.stop_at_val_f));
    map.insert("tau", json!(r.tau));
    map.insert("iou_min", json!(r.iou_min));
    for (k, v) in extra {
        map.insert(k, v.clone());
    }
    json!(map)
}

fn cmd_train_cls(
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    cuecan: Option<&String>,
    baseline: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, cuecan, seed)?;
    let config = parse_cuecan(&r.cuecan)?;
    let (train, val, test) = import_and_split(data, r.seed)?;
    let cfg = train_config(&r, |c, lr| c.lr_classifier = lr);

    let mut model = Classifier::new(&config, r.seed);
    let outcome = train_classifier(&mut model, &train, &val, &cfg).lift()?;
    let rep = eval_classifier(&model, &test, cfg.batch_size).lift()?;

    ensure_dir(out)?;
    metricsio::write_metrics(&out.join("metrics.jsonl"), &outcome.history)?;
    checkpoint::save_classifier(&out.join("model.ckpt"), &model)?;
    let label = if config.is_vanilla() {
        String::from("vanilla")
    } else {
        format!("cuecan-{}", config.render())
    };
    let table = report::classification_table(&[(label.clone(), &rep)]);
    write_text(&out.join("report.txt"), &table)?;
    let results = json!({
        "label": label,
        "test_precision": rep.counts.precision(),
        "test_recall": rep.counts.recall(),
        "test_f": rep.counts.f_measure(),
        "test_loss": rep.loss,
        "best_epoch": outcome.best_epoch,
        "best_val_f": outcome.best_val_f,
        "adam_steps": outcome.adam_steps,
        "epochs_ran": outcome.history.len() / 2,
    });
    metricsio::write_run_meta(
        &out.join("run.json"),
        &RunMeta {
            command: String::from("train-cls"),
            version: metricsio::version_string(),
            seed: r.seed,
            config: config_json(&r, &cfg, data, &[]),
            results: results.clone(),
        },
    )?;
    print!("{table}");
    println!("test F {:.4} (best val F {:.4} at epoch {})", rep.counts.f_measure(), outcome.best_val_f, outcome.best_epoch);

    if let Some(bl) = baseline {
        let meta = metricsio::read_run_meta(&bl.join("run.json"))?;
        let bf = meta["results"]["test_f"].as_f64().ok_or_else(|| {
            cuecan_cli::errors::data_err(&bl.join("run.json"), "baseline lacks results.test_f")
        })?;
        let bl_label = meta["results"]["label"].as_str().unwrap_or("baseline");
        let cmp = report::comparison_table(bl_label, bf, &label, rep.counts.f_measure());
        write_text(&out.join("comparison.txt"), &cmp)?;
        print!("{cmp}");
    }
    Ok(())
}

fn cmd_train_seg(
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    cuecan: Option<&String>,
    init: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, cuecan, seed)?;
    let (train, val, test) = import_and_split(data, r.seed)?;
    let cfg = train_config(&r, |c, lr| c.lr_segmenter = lr);

    let expect = cuecan.map(|s| parse_cuecan(s)).transpose()?;
    let mut model = match init {
        Some(ckpt) => checkpoint::segmenter_from_checkpoint(ckpt, expect.as_ref(), r.seed)?,
        None => {
            let config = match expect {
                Some(c) => c,
                None => parse_cuecan(&r.cuecan)?,
            };
            Segmenter::new(&config, r.seed)
        }
    };

    let seg_train = segmentation_corpus(&train);
    let seg_val = segmentation_corpus(&val);
    let seg_test = segmentation_corpus(&test);
    let outcome = train_segmenter(&mut model, &seg_train, &seg_val, &cfg).lift()?;
    let rep = eval_segmenter(&model, &seg_test, &cfg, r.tau, r.iou_min).lift()?;

    ensure_dir(out)?;
    metricsio::write_metrics(&out.join("metrics.jsonl"), &outcome.history)?;
    checkpoint::save_segmenter(&out.join("model.ckpt"), &model)?;
    let table = report::localization_table(&rep);
    write_text(&out.join("report.txt"), &table)?;
    let config_str = model.encoder.config().render();
    metricsio::write_run_meta(
        &out.join("run.json"),
        &RunMeta {
            command: String::from("train-seg"),
            version: metricsio::version_string(),
            seed: r.seed,
            config: config_json(&r, &cfg, data, &[("cuecan", json!(config_str)), ("init", json!(init.map(|p| p.display().to_string())))]),
            results: json!({
                "pixel_f": rep.pixel.f_measure(),
                "recall_raw": rep.recall_raw,
                "recall_rect": rep.recall_rect,
                "best_epoch": outcome.best_epoch,
                "best_val_f": outcome.best_val_f,
                "adam_steps": outcome.adam_steps,
            }),
        },
    )?;
    print!("{table}");
    Ok(())
}

fn cmd_eval_cls(
    data: &Path,
    model: &Path,
    seed: Option<u64>,
    which: &str,
    out: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, None, seed)?;
    let model = checkpoint::load_classifier(model, None)?;
    let scenes = pick_split(which, import_and_split(data, r.seed)?)?;
    let rep = eval_classifier(&model, &scenes, r.batch).lift()?;
    let label = format!("cuecan-{}", model.encoder.config().render());
    let table = report::classification_table(&[(label, &rep)]);
    print!("{table}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join("report.txt"), &table)?;
        metricsio::write_run_meta(
            &dir.join("eval.json"),
            &RunMeta {
                command: String::from("eval-cls"),
                version: metricsio::version_string(),
                seed: r.seed,
                config: json!({"split": which, "data": data.display().to_string()}),
                results: json!({
                    "precision": rep.counts.precision(),
                    "recall": rep.counts.recall(),
                    "f": rep.counts.f_measure(),
                    "loss": rep.loss,
                }),
            },
        )?;
    }
    Ok(())
}

fn cmd_eval_seg(
    data: &Path,
    model: &Path,
    seed: Option<u64>,
    which: &str,
    out: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, None, seed)?;
    let model = checkpoint::load_segmenter(model, None)?;
    let scenes = segmentation_corpus(&pick_split(which, import_and_split(data, r.seed)?)?);
    if scenes.is_empty() {
        return Err(cuecan_cli::errors::data_err(data, "split holds no segmentation scenes"));
    }
    let cfg = TrainConfig { batch_size: r.batch, ..TrainConfig::default() };
    let rep = eval_segmenter(&model, &scenes, &cfg, r.tau, r.iou_min).lift()?;
    let table = report::localization_table(&rep);
    print!("{table}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join("report.txt"), &table)?;
        metricsio::write_run_meta(
            &dir.join("eval.json"),
            &RunMeta {
                command: String::from("eval-seg"),
                version: metricsio::version_string(),
                seed: r.seed,
                config: json!({
                    "split": which,
                    "data": data.display().to_string(),
                    "tau": r.tau,
                    "iou_min": r.iou_min,
                }),
                results: json!({
                    "pixel_f": rep.pixel.f_measure(),
                    "recall_raw": rep.recall_raw,
                    "recall_rect": rep.recall_rect,
                }),
            },
        )?;
    }
    Ok(())
}

fn cmd_postprocess(
    data: &Path,
    model: &Path,
    seed: Option<u64>,
    which: &str,
    out: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, None, seed)?;
    let model = checkpoint::load_segmenter(model, None)?;
    let scenes = pick_split(which, import_and_split(data, r.seed)?)?;
    let mut lines = String::new();
    for scene in &scenes {
        let map = predict_map(&model, &scene.image)?;
        let regions = regions_from_map(&map, r.tau)?;
        let line = json!({
            "index": scene.scene_index,
            "boxes": regions.iter().map(|rg| blob_to_arr(&rg.blob)).collect::<Vec<_>>(),
            "features": regions.iter().map(|rg| rg.features).collect::<Vec<_>>(),
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    match out {
        Some(path) => write_text(path, &lines)?,
        None => print!("{lines}"),
    }
    Ok(())
}

/// Region datasets for the forest: features plus hit-the-truth labels.
fn region_dataset(
    model: &Segmenter,
    scenes: &[SyntheticScene],
    tau: f64,
    iou_min: f64,
) -> CliResult<(Vec<[f64; 6]>, Vec<bool>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for scene in scenes {
        let map = predict_map(model, &scene.image)?;
        for region in regions_from_map(&map, tau)? {
            ys.push(region_label(&region, scene.missing_box.as_ref(), iou_min));
            xs.push(region.features);
        }
    }
    Ok((xs, ys))
}

fn cmd_train_rf(
    data: &Path,
    model: &Path,
    out: &Path,
    seed: Option<u64>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, None, seed)?;
    let model = checkpoint::load_segmenter(model, None)?;
    let (train, val, _) = import_and_split(data, r.seed)?;
    let (xs, ys) = region_dataset(&model, &segmentation_corpus(&train), r.tau, r.iou_min)?;
    if xs.is_empty() {
        return Err(cuecan_cli::errors::data_err(
            data,
            "the segmenter predicts no regions on the train split; nothing to learn from",
        ));
    }
    let hyper = ForestHyper {
        n_trees: r.trees,
        max_depth: r.depth,
        seed: r.seed,
        ..ForestHyper::default()
    };
    let (forest, oob) = forest_train(&xs, &ys, &hyper).lift()?;
    save_forest(out, &forest, oob.ensemble)?;
    println!(
        "forest: {} trees on {} regions ({} positive), OOB error {}",
        forest.trees.len(),
        xs.len(),
        ys.iter().filter(|&&y| y).count(),
        oob.ensemble.map_or(String::from("n/a"), |e| format!("{e:.4}")),
    );
    let (vx, vy) = region_dataset(&model, &segmentation_corpus(&val), r.tau, r.iou_min)?;
    if !vx.is_empty() {
        let correct = vx
            .iter()
            .zip(&vy)
            .filter(|(x, y)| forest_predict(&forest, x).0 == **y)
            .count();
        println!("val region accuracy: {:.4} ({} regions)", correct as f64 / vx.len() as f64, vx.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval_video(
    data: &Path,
    model: &Path,
    rf: &Path,
    seed: Option<u64>,
    intervals: usize,
    frames: usize,
    out: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, None, seed)?;
    let model = checkpoint::load_segmenter(model, None)?;
    let (forest, _) = load_forest(rf)?;
    let (_, _, test) = import_and_split(data, r.seed)?;
    let ivs = build_intervals(&test, intervals, frames, r.seed)?;

    // scene-level results are cached: intervals resample the same frames
    let mut cache: Vec<Option<(Vec<[usize; 4]>, Vec<bool>, bool)>> = vec![None; test.len()];
    let mut lines = String::new();
    let mut predictions = Vec::with_capacity(ivs.len());
    let mut truths = Vec::with_capacity(ivs.len());
    for iv in &ivs {
        let mut flags = Vec::with_capacity(iv.frames.len());
        for &si in &iv.frames {
            if cache[si].is_none() {
                let map = predict_map(&model, &test[si].image)?;
                let regions: Vec<Region> = regions_from_map(&map, r.tau)?;
                let verdicts: Vec<bool> =
                    regions.iter().map(|rg| forest_predict(&forest, &rg.features).0).collect();
                let boxes: Vec<[usize; 4]> = regions.iter().map(|rg| blob_to_arr(&rg.blob)).collect();
                let flagged = frame_verdict(&verdicts);
                cache[si] = Some((boxes, verdicts, flagged));
            }
            flags.push(cache[si].as_ref().expect("just filled").2);
        }
        let decision = video_decide(iv.interval_id, &flags).lift()?;
        for (k, &si) in iv.frames.iter().enumerate() {
            let (boxes, verdicts, _) = cache[si].as_ref().expect("cached");
            let line = cuecan_cli::pipeline::FrameLine {
                frame: k,
                boxes,
                verdicts,
                interval_id: iv.interval_id,
                final_missing: decision.final_missing,
            };
            lines.push_str(&serde_json::to_string(&line).expect("frame line serializes"));
            lines.push('\n');
        }
        predictions.push(decision.final_missing);
        truths.push(iv.missing);
    }
    let counts = eval_video(&predictions, &truths).lift()?;
    let table = report::video_table(&counts, ivs.len());
    print!("{table}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join("decisions.jsonl"), &lines)?;
        metricsio::write_run_meta(
            &dir.join("video.json"),
            &RunMeta {
                command: String::from("eval-video"),
                version: metricsio::version_string(),
                seed: r.seed,
                config: json!({
                    "data": data.display().to_string(),
                    "intervals": intervals,
                    "frames": frames,
                    "tau": r.tau,
                }),
                results: json!({
                    "precision": counts.precision(),
                    "recall": counts.recall(),
                    "f": counts.f_measure(),
                }),
            },
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gradcam(
    model_path: &Path,
    image_path: &Path,
    block: usize,
    target: &str,
    pixel: &str,
    out: &Path,
    heat: Option<&Path>,
    opts: &CommonOpts,
) -> CliResult<()> {
    let r = resolve(opts, None, None)?;
    if !(1..=5).contains(&block) {
        return Err(usage("--block must lie in 1..=5"));
    }
    let image = netpbm::read_ppm(image_path)?;
    let d = image.dims();
    let cam = match target {
        "cls" => {
            let model = checkpoint::load_classifier(model_path, None)?;
            model.grad_cam(&image, block, 0).lift()?
        }
        "seg" => {
            let model = checkpoint::load_segmenter(model_path, None)?;
            let (x, y) = match pixel {
                "auto" => {
                    let map = predict_map(&model, &image)?;
                    let regions = regions_from_map(&map, r.tau)?;
                    let Some(top) = regions.first() else {
                        return Err(cuecan_cli::errors::data_err(
                            image_path,
                            "no predicted region to aim at; pass --pixel x,y",
                        ));
                    };
                    (top.blob.x + top.blob.w / 2, top.blob.y + top.blob.h / 2)
                }
                coords => {
                    let (xs, ys) = coords
                        .split_once(',')
                        .ok_or_else(|| usage("--pixel wants 'auto' or 'x,y'"))?;
                    let x: usize =
                        xs.trim().parse().map_err(|_| usage("bad x in --pixel"))?;
                    let y: usize =
                        ys.trim().parse().map_err(|_| usage("bad y in --pixel"))?;
                    if x >= d.w || y >= d.h {
                        return Err(usage(format!("--pixel {x},{y} outside {}x{}", d.w, d.h)));
                    }
                    (x, y)
                }
            };
            println!("target pixel: {x},{y}");
            let model = checkpoint::load_segmenter(model_path, None)?;
            model.grad_cam(&image, block, 0, y, x).lift()?
        }
        other => return Err(usage(format!("unknown --target '{other}' (cls|seg)"))),
    };

    let cam_full = bilinear_upsample_fwd(&cam, d.h, d.w).lift()?;
    let heat_bytes: Vec<u8> =
        cam_full.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    // overlay: red channel blended halfway toward the heat map
    let mut overlay = image.clone();
    for yy in 0..d.h {
        for xx in 0..d.w {
            let h = cam_full.at(0, yy, xx, 0).clamp(0.0, 1.0);
            let red = overlay.at(0, yy, xx, 0);
            overlay.set(0, yy, xx, 0, 0.5 * red + 0.5 * h);
        }
    }
    netpbm::write_ppm(out, &overlay)?;
    if let Some(hp) = heat {
        netpbm::write_pgm(hp, &heat_bytes, d.h, d.w)?;
    }
    println!("wrote overlay to {}", out.display());
    Ok(())
}

fn cmd_selftest(seed: u64, out: Option<&Path>) -> CliResult<()> {
    let grad = run_gradient_suite(seed, 20).lift()?;
    let oracle = run_oracle_suite(seed, 100).lift()?;
    let mut text = String::new();
    for line in grad.lines().iter().chain(oracle.lines().iter()) {
        text.push_str(line);
        text.push('\n');
    }
    let ok = grad.pass() && oracle.pass();
    text.push_str(if ok { "selftest: PASS\n" } else { "selftest: FAIL\n" });
    print!("{text}");
    if let Some(path) = out {
        write_text(path, &text)?;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Invariant(String::from("selftest found failing cases")))
    }
}
