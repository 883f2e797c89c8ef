//! Run artifacts: metrics.jsonl (one line per epoch and split, no
//! timestamps, byte-stable across reruns) and run.json (resolved config,
//! seed, version string, final results).

use std::path::Path;

use cuecan_core::train::EpochRecord;
use serde::Serialize;
use serde_json::Value;

use crate::errors::{io_err, CliResult};

pub fn version_string() -> String {
    format!("cuecan {} ({})", env!("CARGO_PKG_VERSION"), env!("CUECAN_GIT_DESCRIBE"))
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    epoch: usize,
    split: &'a str,
    loss: f64,
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "F")]
    f: f64,
    recall: Option<f64>,
}

pub fn render_metrics(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for rec in history {
        let line = MetricsLine {
            epoch: rec.epoch,
            split: rec.split,
            loss: rec.loss,
            p: rec.precision,
            r: rec.recall,
            f: rec.f,
            recall: rec.region_recall,
        };
        out.push_str(&serde_json::to_string(&line).expect("metrics serialize"));
        out.push('\n');
    }
    out
}

pub fn write_metrics(path: &Path, history: &[EpochRecord]) -> CliResult<()> {
    std::fs::write(path, render_metrics(history)).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
pub struct RunMeta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub results: Value,
}

pub fn write_run_meta(path: &Path, meta: &RunMeta) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(meta).expect("run meta serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_run_meta(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| crate::errors::parse_err(path, e.column().saturating_sub(1), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_lines_have_the_documented_fields_and_no_timestamps() {
        let history = vec![
            EpochRecord {
                epoch: 1,
                split: "train",
                loss: 0.5,
                precision: 0.75,
                recall: 0.5,
                f: 0.6,
                region_recall: None,
            },
            EpochRecord {
                epoch: 1,
                split: "val",
                loss: 0.25,
                precision: 1.0,
                recall: 1.0,
                f: 1.0,
                region_recall: Some(0.5),
            },
        ];
        let text = render_metrics(&history);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            r#"{"epoch":1,"split":"train","loss":0.5,"P":0.75,"R":0.5,"F":0.6,"recall":null}"#
        );
        assert_eq!(
            lines[1],
            r#"{"epoch":1,"split":"val","loss":0.25,"P":1.0,"R":1.0,"F":1.0,"recall":0.5}"#
        );
        // byte-stable across calls
        assert_eq!(text, render_metrics(&history));
    }

    #[test]
    fn run_meta_roundtrips_through_json() {
        let dir = std::env::temp_dir().join("cuecan-metricsio-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("run.json");
        let meta = RunMeta {
            command: String::from("train-cls"),
            version: version_string(),
            seed: 7,
            config: serde_json::json!({"epochs": 3, "cuecan": "333"}),
            results: serde_json::json!({"test_f": 1.0}),
        };
        write_run_meta(&p, &meta).unwrap();
        let v = read_run_meta(&p).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["config"]["cuecan"], "333");
        assert_eq!(v["results"]["test_f"], 1.0);
        assert!(v["version"].as_str().unwrap().starts_with("cuecan "));
    }
}
