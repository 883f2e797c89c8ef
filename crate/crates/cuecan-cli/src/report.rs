//! Human-readable result tables mirroring the paper's layout: percentage
//! Precision / Recall / F-Score columns, plus the baseline-vs-CueCAn
//! comparison with an explicit flag when the expected direction inverts.

use cuecan_core::metrics::PrfCounts;
use cuecan_core::train::{ClsReport, SegReport};
use std::fmt::Write as _;

fn pct(v: f64) -> String {
    format!("{:6.2}", v * 100.0)
}

pub fn classification_table(rows: &[(String, &ClsReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>7} {:>7} {:>7}", "Model", "Prec", "Recall", "F-Score");
    for (label, rep) in rows {
        let c = &rep.counts;
        let _ = writeln!(
            out,
            "{:<24} {} {} {}",
            label,
            pct(c.precision()),
            pct(c.recall()),
            pct(c.f_measure())
        );
        for (tag, cc) in &rep.per_cue {
            let _ = writeln!(
                out,
                "  {:<22} {} {} {}",
                format!("cue={tag}"),
                pct(cc.precision()),
                pct(cc.recall()),
                pct(cc.f_measure())
            );
        }
    }
    out
}

/// Baseline-vs-CueCAn comparison. The direction (CueCAn F >= baseline F) is
/// a soft expectation; an inversion is flagged, never hidden.
pub fn comparison_table(
    baseline_label: &str,
    baseline_f: f64,
    cuecan_label: &str,
    cuecan_f: f64,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>7}", "Model", "F-Score");
    let _ = writeln!(out, "{:<24} {}", baseline_label, pct(baseline_f));
    let _ = writeln!(out, "{:<24} {}", cuecan_label, pct(cuecan_f));
    if cuecan_f >= baseline_f {
        let _ = writeln!(
            out,
            "direction: CueCAn F >= baseline F holds (+{:.2} points)",
            (cuecan_f - baseline_f) * 100.0
        );
    } else {
        let _ = writeln!(
            out,
            "direction: INVERTED — baseline F exceeds CueCAn F by {:.2} points",
            (baseline_f - cuecan_f) * 100.0
        );
    }
    out
}

/// Localization table in the Table IV spirit: raw masks vs rectangles.
pub fn localization_table(rep: &SegReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>7}", "Variant", "Recall");
    let fmt = |r: Option<f64>| r.map_or(String::from("     -"), pct);
    let _ = writeln!(out, "{:<24} {}", "raw masks", fmt(rep.recall_raw));
    let _ = writeln!(out, "{:<24} {}", "rectangles (CueCAn-P)", fmt(rep.recall_rect));
    let _ = writeln!(
        out,
        "pixel P/R/F: {} {} {}",
        pct(rep.pixel.precision()),
        pct(rep.pixel.recall()),
        pct(rep.pixel.f_measure())
    );
    out
}

/// Video-interval table in the Table V spirit.
pub fn video_table(counts: &PrfCounts, intervals: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "intervals: {intervals}");
    let _ = writeln!(out, "{:>7} {:>7} {:>7}", "Prec", "Recall", "F-Score");
    let _ = writeln!(
        out,
        "{} {} {}",
        pct(counts.precision()),
        pct(counts.recall()),
        pct(counts.f_measure())
    );
    out
}
