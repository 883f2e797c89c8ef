//! Video-interval recognition: a frame is flagged when any of its regions is
//! classified missing, and an interval is declared missing when flagged
//! frames outnumber the rest. An exact tie falls to not-missing, trading
//! recall for precision.

use alloc::vec::Vec;

use crate::error::{arg_err, CoreResult};
use crate::metrics::PrfCounts;

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDecision {
    pub interval_id: u64,
    pub frame_missing: Vec<bool>,
    pub missing_frames: usize,
    pub final_missing: bool,
}

/// A frame carries a missing verdict when at least one region does.
pub fn frame_verdict(region_verdicts: &[bool]) -> bool {
    region_verdicts.iter().any(|&v| v)
}

pub fn video_decide(interval_id: u64, frame_verdicts: &[bool]) -> CoreResult<IntervalDecision> {
    if frame_verdicts.is_empty() {
        return arg_err("video_decide", "interval has no frames");
    }
    let missing_frames = frame_verdicts.iter().filter(|&&v| v).count();
    Ok(IntervalDecision {
        interval_id,
        frame_missing: frame_verdicts.to_vec(),
        missing_frames,
        final_missing: 2 * missing_frames > frame_verdicts.len(),
    })
}

/// Interval-level counts with missing as the positive class.
pub fn eval_video(predicted: &[bool], truth: &[bool]) -> CoreResult<PrfCounts> {
    if predicted.len() != truth.len() {
        return arg_err("eval_video", "prediction and truth differ in length");
    }
    let mut counts = PrfCounts::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fneg += 1,
            (false, false) => {}
        }
    }
    Ok(counts)
}
