//! Precision, recall, and F-measure with the zero-denominator conventions
//! of the evaluation contract, plus axis-aligned box IoU.

use crate::blob::Blob;

/// Running TP/FP/FN tally. All three rates return 0 on a zero denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrfCounts {
    pub tp: u64,
    pub fp: u64,
    pub fneg: u64,
}

impl PrfCounts {
    pub fn new() -> PrfCounts {
        PrfCounts::default()
    }

    pub fn merge(&mut self, other: PrfCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fneg += other.fneg;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fneg)
    }

    pub fn f_measure(&self) -> f64 {
        f_from_pr(self.precision(), self.recall())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F = 2PR/(P+R), 0 when P+R is 0. Scale-free, so percent inputs give a
/// percent result.
pub fn f_from_pr(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Threshold scores against binary labels. A score strictly above `thresh`
/// predicts positive; labels are positive when above 0.5.
pub fn classification_counts(scores: &[f64], labels: &[f64], thresh: f64) -> PrfCounts {
    let mut c = PrfCounts::new();
    for (s, y) in scores.iter().zip(labels) {
        let pred = *s > thresh;
        let pos = *y > 0.5;
        match (pred, pos) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fneg += 1,
            (false, false) => {}
        }
    }
    c
}

/// Intersection over union of two pixel-grid boxes.
pub fn box_iou(a: &Blob, b: &Blob) -> f64 {
    let ix0 = a.x.max(b.x);
    let iy0 = a.y.max(b.y);
    let ix1 = (a.x + a.w).min(b.x + b.w);
    let iy1 = (a.y + a.h).min(b.y + b.h);
    if ix1 <= ix0 || iy1 <= iy0 {
        return 0.0;
    }
    let inter = ((ix1 - ix0) * (iy1 - iy0)) as f64;
    let union = (a.w * a.h + b.w * b.h) as f64 - inter;
    inter / union
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(x: usize, y: usize, w: usize, h: usize) -> Blob {
        Blob { x, y, w, h, area: w * h }
    }

    #[test]
    fn zero_denominators_read_zero() {
        let c = PrfCounts::new();
        assert_eq!(c.precision(), 0.0);
        assert_eq!(c.recall(), 0.0);
        assert_eq!(c.f_measure(), 0.0);
        let only_fn = PrfCounts { tp: 0, fp: 0, fneg: 3 };
        assert_eq!(only_fn.precision(), 0.0);
        assert_eq!(only_fn.recall(), 0.0);
        assert_eq!(only_fn.f_measure(), 0.0);
    }

    #[test]
    fn perfect_counts_read_one() {
        let c = PrfCounts { tp: 10, fp: 0, fneg: 0 };
        assert_eq!(c.precision(), 1.0);
        assert_eq!(c.recall(), 1.0);
        assert_eq!(c.f_measure(), 1.0);
    }

    #[test]
    fn mixed_counts_match_hand_arithmetic() {
        let c = PrfCounts { tp: 6, fp: 2, fneg: 4 };
        assert!((c.precision() - 0.75).abs() < 1e-15);
        assert!((c.recall() - 0.6).abs() < 1e-15);
        assert!((c.f_measure() - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
    }

    #[test]
    fn table_iii_f_rows_reproduce() {
        let rows = [
            (94.77, 87.45, 90.96),
            (94.87, 93.96, 94.41),
            (95.30, 92.20, 93.72),
            (92.48, 90.99, 91.73),
            (96.05, 94.49, 95.26),
            (97.96, 93.22, 95.53),
        ];
        for (p, r, f) in rows {
            assert!((f_from_pr(p, r) - f).abs() <= 0.01, "({p},{r}) -> {}", f_from_pr(p, r));
        }
    }

    #[test]
    fn table_v_f_rows_reproduce() {
        assert!((f_from_pr(37.50, 50.0) - 42.857).abs() <= 0.01);
        assert!((f_from_pr(59.0, 60.0) - 59.4957).abs() <= 0.01);
    }

    #[test]
    fn classification_counting() {
        let scores = [0.9, 0.2, 0.6, 0.4, 0.5];
        let labels = [1.0, 1.0, 0.0, 0.0, 1.0];
        // thresh 0.5 strict: preds are [1,0,1,0,0]
        let c = classification_counts(&scores, &labels, 0.5);
        assert_eq!(c, PrfCounts { tp: 1, fp: 1, fneg: 2 });
    }

    #[test]
    fn iou_hand_cases() {
        let a = blob(0, 0, 2, 2);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &blob(5, 5, 2, 2)), 0.0);
        assert_eq!(box_iou(&a, &blob(2, 0, 2, 2)), 0.0, "touching edges do not overlap");
        let third = box_iou(&a, &blob(1, 0, 2, 2));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
    }
}
