use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest voxel counts for one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &[bool], reference: &[bool]) -> Result<Self> {
        if pred.len() != reference.len() {
            return Err(Error::InvalidVolume(format!(
                "prediction has {} voxels, reference {}",
                pred.len(),
                reference.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &r) in pred.iter().zip(reference) {
            match (p, r) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn pred_count(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn ref_count(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Neither mask contains the class.
    pub fn both_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    /// `num / den`, with a zero denominator scored 1 when the class is absent
    /// from both masks and 0 otherwise.
    fn rate(&self, num: u64, den: u64) -> f64 {
        if den == 0 {
            if self.both_empty() {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.rate(self.tp + self.tn, self.total())
    }

    pub fn recall(&self) -> f64 {
        self.rate(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        self.rate(self.tn, self.tn + self.fp)
    }

    pub fn precision(&self) -> f64 {
        self.rate(self.tp, self.tp + self.fp)
    }
}

/// Counts for `class` treated one-vs-rest over label maps.
pub fn confusion(pred: &[u8], reference: &[u8], class: u8) -> Result<ConfusionCounts> {
    let p: Vec<bool> = pred.iter().map(|&v| v == class).collect();
    let r: Vec<bool> = reference.iter().map(|&v| v == class).collect();
    ConfusionCounts::from_masks(&p, &r)
}

/// `2tp / (2tp + fp + fn)`; 1 when both masks are empty.
pub fn dice(c: &ConfusionCounts) -> f64 {
    if c.both_empty() {
        1.0
    } else {
        2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64
    }
}

/// `tp / (tp + fp + fn)`; 1 when both masks are empty.
pub fn iou(c: &ConfusionCounts) -> f64 {
    if c.both_empty() {
        1.0
    } else {
        c.tp as f64 / (c.tp + c.fp + c.fn_) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_4x4() {
        #[rustfmt::skip]
        let pred = [
            0, 1, 1, 0,
            0, 1, 1, 0,
            0, 0, 2, 0,
            0, 0, 0, 0,
        ];
        #[rustfmt::skip]
        let reference = [
            0, 0, 1, 0,
            0, 1, 1, 1,
            0, 0, 0, 0,
            2, 0, 0, 0,
        ];
        let c = confusion(&pred, &reference, 1).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 11 });
        let c = confusion(&pred, &reference, 2).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 1, fn_: 1, tn: 14 });
    }

    #[test]
    fn identical_and_empty_prediction() {
        let r = [0u8, 1, 1, 0, 1];
        let c = confusion(&r, &r, 1).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = confusion(&[0; 5], &r, 1).unwrap();
        assert_eq!((c.tp, c.fn_), (0, 3));
        assert!(confusion(&[0; 4], &r, 1).is_err());
    }

    #[test]
    fn overlap_arithmetic() {
        let c = ConfusionCounts { tp: 2, fp: 2, fn_: 0, tn: 10 };
        assert!((dice(&c) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&c), 0.5);
        let disjoint = ConfusionCounts { tp: 0, fp: 3, fn_: 2, tn: 5 };
        assert_eq!((dice(&disjoint), iou(&disjoint)), (0.0, 0.0));
        let empty = ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 9 };
        assert_eq!((dice(&empty), iou(&empty)), (1.0, 1.0));
        assert_eq!((empty.recall(), empty.precision()), (1.0, 1.0));
    }
}
