//! Segmentation quality: pixel confusion counts, precision/recall/F against
//! ground truth, and the unsupervised Q measure.

mod eval;
mod quality;

pub use eval::{evaluate_dir, write_report_csv, DirReport, ImageReport};
pub use quality::{q_measure, q_measure_with, QConfig};

use serde::Serialize;

use crate::error::{Error, Result};

/// Pixel counts with crack as the positive class.
#[derive(Clone, Copy, PartialEq, Eq, Default, Debug, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `tp / (tp + fp)`, or 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 0 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        f_score(self).f_score
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// `None` when a class is empty in the segmentation.
    pub q_value: Option<f64>,
}

/// Precision, recall and their harmonic mean; `q_value` is left empty.
pub fn f_score(c: &ConfusionCounts) -> EvalReport {
    let (p, r) = (c.precision(), c.recall());
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    EvalReport {
        precision: p,
        recall: r,
        f_score: f,
        q_value: None,
    }
}

fn check_binary(plane: &[u8], what: &str) -> Result<()> {
    match plane.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::Config(format!("{what} is not binary: value {} at pixel {i}", plane[i]))),
        None => Ok(()),
    }
}

pub fn confusion(pred: &[u8], gt: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "prediction has {} pixels, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    check_binary(pred, "prediction")?;
    check_binary(gt, "ground truth")?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}
