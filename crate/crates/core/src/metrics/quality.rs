use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct QConfig {
    /// Base of the logarithm applied to class areas.
    pub log_base: f64,
    pub num_classes: usize,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            log_base: 10.0,
            num_classes: 2,
        }
    }
}

/// Q with base-10 logarithm over the two label classes. Smaller is better.
pub fn q_measure(original: &[f64], labels: &[u8]) -> Result<f64> {
    q_measure_with(original, labels, &QConfig::default())
}

/// `original` holds intensities on the [0, 255] scale and `labels` class ids
/// in `0..num_classes`.
pub fn q_measure_with(original: &[f64], labels: &[u8], cfg: &QConfig) -> Result<f64> {
    if original.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} intensities for {} labels",
            original.len(),
            labels.len()
        )));
    }
    if !(cfg.log_base > 1.0) || cfg.num_classes == 0 {
        return Err(Error::Config(format!(
            "invalid Q settings: log base {}, {} classes",
            cfg.log_base, cfg.num_classes
        )));
    }
    let k = cfg.num_classes;
    let mut area = vec![0u64; k];
    let mut sum = vec![0.0f64; k];
    for (&v, &l) in original.iter().zip(labels) {
        let l = l as usize;
        if l >= k {
            return Err(Error::Config(format!("label {l} outside 0..{k}")));
        }
        area[l] += 1;
        sum[l] += v;
    }
    if let Some(empty) = area.iter().position(|&a| a == 0) {
        return Err(Error::DegenerateInput(format!("class {empty} has no pixels")));
    }
    let mean: Vec<f64> = sum.iter().zip(&area).map(|(s, &a)| s / a as f64).collect();
    let mut err2 = vec![0.0f64; k];
    for (&v, &l) in original.iter().zip(labels) {
        err2[l as usize] += (v - mean[l as usize]).powi(2);
    }
    let total: f64 = (0..k)
        .map(|n| {
            let a = area[n] as f64;
            let same = area.iter().filter(|&&b| b == area[n]).count() as f64;
            err2[n] / (1.0 + a.log(cfg.log_base)) + (same / a).powi(2)
        })
        .sum();
    Ok((k as f64).sqrt() * total / (10_000.0 * original.len() as f64))
}
