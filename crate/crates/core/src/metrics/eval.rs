use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{confusion, f_score, q_measure, ConfusionCounts, EvalReport};
use crate::data::{pair_stems, read_gray, read_mask};
use crate::error::{io_err, Error, Result};

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct ImageReport {
    pub stem: String,
    pub counts: ConfusionCounts,
    pub report: EvalReport,
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct DirReport {
    pub images: Vec<ImageReport>,
    /// F from summed counts, Q as the mean over images where it is defined.
    pub aggregate: EvalReport,
    pub counts: ConfusionCounts,
}

fn evaluate_one(stem: &str, paths: &[PathBuf]) -> Result<ImageReport> {
    let pred = read_mask(&paths[0])?;
    let gt = read_mask(&paths[1])?;
    let (h, w, original) = read_gray(&paths[2])?;
    let shapes = [pred.shape(), gt.shape()];
    if shapes.iter().any(|s| (s.h, s.w) != (h, w)) {
        return Err(Error::Shape(format!(
            "`{stem}`: prediction {}, ground truth {}, original {h}x{w}",
            shapes[0], shapes[1]
        )));
    }
    let counts = confusion(pred.data(), gt.data())?;
    let intensities: Vec<f64> = original.iter().map(|&v| v as f64).collect();
    let q = match q_measure(&intensities, pred.data()) {
        Ok(q) => Some(q),
        Err(Error::DegenerateInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ImageReport {
        stem: stem.to_string(),
        counts,
        report: EvalReport { q_value: q, ..f_score(&counts) },
    })
}

/// Scores every prediction mask against its ground truth and original image,
/// matched by stem.
pub fn evaluate_dir(pred_dir: &Path, gt_dir: &Path, original_dir: &Path) -> Result<DirReport> {
    let pairs = pair_stems(&[pred_dir, gt_dir, original_dir])?;
    let images: Vec<ImageReport> = pairs
        .par_iter()
        .map(|(stem, paths)| evaluate_one(stem, paths))
        .collect::<Result<_>>()?;
    let counts = images.iter().fold(ConfusionCounts::default(), |acc, r| acc + r.counts);
    let qs: Vec<f64> = images.iter().filter_map(|r| r.report.q_value).collect();
    let q = (!qs.is_empty()).then(|| qs.iter().sum::<f64>() / qs.len() as f64);
    Ok(DirReport {
        images,
        aggregate: EvalReport { q_value: q, ..f_score(&counts) },
        counts,
    })
}

/// Per-image rows `stem,precision,recall,f,q` followed by an `aggregate` row.
pub fn write_report_csv(report: &DirReport, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(["stem", "precision", "recall", "f", "q"])?;
        let rows = report
            .images
            .iter()
            .map(|r| (r.stem.as_str(), &r.report))
            .chain(std::iter::once(("aggregate", &report.aggregate)));
        for (stem, r) in rows {
            let q = r.q_value.map(|q| q.to_string()).unwrap_or_default();
            w.write_record([stem, &r.precision.to_string(), &r.recall.to_string(), &r.f_score.to_string(), &q])?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_gray_png;

    fn setup(n: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for d in ["pred", "gt", "orig"] {
            fs::create_dir(dir.path().join(d)).unwrap();
        }
        for i in 0..n {
            let mask: Vec<u8> = (0..64).map(|p| if p % 7 == i % 7 { 255 } else { 0 }).collect();
            let orig: Vec<u8> = (0..64).map(|p| (p * 3 + i) as u8).collect();
            for (d, px) in [("pred", &mask), ("gt", &mask), ("orig", &orig)] {
                write_gray_png(&dir.path().join(d).join(format!("im{i}.png")), 8, 8, px).unwrap();
            }
        }
        dir
    }

    #[test]
    fn perfect_predictions_score_one() {
        let dir = setup(3);
        let p = |d: &str| dir.path().join(d);
        let r = evaluate_dir(&p("pred"), &p("gt"), &p("orig")).unwrap();
        assert_eq!(r.images.len(), 3);
        assert_eq!(r.aggregate.f_score, 1.0);
        let csv_path = dir.path().join("m.csv");
        write_report_csv(&r, &csv_path).unwrap();
        let text = fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "stem,precision,recall,f,q");
        assert!(lines[1].starts_with("im0,1,1,1,"));
        assert!(lines[4].starts_with("aggregate,1,1,1,"));
    }

    #[test]
    fn single_image_aggregate_equals_image() {
        let dir = setup(1);
        let p = |d: &str| dir.path().join(d);
        let r = evaluate_dir(&p("pred"), &p("gt"), &p("orig")).unwrap();
        assert_eq!(r.aggregate, r.images[0].report);
    }

    #[test]
    fn missing_original_is_pairing_error() {
        let dir = setup(2);
        fs::remove_file(dir.path().join("orig/im1.png")).unwrap();
        let p = |d: &str| dir.path().join(d);
        assert!(matches!(evaluate_dir(&p("pred"), &p("gt"), &p("orig")), Err(Error::Pairing { .. })));
    }
}
