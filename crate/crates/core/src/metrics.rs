//! Evaluation: range-image MAE, scene completion accuracy/completeness/F1, and
//! recasting statistics.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, WorldPointSet};
use crate::projection::SensorModel;
use crate::range_image::RangeImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Meters.
    pub depth_mae: f64,
    /// Raw remission units, 0–255.
    pub remission_mae: f64,
    pub valid_pixel_count: usize,
    pub coverage_fraction: f64,
}

impl MetricReport {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "depth_mae={:.6}", self.depth_mae).unwrap();
        writeln!(s, "remission_mae={:.6}", self.remission_mae).unwrap();
        writeln!(s, "valid_pixel_count={}", self.valid_pixel_count).unwrap();
        writeln!(s, "coverage_fraction={:.6}", self.coverage_fraction).unwrap();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

/// MAE over pixels valid in both images; coverage is `|both valid| / |gt valid|`.
pub fn mae(pred: &RangeImage, gt: &RangeImage, sensor: &SensorModel) -> Result<MetricReport> {
    mae_in_region(pred, gt, sensor, None)
}

/// [`mae`] restricted to pixels where `region` is true.
pub fn mae_in_region(
    pred: &RangeImage,
    gt: &RangeImage,
    sensor: &SensorModel,
    region: Option<&[bool]>,
) -> Result<MetricReport> {
    let (h, w) = gt.dims();
    pred.check_dims(h, w)?;
    if let Some(r) = region {
        if r.len() != h * w {
            return Err(Error::LengthMismatch {
                what: "evaluation region",
                left: r.len(),
                right: h * w,
            });
        }
    }
    let in_region = |i: usize| region.is_none_or(|r| r[i]);
    let mut depth_sum = 0.0;
    let mut rem_sum = 0.0;
    let mut both = 0usize;
    let mut gt_valid = 0usize;
    for i in (0..h * w).filter(|&i| in_region(i)) {
        if !gt.valid()[i] {
            continue;
        }
        gt_valid += 1;
        if !pred.valid()[i] {
            continue;
        }
        both += 1;
        let dp = sensor.denormalize_depth(pred.depth()[i] as f64);
        let dg = sensor.denormalize_depth(gt.depth()[i] as f64);
        depth_sum += (dp - dg).abs();
        rem_sum += 255.0 * (pred.remission()[i] as f64 - gt.remission()[i] as f64).abs();
    }
    if both == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(MetricReport {
        depth_mae: depth_sum / both as f64,
        remission_mae: rem_sum / both as f64,
        valid_pixel_count: both,
        coverage_fraction: both as f64 / gt_valid as f64,
    })
}

/// Recasting accuracy: errors on jointly valid pixels, coverage as the share of
/// ground-truth pixels that received a recast value.
pub fn recast_stats(recast_img: &RangeImage, gt_img: &RangeImage, sensor: &SensorModel) -> Result<MetricReport> {
    if recast_img.valid_count() == 0 {
        return Err(Error::Empty("recast image has no valid pixels"));
    }
    mae(recast_img, gt_img, sensor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionScore {
    pub accuracy: f64,
    pub completeness: f64,
    pub f1: f64,
    pub tau: f64,
}

impl CompletionScore {
    pub fn to_key_values(&self) -> String {
        format!(
            "accuracy={:.4}\ncompleteness={:.4}\nf1={:.4}\ntau={}\n",
            self.accuracy, self.completeness, self.f1, self.tau
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

/// Harmonic mean of two percentages; zero when both are zero.
pub fn f1_score(accuracy: f64, completeness: f64) -> f64 {
    if accuracy + completeness == 0.0 {
        0.0
    } else {
        2.0 * accuracy * completeness / (accuracy + completeness)
    }
}

/// Uniform hash grid answering exact "any point within `radius`" queries.
pub struct PointGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Point3], radius: f64) -> Self {
        let cell = radius.max(1e-6);
        let mut cells: HashMap<_, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, cells }
    }

    fn key(p: &Point3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Whether some indexed point lies within `radius` (inclusive) of `q`. `radius` must not
    /// exceed the radius the grid was built for.
    pub fn any_within(&self, q: &Point3, radius: f64) -> bool {
        let (cx, cy, cz) = Self::key(q, self.cell);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        if ids.iter().any(|&i| (self.points[i as usize] - q).norm_squared() <= r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

fn percent_covered(queries: &[Point3], reference: &[Point3], tau: f64) -> f64 {
    let grid = PointGrid::new(reference, tau);
    let hits = queries.iter().filter(|q| grid.any_within(q, tau)).count();
    100.0 * hits as f64 / queries.len() as f64
}

/// Accuracy: % of predicted points with a ground-truth point within `tau`.
/// Completeness: % of ground-truth points with a predicted point within `tau`.
pub fn completion_score(pred: &WorldPointSet, gt: &WorldPointSet, tau: f64) -> Result<CompletionScore> {
    if pred.is_empty() {
        return Err(Error::Empty("predicted point set"));
    }
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth point set"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let accuracy = percent_covered(&pred.points, &gt.points, tau);
    let completeness = percent_covered(&gt.points, &pred.points, tau);
    Ok(CompletionScore {
        accuracy,
        completeness,
        f1: f1_score(accuracy, completeness),
        tau,
    })
}

/// Mean intersection-over-union over classes present in either labelling.
pub fn mean_iou(pred: &[u32], gt: &[u32], num_classes: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "label maps",
            left: pred.len(),
            right: gt.len(),
        });
    }
    let mut inter = vec![0usize; num_classes];
    let mut union = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p as usize, g as usize);
        if p >= num_classes || g >= num_classes {
            return Err(Error::invalid(format!("label outside 0..{num_classes}")));
        }
        if p == g {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let ious: Vec<f64> = inter
        .iter()
        .zip(&union)
        .filter(|(_, &u)| u > 0)
        .map(|(&i, &u)| i as f64 / u as f64)
        .collect();
    if ious.is_empty() {
        return Err(Error::Empty("label maps"));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(sensor: &SensorModel, depth: f64, rem: f32) -> RangeImage {
        let (h, w) = sensor.dims();
        let mut img = RangeImage::invalid(h, w);
        for v in 0..h {
            for u in 0..w {
                img.set(v, u, sensor.normalize_depth(depth) as f32, rem);
            }
        }
        img
    }

    #[test]
    fn identical_images() {
        let s = SensorModel::new(4, 8, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let gt = image(&s, 10.0, 0.5);
        let r = mae(&gt, &gt, &s).unwrap();
        assert_eq!((r.depth_mae, r.remission_mae), (0.0, 0.0));
        assert_eq!(r.coverage_fraction, 1.0);
        assert_eq!(r.valid_pixel_count, 32);
    }

    #[test]
    fn constant_offset() {
        let s = SensorModel::new(4, 8, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let r = mae(&image(&s, 12.0, 0.5), &image(&s, 10.0, 0.5), &s).unwrap();
        assert!((r.depth_mae - 2.0).abs() < 1e-4);
    }

    #[test]
    fn single_pixel_disagreement_is_averaged() {
        let s = SensorModel::new(4, 8, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let gt = image(&s, 10.0, 0.5);
        let mut pred = gt.clone();
        pred.set(1, 1, s.normalize_depth(13.0) as f32, 0.5);
        let r = mae(&pred, &gt, &s).unwrap();
        assert!((r.depth_mae - 3.0 / 32.0).abs() < 1e-5);
    }

    #[test]
    fn no_overlap_and_partial_coverage() {
        let s = SensorModel::new(2, 2, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let gt = image(&s, 5.0, 0.1);
        assert!(matches!(mae(&RangeImage::invalid(2, 2), &gt, &s), Err(Error::NoOverlap)));
        let mut half = gt.clone();
        half.invalidate(0, 0);
        half.invalidate(0, 1);
        assert_eq!(mae(&half, &gt, &s).unwrap().coverage_fraction, 0.5);
        assert!(recast_stats(&RangeImage::invalid(2, 2), &gt, &s).is_err());
    }

    #[test]
    fn published_f1_values() {
        assert_eq!(format!("{:.2}", f1_score(80.37, 29.49)), "43.15");
        assert_eq!(format!("{:.2}", f1_score(41.36, 41.23)), "41.29");
    }

    #[test]
    fn completion_identity_and_errors() {
        let set = WorldPointSet {
            points: vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.0)],
            remissions: vec![0.0, 0.0],
            source_view: vec![0, 0],
        };
        let c = completion_score(&set, &set, 0.2).unwrap();
        assert_eq!((c.accuracy, c.completeness, c.f1), (100.0, 100.0, 100.0));
        assert!(completion_score(&WorldPointSet::default(), &set, 0.2).is_err());
        assert!(completion_score(&set, &WorldPointSet::default(), 0.2).is_err());
    }

    #[test]
    fn iou_arithmetic() {
        let iou = mean_iou(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        // class 0: 1/2, class 1: 2/3
        assert!((iou - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(mean_iou(&[0], &[5], 2).is_err());
    }

    #[test]
    fn report_serialization() {
        let r = MetricReport {
            depth_mae: 1.5,
            remission_mae: 3.0,
            valid_pixel_count: 10,
            coverage_fraction: 0.5,
        };
        assert!(r.to_key_values().contains("valid_pixel_count=10\n"));
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
