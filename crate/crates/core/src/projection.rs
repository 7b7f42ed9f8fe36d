//! Equirectangular projection of scans into range images and back.
//!
//! A point `(x, y, z)` at depth `d` lands in column
//! `u = ⌊½(1 − atan2(y, x)/π)·w⌋ mod w` and row
//! `v = ⌊(1 − (asin(z/d) + f_up)/f)·h⌋`, and the pixel stores
//! `(log₂(d + 1)/α, r/255)`. When several points share a pixel the nearest wins.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::range_image::{DenseImage, RangeImage};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    h: usize,
    w: usize,
    fov_up_deg: f64,
    fov_down_deg: f64,
    alpha: f64,
    min_range: f64,
    max_range: f64,
    dead_pixels: Vec<bool>,
    // cached radians
    fov_up: f64,
    fov: f64,
}

impl SensorModel {
    /// `fov_down_deg` is the magnitude below the horizon (25 for a HDL-64E).
    pub fn new(
        h: usize,
        w: usize,
        fov_up_deg: f64,
        fov_down_deg: f64,
        alpha: f64,
        min_range: f64,
        max_range: f64,
    ) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if h > u16::MAX as usize || w > u16::MAX as usize {
            return Err(Error::invalid("image dimensions must fit in 16 bits"));
        }
        if !(fov_up_deg + fov_down_deg > 0.0) {
            return Err(Error::invalid("vertical field of view must be positive"));
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if !(min_range >= 0.0 && min_range < max_range) {
            return Err(Error::invalid("range limits must satisfy 0 <= min < max"));
        }
        Ok(Self {
            h,
            w,
            fov_up_deg,
            fov_down_deg,
            alpha,
            min_range,
            max_range,
            dead_pixels: vec![false; h * w],
            fov_up: fov_up_deg.to_radians(),
            fov: (fov_up_deg + fov_down_deg).to_radians(),
        })
    }

    /// 64×1024 spinning scanner, 3° up / 25° down, α = 6, 1–80 m.
    pub fn kitti360() -> Self {
        Self::new(64, 1024, 3.0, 25.0, 6.0, 1.0, 80.0).expect("static sensor parameters are valid")
    }

    pub fn with_dead_pixels(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.h * self.w {
            return Err(Error::LengthMismatch {
                what: "dead pixel mask",
                left: mask.len(),
                right: self.h * self.w,
            });
        }
        self.dead_pixels = mask;
        Ok(self)
    }

    /// Marks pixels that are invalid in at least `threshold` (e.g. 0.99) of the given scans.
    pub fn with_dead_pixels_from_corpus(self, scans: &[RangeImage], threshold: f64) -> Result<Self> {
        if scans.is_empty() {
            return Err(Error::Empty("scan corpus"));
        }
        let n = self.h * self.w;
        let mut misses = vec![0usize; n];
        for scan in scans {
            scan.check_dims(self.h, self.w)?;
            for (m, &valid) in misses.iter_mut().zip(scan.valid()) {
                if !valid {
                    *m += 1;
                }
            }
        }
        let cutoff = threshold * scans.len() as f64;
        let mask = misses.into_iter().map(|m| m as f64 >= cutoff).collect();
        self.with_dead_pixels(mask)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn fov_up_deg(&self) -> f64 {
        self.fov_up_deg
    }

    pub fn fov_down_deg(&self) -> f64 {
        self.fov_down_deg
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn min_range(&self) -> f64 {
        self.min_range
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn dead_pixels(&self) -> &[bool] {
        &self.dead_pixels
    }

    #[inline]
    pub fn normalize_depth(&self, d: f64) -> f64 {
        (d + 1.0).log2() / self.alpha
    }

    #[inline]
    pub fn denormalize_depth(&self, x: f64) -> f64 {
        (self.alpha * x).exp2() - 1.0
    }

    #[inline]
    pub fn in_range(&self, d: f64) -> bool {
        d >= self.min_range && d <= self.max_range
    }

    /// Whether a return at depth `d` in pixel `index` is physically possible for this scanner.
    #[inline]
    pub fn accepts(&self, index: usize, d: f64) -> bool {
        self.in_range(d) && !self.dead_pixels[index]
    }

    /// Pixel `(u, v)` a point falls into, with its depth, before range and dead-pixel checks.
    #[inline]
    pub fn pixel_of(&self, p: &Point3) -> Option<(usize, usize, f64)> {
        let d = p.coords.norm();
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let azimuth = p.y.atan2(p.x);
        let u = (0.5 * (1.0 - azimuth / PI) * self.w as f64).floor() as i64;
        // azimuth == -π gives u == w
        let u = u.rem_euclid(self.w as i64) as usize;
        let elevation = (p.z / d).clamp(-1.0, 1.0).asin();
        let v = ((1.0 - (elevation + self.fov_up) / self.fov) * self.h as f64).floor();
        if v < 0.0 || v >= self.h as f64 {
            return None;
        }
        Some((u, v as usize, d))
    }

    /// Unit ray through the center of pixel `(u, v)`.
    #[inline]
    pub fn ray(&self, u: usize, v: usize) -> [f64; 3] {
        let azimuth = PI * (1.0 - 2.0 * (u as f64 + 0.5) / self.w as f64);
        let elevation = (1.0 - (v as f64 + 0.5) / self.h as f64) * self.fov - self.fov_up;
        let (sa, ca) = azimuth.sin_cos();
        let (se, ce) = elevation.sin_cos();
        [ce * ca, ce * sa, se]
    }

    /// Rays for every pixel, row-major.
    pub fn rays(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.h * self.w);
        for v in 0..self.h {
            for u in 0..self.w {
                out.push(self.ray(u, v));
            }
        }
        out
    }
}

/// Nearest-point accumulator over the pixel grid.
#[derive(Debug, Clone)]
pub struct ZBuffer<'a> {
    sensor: &'a SensorModel,
    best: Vec<f64>,
    remission: Vec<f32>,
}

impl<'a> ZBuffer<'a> {
    pub fn new(sensor: &'a SensorModel) -> Self {
        let n = sensor.h * sensor.w;
        Self {
            sensor,
            best: vec![f64::INFINITY; n],
            remission: vec![0.0; n],
        }
    }

    /// Offers a point with normalized remission; returns the pixel index if it was accepted by the sensor.
    #[inline]
    pub fn insert(&mut self, p: &Point3, remission: f32) -> Option<usize> {
        let (u, v, d) = self.sensor.pixel_of(p)?;
        let i = v * self.sensor.w + u;
        if !self.sensor.accepts(i, d) {
            return None;
        }
        if d < self.best[i] {
            self.best[i] = d;
            self.remission[i] = remission;
        }
        Some(i)
    }

    /// Metric depth stored at pixel `i`, if any.
    pub fn depth_at(&self, i: usize) -> Option<f64> {
        let d = self.best[i];
        d.is_finite().then_some(d)
    }

    pub fn into_range_image(self) -> RangeImage {
        let (h, w) = self.sensor.dims();
        let mut img = RangeImage::invalid(h, w);
        for (i, (&d, &r)) in self.best.iter().zip(&self.remission).enumerate() {
            if d.is_finite() {
                img.set(i / w, i % w, self.sensor.normalize_depth(d) as f32, r);
            }
        }
        img
    }

    /// Normalized dense values plus a coverage mask; uncovered pixels are zero.
    pub fn into_dense(self) -> (DenseImage, Vec<bool>) {
        let (h, w) = self.sensor.dims();
        let mut img = DenseImage::zeros(h, w);
        let mut covered = vec![false; h * w];
        for (i, (&d, &r)) in self.best.iter().zip(&self.remission).enumerate() {
            if d.is_finite() {
                img.set_pixel(i, [self.sensor.normalize_depth(d) as f32, r]);
                covered[i] = true;
            }
        }
        (img, covered)
    }
}

pub fn project(cloud: &PointCloud, sensor: &SensorModel) -> RangeImage {
    let mut zbuf = ZBuffer::new(sensor);
    for (p, r) in cloud.iter() {
        zbuf.insert(p, (r / 255.0) as f32);
    }
    zbuf.into_range_image()
}

pub fn backproject(img: &RangeImage, sensor: &SensorModel) -> Result<PointCloud> {
    img.check_dims(sensor.h, sensor.w)?;
    let mut cloud = PointCloud::empty("sensor");
    for v in 0..sensor.h {
        for u in 0..sensor.w {
            let i = v * sensor.w + u;
            if !img.valid()[i] {
                continue;
            }
            let d = sensor.denormalize_depth(img.depth()[i] as f64);
            if !sensor.accepts(i, d) {
                continue;
            }
            let ray = sensor.ray(u, v);
            let p = Point3::new(ray[0] * d, ray[1] * d, ray[2] * d);
            let r = (img.remission()[i] as f64 * 255.0).clamp(0.0, 255.0);
            cloud.push_unchecked(p, r);
        }
    }
    Ok(cloud)
}

/// Backprojects every pixel of a dense image, keeping only returns the scanner could produce.
/// Yields `(point, normalized remission)`.
pub fn backproject_dense(img: &DenseImage, sensor: &SensorModel, rays: &[[f64; 3]]) -> Vec<(Point3, f32)> {
    debug_assert_eq!(rays.len(), img.pixel_count());
    let mut out = Vec::with_capacity(img.pixel_count());
    for (i, ray) in rays.iter().enumerate() {
        let d = sensor.denormalize_depth(img.depth_at(i) as f64);
        if !sensor.accepts(i, d) {
            continue;
        }
        out.push((Point3::new(ray[0] * d, ray[1] * d, ray[2] * d), img.remission_at(i)));
    }
    out
}

/// Keeps only pixels where `mask` is true.
pub fn apply_condition_mask(img: &RangeImage, mask: &[bool]) -> Result<RangeImage> {
    if mask.len() != img.valid().len() {
        return Err(Error::LengthMismatch {
            what: "condition mask",
            left: mask.len(),
            right: img.valid().len(),
        });
    }
    let valid = img.valid().iter().zip(mask).map(|(&v, &m)| v && m).collect();
    RangeImage::from_planes(
        img.height(),
        img.width(),
        img.depth().to_vec(),
        img.remission().to_vec(),
        valid,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Bilinear,
    Bicubic,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(Error::invalid(format!("unknown interpolation '{other}'"))),
        }
    }
}

// Keys cubic convolution kernel with a = -0.5.
fn cubic_weights(t: f64) -> [f64; 4] {
    let a = -0.5;
    let k = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
        } else if x < 2.0 {
            a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
        } else {
            0.0
        }
    };
    [k(1.0 + t), k(t), k(1.0 - t), k(2.0 - t)]
}

/// Fills the rows of a beam-subsampled image by interpolating along elevation.
///
/// Rows holding at least one valid pixel are treated as measured beams and
/// copied through. Every other row is interpolated column by column from the
/// neighbouring measured rows, on metric depth and raw remission. If any
/// measured pixel the method needs is invalid, the output pixel is invalid.
/// Rows outside the first/last measured beam clamp to the edge beam.
pub fn interpolate_densify(img: &RangeImage, method: Interpolation, sensor: &SensorModel) -> Result<RangeImage> {
    let (h, w) = sensor.dims();
    img.check_dims(h, w)?;
    let known: Vec<usize> = (0..h)
        .filter(|&v| (0..w).any(|u| img.is_valid(v, u)))
        .collect();
    if known.is_empty() {
        return Err(Error::Empty("no valid rows to interpolate from"));
    }
    let metric = |v: usize, u: usize| -> Option<(f64, f64)> {
        img.get(v, u)
            .map(|(d, r)| (sensor.denormalize_depth(d as f64), r as f64 * 255.0))
    };

    let mut out = img.clone();
    for v in 0..h {
        if known.binary_search(&v).is_ok() {
            continue;
        }
        // position of v among the measured rows
        let upper = known.partition_point(|&k| k < v);
        let (lo, hi) = if upper == 0 {
            (0, 0)
        } else if upper == known.len() {
            (known.len() - 1, known.len() - 1)
        } else {
            (upper - 1, upper)
        };
        let t = if lo == hi {
            0.0
        } else {
            (v - known[lo]) as f64 / (known[hi] - known[lo]) as f64
        };
        let clamp_row = |i: isize| known[i.clamp(0, known.len() as isize - 1) as usize];

        for u in 0..w {
            let value = match method {
                Interpolation::Nearest => {
                    let row = if t <= 0.5 { known[lo] } else { known[hi] };
                    metric(row, u)
                }
                Interpolation::Bilinear => match (metric(known[lo], u), metric(known[hi], u)) {
                    (Some(a), Some(b)) => Some((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))),
                    _ => None,
                },
                Interpolation::Bicubic => {
                    let weights = cubic_weights(t);
                    let rows = [
                        clamp_row(lo as isize - 1),
                        known[lo],
                        known[hi],
                        clamp_row(hi as isize + 1),
                    ];
                    let mut acc = Some((0.0, 0.0));
                    for (row, wt) in rows.into_iter().zip(weights) {
                        acc = match (acc, metric(row, u)) {
                            (Some(a), Some(m)) => Some((a.0 + wt * m.0, a.1 + wt * m.1)),
                            _ => None,
                        };
                    }
                    acc
                }
            };
            match value {
                Some((d, r)) if sensor.accepts(v * w + u, d) => {
                    out.set(v, u, sensor.normalize_depth(d) as f32, (r.clamp(0.0, 255.0) / 255.0) as f32);
                }
                _ => out.invalidate(v, u),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[(f64, f64, f64, f64)]) -> PointCloud {
        PointCloud::new(
            points.iter().map(|&(x, y, z, _)| Point3::new(x, y, z)).collect(),
            points.iter().map(|p| p.3).collect(),
            "t",
        )
        .unwrap()
    }

    #[test]
    fn forward_axis_point() {
        let s = SensorModel::kitti360();
        let img = project(&cloud(&[(10.0, 0.0, 0.0, 51.0)]), &s);
        assert_eq!(img.valid_count(), 1);
        let (d, r) = img.get(57, 512).expect("pixel (u=512, v=57)");
        assert!((d as f64 - 11f64.log2() / 6.0).abs() < 1e-6);
        assert!((d - 0.57657).abs() < 1e-5);
        assert!((r - 0.2).abs() < 1e-7);
    }

    #[test]
    fn negative_y_axis_maps_to_three_quarters() {
        let s = SensorModel::kitti360();
        let (u, _, _) = s.pixel_of(&Point3::new(0.0, -10.0, 0.0)).unwrap();
        assert_eq!(u, 768);
    }

    #[test]
    fn azimuth_minus_pi_wraps_to_column_zero() {
        let s = SensorModel::kitti360();
        let (u, _, _) = s.pixel_of(&Point3::new(-10.0, -0.0, 0.0)).unwrap();
        assert_eq!(u, 0);
        let (u, _, _) = s.pixel_of(&Point3::new(-10.0, 0.0, 0.0)).unwrap();
        assert_eq!(u, 0);
    }

    #[test]
    fn nearest_point_wins() {
        let s = SensorModel::kitti360();
        let img = project(&cloud(&[(9.0, 0.0, 0.0, 10.0), (5.0, 0.0, 0.0, 200.0)]), &s);
        let (d, r) = img.get(57, 512).unwrap();
        assert_eq!(d, s.normalize_depth(5.0) as f32);
        assert_eq!(r, (200.0 / 255.0) as f32);
    }

    #[test]
    fn out_of_range_and_fov_are_dropped() {
        let s = SensorModel::kitti360();
        let img = project(
            &cloud(&[(0.5, 0.0, 0.0, 0.0), (90.0, 0.0, 0.0, 0.0), (1.0, 0.0, 5.0, 0.0), (1.0, 0.0, -5.0, 0.0)]),
            &s,
        );
        assert_eq!(img.valid_count(), 0);
        assert_eq!(project(&PointCloud::empty("e"), &s).valid_count(), 0);
    }

    #[test]
    fn dead_pixels_are_dropped() {
        let mut mask = vec![false; 64 * 1024];
        mask[57 * 1024 + 512] = true;
        let s = SensorModel::kitti360().with_dead_pixels(mask).unwrap();
        assert_eq!(project(&cloud(&[(10.0, 0.0, 0.0, 0.0)]), &s).valid_count(), 0);
    }

    #[test]
    fn dead_pixels_from_corpus() {
        let s = SensorModel::new(1, 2, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let mut a = RangeImage::invalid(1, 2);
        a.set(0, 0, 0.5, 0.5);
        let s = s.with_dead_pixels_from_corpus(&[a.clone(), a], 0.99).unwrap();
        assert_eq!(s.dead_pixels(), &[false, true]);
    }

    #[test]
    fn backproject_inverts_normalization() {
        let s = SensorModel::new(64, 1024, 3.0, 25.0, 6.0, 0.5, 80.0).unwrap();
        let mut img = RangeImage::invalid(64, 1024);
        img.set(10, 100, 1.0 / 6.0, 0.5);
        let c = backproject(&img, &s).unwrap();
        assert_eq!(c.len(), 1);
        // the depth channel is single precision
        assert!((c.points()[0].coords.norm() - 1.0).abs() < 1e-6);
        assert!((c.remissions()[0] - 127.5).abs() < 1e-9);
        assert!(backproject(&RangeImage::invalid(64, 1024), &s).unwrap().is_empty());
    }

    #[test]
    fn backproject_respects_scanner_limits() {
        let s = SensorModel::kitti360();
        let mut img = RangeImage::invalid(64, 1024);
        img.set(10, 100, 1.0 / 6.0, 0.5); // 1 m, at the minimum
        img.set(10, 101, 0.1, 0.5); // below 1 m
        assert_eq!(backproject(&img, &s).unwrap().len(), 1);
    }

    #[test]
    fn rays_hit_their_own_pixel() {
        let s = SensorModel::kitti360();
        for v in 0..64 {
            for u in (0..1024).step_by(7) {
                let r = s.ray(u, v);
                let (pu, pv, _) = s.pixel_of(&Point3::new(r[0] * 20.0, r[1] * 20.0, r[2] * 20.0)).unwrap();
                assert_eq!((pu, pv), (u, v));
            }
        }
    }

    #[test]
    fn condition_mask_cases() {
        let s = SensorModel::kitti360();
        let pts: Vec<_> = (0..64).map(|v| {
            let r = s.ray(3, v);
            (r[0] * 10.0, r[1] * 10.0, r[2] * 10.0, 5.0)
        }).collect();
        let img = project(&cloud(&pts), &s);
        assert_eq!(img.valid_count(), 64);
        assert_eq!(apply_condition_mask(&img, &vec![true; 64 * 1024]).unwrap(), img);
        assert_eq!(apply_condition_mask(&img, &vec![false; 64 * 1024]).unwrap().valid_count(), 0);
        let beams: Vec<bool> = (0..64 * 1024).map(|i| (i / 1024) % 4 == 0).collect();
        assert_eq!(apply_condition_mask(&img, &beams).unwrap().valid_count(), 16);
        assert!(apply_condition_mask(&img, &[true]).is_err());
    }

    fn beam_image(s: &SensorModel, depth_of_row: impl Fn(usize) -> f64) -> RangeImage {
        let mut img = RangeImage::invalid(s.height(), s.width());
        for v in (0..s.height()).step_by(4) {
            for u in 0..s.width() {
                img.set(v, u, s.normalize_depth(depth_of_row(v)) as f32, 0.25);
            }
        }
        img
    }

    #[test]
    fn constant_depth_is_preserved_by_all_methods() {
        let s = SensorModel::new(16, 8, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let img = beam_image(&s, |_| 7.0);
        for m in [Interpolation::Nearest, Interpolation::Bilinear, Interpolation::Bicubic] {
            let out = interpolate_densify(&img, m, &s).unwrap();
            assert_eq!(out.valid_count(), 16 * 8, "{m:?}");
            for v in 0..16 {
                let d = s.denormalize_depth(out.get(v, 0).unwrap().0 as f64);
                assert!((d - 7.0).abs() < 1e-4, "{m:?} row {v}: {d}");
            }
        }
    }

    #[test]
    fn nearest_and_bilinear_semantics() {
        let s = SensorModel::new(16, 4, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let img = beam_image(&s, |v| if v == 0 { 4.0 } else { 8.0 });
        let near = interpolate_densify(&img, Interpolation::Nearest, &s).unwrap();
        assert_eq!(near.get(1, 2), img.get(0, 2));
        let lin = interpolate_densify(&img, Interpolation::Bilinear, &s).unwrap();
        let d = s.denormalize_depth(lin.get(2, 2).unwrap().0 as f64);
        assert!((d - 6.0).abs() < 1e-4, "{d}");
    }

    #[test]
    fn invalid_neighbour_propagates() {
        let s = SensorModel::new(8, 2, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap();
        let mut img = beam_image(&s, |_| 5.0);
        img.invalidate(4, 1);
        let lin = interpolate_densify(&img, Interpolation::Bilinear, &s).unwrap();
        assert!(lin.is_valid(2, 0));
        assert!(!lin.is_valid(2, 1));
        assert!(interpolate_densify(&RangeImage::invalid(8, 2), Interpolation::Nearest, &s).is_err());
    }

    #[test]
    fn normalization_is_monotonic() {
        let s = SensorModel::kitti360();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..1000 {
            let x = s.normalize_depth(i as f64 * 0.1);
            assert!(x > prev);
            prev = x;
        }
    }
}
