//! Two-channel equirectangular images.
//!
//! [`RangeImage`] is the sparse, validity-masked form produced by projecting a
//! scan. [`DenseImage`] is the hole-free tensor the sampler works on, laid out
//! row-major with the two channels interleaved (depth, remission), which is
//! also the wire layout of the denoiser protocol.

use crate::error::{Error, Result};

pub const CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    h: usize,
    w: usize,
    depth: Vec<f32>,
    remission: Vec<f32>,
    valid: Vec<bool>,
}

impl RangeImage {
    pub fn invalid(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            depth: vec![0.0; h * w],
            remission: vec![0.0; h * w],
            valid: vec![false; h * w],
        }
    }

    /// Builds an image from planes; invalid pixels are zeroed.
    pub fn from_planes(
        h: usize,
        w: usize,
        mut depth: Vec<f32>,
        mut remission: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = h * w;
        for (what, len) in [("depth", depth.len()), ("remission", remission.len()), ("valid", valid.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    left: len,
                    right: n,
                });
            }
        }
        for i in 0..n {
            if !valid[i] {
                depth[i] = 0.0;
                remission[i] = 0.0;
            }
        }
        Ok(Self {
            h,
            w,
            depth,
            remission,
            valid,
        })
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

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn remission(&self) -> &[f32] {
        &self.remission
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, v: usize, u: usize) -> usize {
        v * self.w + u
    }

    pub fn is_valid(&self, v: usize, u: usize) -> bool {
        self.valid[self.index(v, u)]
    }

    /// `(depth, remission)` of a valid pixel.
    pub fn get(&self, v: usize, u: usize) -> Option<(f32, f32)> {
        let i = self.index(v, u);
        self.valid[i].then(|| (self.depth[i], self.remission[i]))
    }

    pub fn set(&mut self, v: usize, u: usize, depth: f32, remission: f32) {
        let i = self.index(v, u);
        self.depth[i] = depth;
        self.remission[i] = remission;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, v: usize, u: usize) {
        let i = self.index(v, u);
        self.depth[i] = 0.0;
        self.remission[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / (self.h * self.w) as f64
    }

    /// Dense copy; invalid pixels become zero in both channels.
    pub fn to_dense(&self) -> DenseImage {
        let mut data = Vec::with_capacity(self.h * self.w * CHANNELS);
        for (d, r) in self.depth.iter().zip(&self.remission) {
            data.push(*d);
            data.push(*r);
        }
        DenseImage {
            h: self.h,
            w: self.w,
            data,
        }
    }

    pub(crate) fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        check_dims((h, w), self.dims())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected_h: expected.0,
            expected_w: expected.1,
            h: got.0,
            w: got.1,
        });
    }
    Ok(())
}

/// Hole-free two-channel image in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseImage {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl DenseImage {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w * CHANNELS],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * CHANNELS {
            return Err(Error::LengthMismatch {
                what: "dense image data",
                left: data.len(),
                right: h * w * CHANNELS,
            });
        }
        Ok(Self { h, w, data })
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

    pub fn pixel_count(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn depth_at(&self, pixel: usize) -> f32 {
        self.data[pixel * CHANNELS]
    }

    #[inline]
    pub fn remission_at(&self, pixel: usize) -> f32 {
        self.data[pixel * CHANNELS + 1]
    }

    #[inline]
    pub fn pixel(&self, pixel: usize) -> [f32; 2] {
        [self.data[pixel * CHANNELS], self.data[pixel * CHANNELS + 1]]
    }

    #[inline]
    pub fn set_pixel(&mut self, pixel: usize, value: [f32; 2]) {
        self.data[pixel * CHANNELS] = value[0];
        self.data[pixel * CHANNELS + 1] = value[1];
    }

    pub fn depth_plane(&self) -> Vec<f32> {
        self.data.iter().step_by(CHANNELS).copied().collect()
    }

    pub fn max_abs_diff(&self, other: &DenseImage) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}
