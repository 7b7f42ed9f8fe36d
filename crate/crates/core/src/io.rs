//! Scan, pose and range-image files.
//!
//! * Scans: KITTI velodyne `.bin`, 16-byte records of little-endian binary32
//!   `(x, y, z, reflectance)` with reflectance in [0, 1].
//! * Poses: one line per frame, `index r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz`
//!   mapping sensor coordinates to world coordinates.
//! * Range images: `"SDRI"`, version u16, h u16, w u16, reserved u16, then the
//!   depth plane and the remission plane (binary32 LE, row-major), then the
//!   validity bitmap (row-major, LSB-first, zero padded to a whole byte).
//!
//! Readers reject malformed input instead of repairing it.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform};
use crate::range_image::RangeImage;

pub const POSE_TOLERANCE: f64 = 1e-6;
pub const RANGE_IMAGE_MAGIC: [u8; 4] = *b"SDRI";
pub const RANGE_IMAGE_VERSION: u16 = 1;
const RANGE_IMAGE_HEADER: usize = 12;

pub fn decode_cloud_bin(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::format(format!(
            "scan length {} is not a multiple of 16 bytes",
            bytes.len()
        )));
    }
    let n = bytes.len() / 16;
    let mut points = Vec::with_capacity(n);
    let mut remissions = Vec::with_capacity(n);
    for (j, rec) in bytes.chunks_exact(16).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if ![x, y, z, r].iter().all(|v| v.is_finite()) {
            return Err(Error::format(format!("non-finite value in point {j}")));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::format(format!("reflectance {r} of point {j} outside [0, 1]")));
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        remissions.push(r as f64 * 255.0);
    }
    PointCloud::new(points, remissions, "sensor")
}

pub fn encode_cloud_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for (p, r) in cloud.iter() {
        for v in [p.x as f32, p.y as f32, p.z as f32, (r / 255.0) as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_cloud_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    decode_cloud_bin(&fs::read(path)?)
}

pub fn write_cloud_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_cloud_bin(cloud))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub frame_index: usize,
    pub world_from_sensor: RigidTransform,
}

pub fn parse_poses(text: &str) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::format(format!("pose line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(err(format!("expected 13 fields, found {}", fields.len())));
        }
        let frame_index = fields[0]
            .parse::<usize>()
            .map_err(|e| err(format!("frame index '{}': {e}", fields[0])))?;
        let mut m = [0.0f64; 12];
        for (slot, tok) in m.iter_mut().zip(&fields[1..]) {
            *slot = tok.parse().map_err(|e| err(format!("value '{tok}': {e}")))?;
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        let world_from_sensor =
            RigidTransform::with_tolerance(rotation, translation, POSE_TOLERANCE).map_err(|e| err(e.to_string()))?;
        out.push(PoseRecord {
            frame_index,
            world_from_sensor,
        });
    }
    Ok(out)
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>> {
    parse_poses(&fs::read_to_string(path)?)
}

pub fn format_poses(records: &[PoseRecord]) -> String {
    let mut s = String::new();
    for rec in records {
        let r = rec.world_from_sensor.rotation();
        let t = rec.world_from_sensor.translation();
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {}\n",
            rec.frame_index,
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ));
    }
    s
}

/// Looks up the pose of `frame` in a record list, whatever its order.
pub fn pose_for_frame(records: &[PoseRecord], frame: usize) -> Option<&RigidTransform> {
    records.iter().find(|r| r.frame_index == frame).map(|r| &r.world_from_sensor)
}

pub fn range_image_file_size(h: usize, w: usize) -> usize {
    RANGE_IMAGE_HEADER + 2 * h * w * 4 + (h * w).div_ceil(8)
}

pub fn encode_range_image(img: &RangeImage) -> Result<Vec<u8>> {
    let (h, w) = img.dims();
    let (h16, w16) = (
        u16::try_from(h).map_err(|_| Error::invalid("height exceeds u16"))?,
        u16::try_from(w).map_err(|_| Error::invalid("width exceeds u16"))?,
    );
    let mut out = Vec::with_capacity(range_image_file_size(h, w));
    out.extend_from_slice(&RANGE_IMAGE_MAGIC);
    out.extend_from_slice(&RANGE_IMAGE_VERSION.to_le_bytes());
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for v in img.depth().iter().chain(img.remission()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut bits = vec![0u8; (h * w).div_ceil(8)];
    for (i, _) in img.valid().iter().enumerate().filter(|(_, &v)| v) {
        bits[i / 8] |= 1 << (i % 8);
    }
    out.extend_from_slice(&bits);
    Ok(out)
}

pub fn decode_range_image(bytes: &[u8]) -> Result<RangeImage> {
    if bytes.len() < RANGE_IMAGE_HEADER {
        return Err(Error::format("range image shorter than its header"));
    }
    if bytes[..4] != RANGE_IMAGE_MAGIC {
        return Err(Error::format("bad range image magic"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let version = u16_at(4);
    if version != RANGE_IMAGE_VERSION {
        return Err(Error::format(format!("unsupported range image version {version}")));
    }
    let (h, w) = (u16_at(6) as usize, u16_at(8) as usize);
    let expected = range_image_file_size(h, w);
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "range image is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let n = h * w;
    let plane = |start: usize| -> Vec<f32> {
        bytes[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    };
    let depth = plane(RANGE_IMAGE_HEADER);
    let remission = plane(RANGE_IMAGE_HEADER + 4 * n);
    let bits = &bytes[RANGE_IMAGE_HEADER + 8 * n..];
    let valid: Vec<bool> = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
    for i in 0..n {
        if !valid[i] && (depth[i].to_bits() != 0 || remission[i].to_bits() != 0) {
            return Err(Error::format(format!("invalid pixel {i} carries data")));
        }
    }
    RangeImage::from_planes(h, w, depth, remission, valid)
}

pub fn write_range_image(img: &RangeImage, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_range_image(img)?)?)
}

pub fn read_range_image(path: impl AsRef<Path>) -> Result<RangeImage> {
    decode_range_image(&fs::read(path)?)
}
