//! Synthetic box-world scenes with an exact ray-cast renderer.
//!
//! Scenes are built in a world frame whose origin is the nominal sensor
//! position, 1.7 m above a flat ground plane.

use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform, WorldPointSet};
use crate::projection::SensorModel;
use crate::range_image::RangeImage;

pub const SENSOR_HEIGHT: f64 = 1.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// 20 × 10 m room, 4 m high, with two boxes.
    Room,
    /// 120 m long, 6 m wide corridor along x.
    Corridor,
    /// Open ground with scattered box pillars, clear along +x.
    Occluders,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "room" => Ok(Self::Room),
            "corridor" => Ok(Self::Corridor),
            "occluders" => Ok(Self::Occluders),
            other => Err(Error::invalid(format!("unknown scene '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self {
            min: Vector3::from(min),
            max: Vector3::from(max),
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Distance at which a ray from inside the box leaves it.
    fn exit(&self, o: &Point3, d: &Vector3<f64>) -> Option<f64> {
        let mut best = f64::INFINITY;
        for a in 0..3 {
            let t = if d[a] > 0.0 {
                (self.max[a] - o[a]) / d[a]
            } else if d[a] < 0.0 {
                (self.min[a] - o[a]) / d[a]
            } else {
                continue;
            };
            best = best.min(t);
        }
        (best.is_finite() && best > 0.0).then_some(best)
    }

    /// Distance at which a ray from outside first enters the box.
    fn enter(&self, o: &Point3, d: &Vector3<f64>) -> Option<f64> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..3 {
            if d[a] == 0.0 {
                if o[a] < self.min[a] || o[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let (mut ta, mut tb) = ((self.min[a] - o[a]) / d[a], (self.max[a] - o[a]) / d[a]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 <= t1 && t0 > 1e-9).then_some(t0)
    }
}

/// Remission from a surface's base value plus a position-dependent stripe texture.
fn texture(base: f64, p: &Point3) -> f64 {
    (base + 25.0 * (0.7 * p.x + 0.4 * p.y + 0.9 * p.z).sin()).clamp(0.0, 255.0)
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub kind: SceneKind,
    /// Hollow box the sensor sits in; rays end on its inner faces.
    pub enclosure: Option<Aabb>,
    /// Finite ground plane `(z, half extent)` for open scenes.
    pub ground: Option<(f64, f64)>,
    pub solids: Vec<Aabb>,
    /// Dense surface samples of everything above.
    pub points: WorldPointSet,
}

const ENCLOSURE_REMISSION: f64 = 110.0;
const GROUND_REMISSION: f64 = 45.0;
const SOLID_REMISSION: f64 = 190.0;

pub fn make_synthetic_scene(kind: SceneKind, seed: u64) -> SyntheticScene {
    let g = -SENSOR_HEIGHT;
    let mut scene = match kind {
        SceneKind::Room => SyntheticScene {
            kind,
            enclosure: Some(Aabb::new([-10.0, -5.0, g], [10.0, 5.0, g + 4.0])),
            ground: None,
            solids: vec![
                Aabb::new([3.0, 1.0, g], [5.0, 2.5, g + 1.2]),
                Aabb::new([-6.0, -3.0, g], [-4.5, -1.5, g + 2.0]),
            ],
            points: WorldPointSet::default(),
        },
        SceneKind::Corridor => SyntheticScene {
            kind,
            enclosure: Some(Aabb::new([-60.0, -3.0, g], [60.0, 3.0, g + 4.0])),
            ground: None,
            solids: Vec::new(),
            points: WorldPointSet::default(),
        },
        SceneKind::Occluders => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut solids = Vec::new();
            while solids.len() < 14 {
                let cx = rng.random_range(-25.0..30.0);
                let cy = rng.random_range(-25.0..25.0);
                let sx = rng.random_range(1.0..3.0);
                let sy = rng.random_range(1.0..3.0);
                let hz = rng.random_range(1.5..4.0);
                let b = Aabb::new([cx - sx, cy - sy, g], [cx + sx, cy + sy, g + hz]);
                // keep the path of synthetic views along +x and the sensor itself clear
                let blocks_path = b.min.x < 25.0 && b.max.x > -3.0 && b.min.y < 3.0 && b.max.y > -3.0;
                if !blocks_path {
                    solids.push(b);
                }
            }
            SyntheticScene {
                kind,
                enclosure: None,
                ground: Some((g, 60.0)),
                solids,
                points: WorldPointSet::default(),
            }
        }
    };
    let spacing = match kind {
        SceneKind::Room => 0.1,
        SceneKind::Corridor => 0.2,
        SceneKind::Occluders => 0.25,
    };
    scene.points = scene.surface_points(spacing, seed);
    scene
}

impl SyntheticScene {
    /// Nearest surface hit along a ray: `(distance, remission 0–255)`.
    pub fn cast(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |t: f64, base: f64| {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, base));
            }
        };
        if let Some(enc) = &self.enclosure {
            if let Some(t) = enc.exit(origin, dir) {
                let hit = origin + dir * t;
                let base = if (hit.z - enc.min.z).abs() < 1e-9 { GROUND_REMISSION } else { ENCLOSURE_REMISSION };
                consider(t, base);
            }
        }
        if let Some((z, half)) = self.ground {
            if dir.z < 0.0 && origin.z > z {
                let t = (z - origin.z) / dir.z;
                let hit = origin + dir * t;
                if hit.x.abs() <= half && hit.y.abs() <= half {
                    consider(t, GROUND_REMISSION);
                }
            }
        }
        for b in &self.solids {
            if let Some(t) = b.enter(origin, dir) {
                consider(t, SOLID_REMISSION);
            }
        }
        best.map(|(t, base)| (t, texture(base, &(origin + dir * t))))
    }

    /// Exact ground-truth range image seen from `world_from_sensor`, rays through pixel centers.
    pub fn render(&self, world_from_sensor: &RigidTransform, sensor: &SensorModel) -> RangeImage {
        let (h, w) = sensor.dims();
        let origin = Point3::from(*world_from_sensor.translation());
        let mut img = RangeImage::invalid(h, w);
        for v in 0..h {
            for u in 0..w {
                let r = sensor.ray(u, v);
                let dir = world_from_sensor.rotation() * Vector3::new(r[0], r[1], r[2]);
                if let Some((t, rem)) = self.cast(&origin, &dir) {
                    if sensor.accepts(v * w + u, t) {
                        img.set(v, u, sensor.normalize_depth(t) as f32, (rem / 255.0) as f32);
                    }
                }
            }
        }
        img
    }

    /// A simulated scan in the sensor frame: one return per pixel along a ray jittered by
    /// up to 0.3 pixel, dropped where the scanner would see nothing.
    pub fn scan(&self, world_from_sensor: &RigidTransform, sensor: &SensorModel, seed: u64) -> PointCloud {
        let (h, w) = sensor.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let origin = Point3::from(*world_from_sensor.translation());
        let daz = std::f64::consts::TAU / w as f64;
        let del = (sensor.fov_up_deg() + sensor.fov_down_deg()).to_radians() / h as f64;
        let mut cloud = PointCloud::empty("sensor");
        for v in 0..h {
            for u in 0..w {
                let c = sensor.ray(u, v);
                let az = c[1].atan2(c[0]) + rng.random_range(-0.3..0.3) * daz;
                let el = c[2].asin() + rng.random_range(-0.3..0.3) * del;
                let local = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let dir = world_from_sensor.rotation() * local;
                if let Some((t, rem)) = self.cast(&origin, &dir) {
                    let p = Point3::from(local * t);
                    if let Some((pu, pv, d)) = sensor.pixel_of(&p) {
                        if sensor.accepts(pv * w + pu, d) {
                            cloud.push_unchecked(p, rem);
                        }
                    }
                }
            }
        }
        cloud
    }

    /// Surface samples on a jittered grid of the given spacing.
    pub fn surface_points(&self, spacing: f64, seed: u64) -> WorldPointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut out = WorldPointSet::default();
        let mut face = |origin: Vector3<f64>, e1: Vector3<f64>, e2: Vector3<f64>, base: f64, out: &mut WorldPointSet| {
            let (n1, n2) = ((e1.norm() / spacing).ceil() as usize, (e2.norm() / spacing).ceil() as usize);
            for i in 0..n1 {
                for j in 0..n2 {
                    let a = (i as f64 + rng.random_range(0.0..1.0)) / n1 as f64;
                    let b = (j as f64 + rng.random_range(0.0..1.0)) / n2 as f64;
                    let p = Point3::from(origin + e1 * a + e2 * b);
                    out.points.push(p);
                    out.remissions.push(texture(base, &p));
                    out.source_view.push(0);
                }
            }
        };
        let box_faces = |b: &Aabb, skip_bottom: bool| -> Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
            let (lo, hi) = (b.min, b.max);
            let ex = Vector3::new(hi.x - lo.x, 0.0, 0.0);
            let ey = Vector3::new(0.0, hi.y - lo.y, 0.0);
            let ez = Vector3::new(0.0, 0.0, hi.z - lo.z);
            let mut faces = vec![
                (lo, ex, ey + Vector3::zeros()) ,
                (Vector3::new(lo.x, lo.y, hi.z), ex, ey),
                (lo, ex, ez),
                (Vector3::new(lo.x, hi.y, lo.z), ex, ez),
                (lo, ey, ez),
                (Vector3::new(hi.x, lo.y, lo.z), ey, ez),
            ];
            if skip_bottom {
                faces.remove(0);
            }
            faces
        };
        if let Some(enc) = &self.enclosure {
            for (k, (o, e1, e2)) in box_faces(enc, false).into_iter().enumerate() {
                let base = if k == 0 { GROUND_REMISSION } else { ENCLOSURE_REMISSION };
                face(o, e1, e2, base, &mut out);
            }
        }
        if let Some((z, half)) = self.ground {
            face(
                Vector3::new(-half, -half, z),
                Vector3::new(2.0 * half, 0.0, 0.0),
                Vector3::new(0.0, 2.0 * half, 0.0),
                GROUND_REMISSION,
                &mut out,
            );
        }
        for b in &self.solids {
            for (o, e1, e2) in box_faces(b, true) {
                face(o, e1, e2, SOLID_REMISSION, &mut out);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::project;

    #[test]
    fn ground_hit_depth_matches_geometry() {
        let s = SensorModel::kitti360();
        // column 0 looks along -x down the corridor; the bottom row meets the floor
        // well before the far end wall
        let corridor = make_synthetic_scene(SceneKind::Corridor, 1);
        let img = corridor.render(&RigidTransform::identity(), &s);
        let v = 63;
        let theta = -s.ray(0, v)[2].asin();
        let expected = SENSOR_HEIGHT / theta.sin();
        let (d, _) = img.get(v, 0).unwrap();
        let got = s.denormalize_depth(d as f64);
        assert!((got - expected).abs() < 1e-4, "{got} vs {expected}");

        // every downward ray in the room hits the floor or a wall
        let room = make_synthetic_scene(SceneKind::Room, 1);
        let img = room.render(&RigidTransform::identity(), &s);
        for v in 0..64 {
            if s.ray(0, v)[2] < 0.0 {
                assert!((0..1024).all(|u| img.is_valid(v, u)), "row {v}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_synthetic_scene(SceneKind::Occluders, 3);
        let b = make_synthetic_scene(SceneKind::Occluders, 3);
        assert_eq!(a.solids, b.solids);
        assert_eq!(a.points, b.points);
        let c = make_synthetic_scene(SceneKind::Occluders, 4);
        assert_ne!(a.solids, c.solids);
    }

    #[test]
    fn renderer_agrees_with_projected_samples() {
        let scene = make_synthetic_scene(SceneKind::Room, 2);
        let s = SensorModel::kitti360();
        let rendered = scene.render(&RigidTransform::identity(), &s);
        // samples must be finer than the smallest pixel footprint, or far surfaces show through holes
        let projected = project(&scene.surface_points(0.015, 2).to_cloud(), &s);
        // only pixels whose footprint is not grazing: the four corner rays agree within 5 cm
        let corner = |u: f64, v: f64| {
            let az = std::f64::consts::PI * (1.0 - 2.0 * u / 1024.0);
            let el = (1.0 - v / 64.0) * 28f64.to_radians() - 3f64.to_radians();
            let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            scene.cast(&Point3::origin(), &dir).map(|(t, _)| t)
        };
        let mut checked = 0;
        for v in 0..64 {
            for u in 0..1024 {
                let (Some((dr, _)), Some((dp, _))) = (rendered.get(v, u), projected.get(v, u)) else { continue };
                let cs: Option<Vec<f64>> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                    .iter()
                    .map(|(a, b)| corner(u as f64 + a, v as f64 + b))
                    .collect();
                let Some(cs) = cs else { continue };
                let spread = cs.iter().cloned().fold(f64::MIN, f64::max) - cs.iter().cloned().fold(f64::MAX, f64::min);
                if spread > 0.02 {
                    continue;
                }
                let (dr, dp) = (s.denormalize_depth(dr as f64), s.denormalize_depth(dp as f64));
                assert!((dr - dp).abs() <= 0.05, "pixel ({u},{v}): {dr} vs {dp}");
                checked += 1;
            }
        }
        assert!(checked > 10_000, "{checked}");
    }
}
