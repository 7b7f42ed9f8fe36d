//! Points, clouds and rigid-body poses.
//!
//! Poses follow the local-to-world convention: a `RigidTransform` named
//! `world_from_x` maps coordinates expressed in frame `x` into the world frame.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance on rotation orthonormality for transforms built in code.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// An element of SE(3), stored as a 3x3 rotation and a translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not proper orthonormal
    /// within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        Self::with_tolerance(rotation, translation, ROTATION_TOLERANCE)
    }

    pub fn with_tolerance(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite pose entry"));
        }
        let deviation = rotation_deviation(&rotation);
        if deviation > tolerance {
            return Err(Error::InvalidRotation { deviation });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation about the sensor's vertical axis by `yaw` radians.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Largest absolute entry-wise difference between two transforms.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).amax()
    }
}

fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

/// `a ∘ b`: the transform that applies `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        rotation: rt,
        translation: -(rt * t.translation),
    }
}

/// Maps coordinates in frame `b` into frame `a`: `a_from_b = world_from_a⁻¹ · world_from_b`.
pub fn relative_transform(world_from_a: &RigidTransform, world_from_b: &RigidTransform) -> RigidTransform {
    compose(&invert(world_from_a), world_from_b)
}

/// A LiDAR scan in a single sensor frame. Index `j` identifies a point across transforms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    remissions: Vec<f64>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, remissions: Vec<f64>, frame_id: impl Into<String>) -> Result<Self> {
        if points.len() != remissions.len() {
            return Err(Error::LengthMismatch {
                what: "points vs remissions",
                left: points.len(),
                right: remissions.len(),
            });
        }
        if let Some(j) = points.iter().position(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid(format!("point {j} has non-finite coordinates")));
        }
        if let Some(j) = remissions.iter().position(|r| !(0.0..=255.0).contains(r)) {
            return Err(Error::invalid(format!(
                "remission {} of point {j} outside [0, 255]",
                remissions[j]
            )));
        }
        Ok(Self {
            points,
            remissions,
            frame_id: frame_id.into(),
        })
    }

    pub fn empty(frame_id: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            remissions: Vec::new(),
            frame_id: frame_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn remissions(&self) -> &[f64] {
        &self.remissions
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point3, f64)> + '_ {
        self.points.iter().zip(self.remissions.iter().copied())
    }

    /// Appends a point; used by producers that already guarantee the invariants.
    pub(crate) fn push_unchecked(&mut self, p: Point3, remission: f64) {
        self.points.push(p);
        self.remissions.push(remission);
    }
}

pub fn transform_cloud(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        remissions: cloud.remissions.clone(),
        frame_id: cloud.frame_id.clone(),
    }
}

/// Points from several views merged into the world frame, each tagged with its view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldPointSet {
    pub points: Vec<Point3>,
    pub remissions: Vec<f64>,
    pub source_view: Vec<usize>,
}

impl WorldPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_cloud(cloud: &PointCloud, view: usize) -> Self {
        Self {
            points: cloud.points.clone(),
            remissions: cloud.remissions.clone(),
            source_view: vec![view; cloud.len()],
        }
    }

    pub fn extend(&mut self, other: WorldPointSet) {
        self.points.extend(other.points);
        self.remissions.extend(other.remissions);
        self.source_view.extend(other.source_view);
    }

    /// The points contributed by view `k`, still in the world frame.
    pub fn view_cloud(&self, k: usize) -> PointCloud {
        let mut out = PointCloud::empty(format!("world/{k}"));
        for ((p, r), _) in self
            .points
            .iter()
            .zip(&self.remissions)
            .zip(&self.source_view)
            .filter(|(_, &v)| v == k)
        {
            out.push_unchecked(*p, *r);
        }
        out
    }

    /// The whole set as a single cloud labelled with the world frame.
    pub fn to_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            remissions: self.remissions.clone(),
            frame_id: "world".into(),
        }
    }
}

pub fn merge_to_world(clouds: &[PointCloud], poses: &[RigidTransform]) -> Result<WorldPointSet> {
    if clouds.len() != poses.len() {
        return Err(Error::LengthMismatch {
            what: "clouds vs poses",
            left: clouds.len(),
            right: poses.len(),
        });
    }
    let total = clouds.iter().map(PointCloud::len).sum();
    let mut out = WorldPointSet {
        points: Vec::with_capacity(total),
        remissions: Vec::with_capacity(total),
        source_view: Vec::with_capacity(total),
    };
    for (k, (cloud, pose)) in clouds.iter().zip(poses).enumerate() {
        out.points.extend(cloud.points.iter().map(|p| pose.apply(p)));
        out.remissions.extend_from_slice(&cloud.remissions);
        out.source_view.extend(std::iter::repeat_n(k, cloud.len()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;

    fn sample_pose() -> RigidTransform {
        compose(&RigidTransform::from_yaw(FRAC_PI_2), &RigidTransform::from_translation(1.0, 0.0, 0.0))
    }

    #[test]
    fn compose_identity_and_inverse() {
        let t = sample_pose();
        assert_eq!(compose(&RigidTransform::identity(), &t), t);
        assert!(compose(&t, &invert(&t)).max_abs_diff(&RigidTransform::identity()) < 1e-9);
        assert!(compose(&invert(&t), &t).max_abs_diff(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        let q = RigidTransform::from_yaw(FRAC_PI_2);
        let h = compose(&q, &q);
        assert!(h.max_abs_diff(&RigidTransform::from_yaw(PI)) < 1e-12);
    }

    #[test]
    fn invert_translation() {
        assert_eq!(invert(&RigidTransform::identity()), RigidTransform::identity());
        let inv = invert(&RigidTransform::from_translation(2.0, 0.0, 0.0));
        assert!(inv.max_abs_diff(&RigidTransform::from_translation(-2.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn rotated_translation_inverse_checked_by_composition() {
        let t = sample_pose();
        let p = Point3::new(0.3, -2.0, 5.0);
        let back = invert(&t).apply(&t.apply(&p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn relative_transform_cases() {
        let t = sample_pose();
        assert!(relative_transform(&t, &t).max_abs_diff(&RigidTransform::identity()) < 1e-12);
        let r = relative_transform(&RigidTransform::identity(), &RigidTransform::from_translation(2.0, 0.0, 0.0));
        assert!(r.max_abs_diff(&RigidTransform::from_translation(2.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn relative_transform_matches_two_step() {
        let a = compose(&RigidTransform::from_translation(3.0, -1.0, 0.5), &RigidTransform::from_yaw(0.7));
        let b = compose(&RigidTransform::from_yaw(-2.1), &RigidTransform::from_translation(-4.0, 2.0, 0.0));
        let rel = relative_transform(&a, &b);
        for p in [Point3::new(1.0, 2.0, 3.0), Point3::new(-7.0, 0.0, 0.25)] {
            let two_step = invert(&a).apply(&b.apply(&p));
            assert!((rel.apply(&p) - two_step).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.01;
        assert!(matches!(
            RigidTransform::new(m, Vector3::zeros()),
            Err(Error::InvalidRotation { .. })
        ));
        // reflection: orthonormal but det = -1
        let refl = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(refl, Vector3::zeros()).is_err());
    }

    #[test]
    fn transform_cloud_translation() {
        let c = PointCloud::new(vec![Point3::new(10.0, 0.0, 0.0)], vec![42.0], "0").unwrap();
        assert_eq!(transform_cloud(&RigidTransform::identity(), &c), c);
        let moved = transform_cloud(&RigidTransform::from_translation(-2.0, 0.0, 0.0), &c);
        assert_eq!(moved.points()[0], Point3::new(8.0, 0.0, 0.0));
        assert_eq!(moved.remissions(), &[42.0]);
    }

    #[test]
    fn cloud_invariants() {
        assert!(PointCloud::new(vec![Point3::origin()], vec![], "x").is_err());
        assert!(PointCloud::new(vec![Point3::origin()], vec![256.0], "x").is_err());
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)], vec![1.0], "x").is_err());
    }

    #[test]
    fn merge_single_identity() {
        let c = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], vec![7.0], "0").unwrap();
        let w = merge_to_world(std::slice::from_ref(&c), &[RigidTransform::identity()]).unwrap();
        assert_eq!(w.points, c.points());
        assert_eq!(w.remissions, c.remissions());
        assert_eq!(w.source_view, vec![0]);
    }

    #[test]
    fn merge_two_views_and_empty() {
        let a = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0)], vec![1.0], "a").unwrap();
        let b = PointCloud::new(vec![Point3::new(0.0, 1.0, 0.0)], vec![2.0], "b").unwrap();
        let pa = RigidTransform::from_translation(5.0, 0.0, 0.0);
        let pb = sample_pose();
        let w = merge_to_world(&[a.clone(), b.clone(), PointCloud::empty("c")], &[pa, pb, pa]).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.points[0], pa.apply(&a.points()[0]));
        assert!((w.points[1] - pb.apply(&b.points()[0])).norm() < 1e-15);
        assert_eq!(w.source_view, vec![0, 1]);
        assert!(merge_to_world(&[a], &[]).is_err());
    }

    #[test]
    fn view_extraction_recovers_transformed_clouds() {
        let a = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 1.0, 0.0)], vec![1.0, 3.0], "a").unwrap();
        let b = PointCloud::new(vec![Point3::new(0.0, 1.0, 0.0)], vec![2.0], "b").unwrap();
        let poses = [RigidTransform::from_translation(1.0, 1.0, 1.0), sample_pose()];
        let w = merge_to_world(&[a.clone(), b.clone()], &poses).unwrap();
        assert_eq!(w.view_cloud(0).points(), transform_cloud(&poses[0], &a).points());
        assert_eq!(w.view_cloud(1).points(), transform_cloud(&poses[1], &b).points());
    }
}
