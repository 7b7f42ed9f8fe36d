//! Synthetic viewpoints and recasting of the input scan into them.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{compose, relative_transform, transform_cloud, PointCloud, RigidTransform};

/// World-from-view poses; index 0 is the real scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    poses: Vec<RigidTransform>,
    labels: Vec<String>,
}

impl ViewSet {
    pub fn new(poses: Vec<RigidTransform>, labels: Vec<String>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Empty("view set"));
        }
        if poses.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "poses vs labels",
                left: poses.len(),
                right: labels.len(),
            });
        }
        Ok(Self { poses, labels })
    }

    pub fn single(input_pose: RigidTransform) -> Self {
        Self {
            poses: vec![input_pose],
            labels: vec!["input".into()],
        }
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// K + 1.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    /// Number of synthetic views, K.
    pub fn synthetic_count(&self) -> usize {
        self.poses.len() - 1
    }

    pub fn input_pose(&self) -> &RigidTransform {
        &self.poses[0]
    }

    pub fn push(&mut self, pose: RigidTransform, label: impl Into<String>) {
        self.poses.push(pose);
        self.labels.push(label.into());
    }

    /// Appends the synthetic views of `other`; its input view must match ours.
    pub fn concat(mut self, other: &ViewSet) -> Result<Self> {
        if other.poses[0].max_abs_diff(&self.poses[0]) > 1e-9 {
            return Err(Error::invalid("view sets have different input poses"));
        }
        self.poses.extend_from_slice(&other.poses[1..]);
        self.labels.extend_from_slice(&other.labels[1..]);
        Ok(self)
    }

    /// The input view plus the first `k` synthetic views.
    pub fn truncated(&self, k: usize) -> Self {
        let n = (k + 1).min(self.poses.len());
        Self {
            poses: self.poses[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Re-expresses the input scan (frame 0) in every view's frame.
pub fn recast(cloud: &PointCloud, views: &ViewSet) -> Result<Vec<PointCloud>> {
    if views.poses.is_empty() {
        return Err(Error::Empty("view set"));
    }
    let mut out = Vec::with_capacity(views.len());
    out.push(cloud.clone());
    for (k, pose) in views.poses.iter().enumerate().skip(1) {
        let view_from_input = relative_transform(pose, &views.poses[0]);
        let mut c = transform_cloud(&view_from_input, cloud);
        c.frame_id = views.labels[k].clone();
        out.push(c);
    }
    Ok(out)
}

/// `count` views evenly spaced on a horizontal circle around the input, starting at azimuth 0,
/// each keeping the input orientation.
pub fn place_views_circle(center_pose: &RigidTransform, radius: f64, count: usize) -> Result<ViewSet> {
    if !(radius > 0.0) {
        return Err(Error::invalid("circle radius must be positive"));
    }
    if count == 0 {
        return Err(Error::invalid("circle view count must be at least 1"));
    }
    let mut views = ViewSet::single(*center_pose);
    for i in 0..count {
        let angle = TAU * i as f64 / count as f64;
        let offset = RigidTransform::from_translation(radius * angle.cos(), radius * angle.sin(), 0.0);
        views.push(compose(center_pose, &offset), format!("circle{radius}m/{i}"));
    }
    Ok(views)
}

/// Views taken from a trajectory: view k is frame `start + k·stride`, for k = 0..=count.
pub fn place_views_trajectory(
    poses_by_frame: &[RigidTransform],
    start_frame: usize,
    stride: usize,
    count: usize,
) -> Result<ViewSet> {
    let last = start_frame
        .checked_add(stride.checked_mul(count).ok_or_else(|| Error::invalid("trajectory overflow"))?)
        .ok_or_else(|| Error::invalid("trajectory overflow"))?;
    if last >= poses_by_frame.len() {
        return Err(Error::invalid(format!(
            "trajectory frame {last} out of range ({} poses)",
            poses_by_frame.len()
        )));
    }
    let mut views = ViewSet::single(poses_by_frame[start_frame]);
    for k in 1..=count {
        let frame = start_frame + k * stride;
        views.push(poses_by_frame[frame], format!("frame{frame}"));
    }
    Ok(views)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadOptions {
    /// Height band, relative to the sensor, that counts as ground.
    pub ground_band: (f64, f64),
    pub min_ground_points: usize,
    /// Rotate synthetic views to face along the fitted road; otherwise keep the input orientation.
    pub align_to_road: bool,
}

impl Default for RoadOptions {
    fn default() -> Self {
        Self {
            ground_band: (-2.2, -1.2),
            min_ground_points: 50,
            align_to_road: true,
        }
    }
}

/// A road direction fitted to ground points in the sensor's horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadLine {
    /// Foot of the perpendicular from the sensor origin onto the line.
    pub origin: Vector2<f64>,
    /// Unit direction, oriented to point ahead of the sensor (+x, then +y).
    pub direction: Vector2<f64>,
}

/// Total least squares line through the ground points.
pub fn fit_road(cloud: &PointCloud, options: &RoadOptions) -> Result<RoadLine> {
    let (lo, hi) = options.ground_band;
    let ground: Vec<Vector2<f64>> = cloud
        .points()
        .iter()
        .filter(|p| p.z >= lo && p.z <= hi)
        .map(|p| Vector2::new(p.x, p.y))
        .collect();
    if ground.len() < options.min_ground_points {
        return Err(Error::Degenerate(format!(
            "{} ground points, need {}",
            ground.len(),
            options.min_ground_points
        )));
    }
    let n = ground.len() as f64;
    let centroid = ground.iter().sum::<Vector2<f64>>() / n;
    let mut cov = Matrix2::zeros();
    for g in &ground {
        let d = g - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let spread = eig.eigenvalues[major];
    if !(spread > 1e-12) || eig.eigenvalues[minor] >= spread * (1.0 - 1e-9) {
        return Err(Error::Degenerate("ground points have no dominant direction".into()));
    }
    let mut direction = eig.eigenvectors.column(major).into_owned().normalize();
    if direction.x < -1e-12 || (direction.x.abs() <= 1e-12 && direction.y < 0.0) {
        direction = -direction;
    }
    let origin = centroid + direction * (-centroid).dot(&direction);
    Ok(RoadLine { origin, direction })
}

/// Views at signed distances along the fitted road, in the order given.
pub fn place_views_road(
    input_pose: &RigidTransform,
    cloud: &PointCloud,
    offsets: &[f64],
    options: &RoadOptions,
) -> Result<ViewSet> {
    let mut views = ViewSet::single(*input_pose);
    if offsets.is_empty() {
        return Ok(views);
    }
    let road = fit_road(cloud, options)?;
    let yaw = if options.align_to_road {
        road.direction.y.atan2(road.direction.x)
    } else {
        0.0
    };
    for &s in offsets {
        let at = road.origin + road.direction * s;
        let local = compose(&RigidTransform::from_translation(at.x, at.y, 0.0), &RigidTransform::from_yaw(yaw));
        views.push(compose(input_pose, &local), format!("road{s:+}m"));
    }
    Ok(views)
}
