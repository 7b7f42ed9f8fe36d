use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

use simdiff::geometry::{compose, invert, relative_transform, transform_cloud};
use simdiff::io::{decode_cloud_bin, decode_range_image, encode_cloud_bin, encode_range_image};
use simdiff::metrics::{completion_score, mae};
use simdiff::projection::{backproject, project};
use simdiff::recast::ViewSet;
use simdiff::sampler::{blend, consistency_project_detailed};
use simdiff::{DenseImage, NoiseSchedule, Point3, PointCloud, RangeImage, RigidTransform, SamplerConfig, SensorModel, WorldPointSet};

fn pose() -> impl Strategy<Value = RigidTransform> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -std::f64::consts::PI..std::f64::consts::PI,
        prop::array::uniform3(-50.0f64..50.0),
    )
        .prop_map(|(axis, angle, t)| {
            let axis = Vector3::from(axis);
            let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis.normalize() };
            let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            RigidTransform::new(*r.matrix(), Vector3::from(t)).unwrap()
        })
}

fn point() -> impl Strategy<Value = Point3> {
    prop::array::uniform3(-60.0f64..60.0).prop_map(Point3::from)
}

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((point(), 0.0f64..=255.0), 0..max).prop_map(|v| {
        let (p, r): (Vec<_>, Vec<_>) = v.into_iter().unzip();
        PointCloud::new(p, r, "s").unwrap()
    })
}

fn small_sensor() -> SensorModel {
    SensorModel::new(8, 32, 3.0, 25.0, 6.0, 1.0, 80.0).unwrap()
}

fn dense(h: usize, w: usize) -> impl Strategy<Value = DenseImage> {
    prop::collection::vec(0.0f32..1.1, h * w * 2).prop_map(move |d| DenseImage::from_vec(h, w, d).unwrap())
}

fn world_set(max: usize) -> impl Strategy<Value = WorldPointSet> {
    prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..max).prop_map(|v| {
        let n = v.len();
        WorldPointSet {
            points: v.into_iter().map(Point3::from).collect(),
            remissions: vec![0.0; n],
            source_view: vec![0; n],
        }
    })
}

proptest! {
    #[test]
    fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
        let l = compose(&compose(&a, &b), &c);
        let r = compose(&a, &compose(&b, &c));
        prop_assert!(l.max_abs_diff(&r) < 1e-9);
    }

    #[test]
    fn inverse_cancels(a in pose(), p in point()) {
        prop_assert!(compose(&a, &invert(&a)).max_abs_diff(&RigidTransform::identity()) < 1e-9);
        prop_assert!((invert(&a).apply(&a.apply(&p)) - p).norm() < 1e-9);
    }

    #[test]
    fn relative_transform_chains(a in pose(), b in pose(), p in point()) {
        // a point in b's frame, seen from a, is the same world point
        let q = relative_transform(&a, &b).apply(&p);
        prop_assert!((a.apply(&q) - b.apply(&p)).norm() < 1e-8);
    }

    #[test]
    fn transforms_preserve_distances(t in pose(), c in cloud(30)) {
        let moved = transform_cloud(&t, &c);
        prop_assert_eq!(moved.len(), c.len());
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let d0 = (c.points()[i] - c.points()[j]).norm();
                let d1 = (moved.points()[i] - moved.points()[j]).norm();
                prop_assert!((d0 - d1).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zbuffer_keeps_the_nearest_point(c in cloud(200)) {
        let s = small_sensor();
        let img = project(&c, &s);
        let mut best = vec![f64::INFINITY; 8 * 32];
        for p in c.points() {
            if let Some((u, v, d)) = s.pixel_of(p) {
                if s.accepts(v * 32 + u, d) {
                    best[v * 32 + u] = best[v * 32 + u].min(d);
                }
            }
        }
        for (i, b) in best.iter().enumerate() {
            prop_assert_eq!(img.valid()[i], b.is_finite());
            if b.is_finite() {
                prop_assert_eq!(img.depth()[i], s.normalize_depth(*b) as f32);
            }
        }
    }

    #[test]
    fn reprojection_is_stable(c in cloud(200)) {
        // projecting backprojected pixels lands every point on its own pixel again
        let s = small_sensor();
        let img = project(&c, &s);
        let again = project(&backproject(&img, &s).unwrap(), &s);
        prop_assert_eq!(again.valid(), img.valid());
        for i in 0..8 * 32 {
            prop_assert!((again.depth()[i] - img.depth()[i]).abs() <= 1e-6);
        }
    }

    #[test]
    fn blend_stays_between_inputs(a in dense(4, 8), b in dense(4, 8), omega in 0.0f64..=1.0) {
        let m = blend(&a, &b, omega).unwrap();
        for ((&x, &y), &z) in a.data().iter().zip(b.data()).zip(m.data()) {
            prop_assert!(x.min(y) <= z && z <= x.max(y));
        }
    }

    #[test]
    fn smaller_delta_reverts_more(
        a in dense(8, 32),
        b in dense(8, 32),
        t in pose(),
        d1 in 0.1f64..20.0,
        d2 in 0.1f64..20.0,
    ) {
        let s = small_sensor();
        let views = ViewSet::new(vec![RigidTransform::identity(), t], vec!["0".into(), "1".into()]).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let mut cfg = SamplerConfig::new(NoiseSchedule::linear_for_steps(2).unwrap());
        cfg.delta = lo;
        let r_lo = consistency_project_detailed(&[a.clone(), b.clone()], &views, &s, &cfg).unwrap().reverted;
        cfg.delta = hi;
        let r_hi = consistency_project_detailed(&[a, b], &views, &s, &cfg).unwrap().reverted;
        for (x, y) in r_lo.iter().flatten().zip(r_hi.iter().flatten()) {
            prop_assert!(*x || !*y);
        }
    }

    #[test]
    fn completion_is_monotone_in_tau(a in world_set(60), b in world_set(60), t1 in 0.01f64..2.0, t2 in 0.01f64..2.0) {
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let s_lo = completion_score(&a, &b, lo).unwrap();
        let s_hi = completion_score(&a, &b, hi).unwrap();
        prop_assert!(s_lo.accuracy <= s_hi.accuracy);
        prop_assert!(s_lo.completeness <= s_hi.completeness);
    }

    #[test]
    fn completion_matches_brute_force_and_is_symmetric(a in world_set(120), b in world_set(120), tau in 0.01f64..1.5) {
        let s = completion_score(&a, &b, tau).unwrap();
        let pct = |x: &[Point3], y: &[Point3]| {
            100.0 * x.iter().filter(|p| y.iter().any(|q| (*p - q).norm() <= tau)).count() as f64 / x.len() as f64
        };
        prop_assert_eq!(s.accuracy, pct(&a.points, &b.points));
        prop_assert_eq!(s.completeness, pct(&b.points, &a.points));
        let r = completion_score(&b, &a, tau).unwrap();
        prop_assert_eq!(r.accuracy, s.completeness);
        prop_assert_eq!(r.completeness, s.accuracy);
        prop_assert_eq!(r.f1, s.f1);
    }

    #[test]
    fn mae_obeys_triangle_inequality(
        a in prop::collection::vec((0.05f32..1.0, 0.0f32..1.0), 64),
        b in prop::collection::vec((0.05f32..1.0, 0.0f32..1.0), 64),
        c in prop::collection::vec((0.05f32..1.0, 0.0f32..1.0), 64),
    ) {
        let s = SensorModel::new(4, 16, 3.0, 25.0, 6.0, 0.0, 80.0).unwrap();
        let img = |v: &[(f32, f32)]| {
            let (d, r): (Vec<_>, Vec<_>) = v.iter().copied().unzip();
            RangeImage::from_planes(4, 16, d, r, vec![true; 64]).unwrap()
        };
        let (a, b, c) = (img(&a), img(&b), img(&c));
        let ac = mae(&a, &c, &s).unwrap().depth_mae;
        let ab = mae(&a, &b, &s).unwrap().depth_mae;
        let bc = mae(&b, &c, &s).unwrap().depth_mae;
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn cloud_files_roundtrip(recs in prop::collection::vec((prop::array::uniform3(-1e3f32..1e3), 0.0f32..=1.0), 0..100)) {
        let mut bytes = Vec::new();
        for (p, r) in &recs {
            for v in [p[0], p[1], p[2], *r] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        prop_assert_eq!(encode_cloud_bin(&decode_cloud_bin(&bytes).unwrap()), bytes);
    }

    #[test]
    fn range_image_files_roundtrip(h in 1usize..10, w in 1usize..20, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut img = RangeImage::invalid(h, w);
        for v in 0..h {
            for u in 0..w {
                if rng.random_bool(0.6) {
                    img.set(v, u, rng.random(), rng.random());
                }
            }
        }
        let bytes = encode_range_image(&img).unwrap();
        let back = decode_range_image(&bytes).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(encode_range_image(&back).unwrap(), bytes);
    }
}
