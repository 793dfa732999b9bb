//! Point-to-point ICP with closed-form SVD alignment, used to refine the
//! filter's 2D pose against the map cloud.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose2, RigidTransform3};
use crate::kdtree::KdTree;
use crate::map::voxel_downsample;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the residual changes by less than this between iterations.
    pub epsilon: f64,
    pub max_correspondence_distance: f64,
    pub min_correspondences: usize,
    /// Voxel size applied to a map cloud before indexing; `None` keeps every point.
    pub target_voxel: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            epsilon: 1e-10,
            max_correspondence_distance: 2.0,
            min_correspondences: 3,
            target_voxel: Some(0.2),
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.min_correspondences == 0 {
            return Err(Error::Config("ICP iteration and correspondence counts must be positive".into()));
        }
        if !(self.epsilon > 0.0) || !(self.max_correspondence_distance > 0.0) {
            return Err(Error::Config("ICP epsilon and max distance must be positive".into()));
        }
        if let Some(v) = self.target_voxel {
            if !(v > 0.0) {
                return Err(Error::Config(format!("voxel size must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-iteration record. `objective` is the RMS over all source points of
/// the nearest-neighbor distance clamped at the rejection radius, taken
/// before the iteration's alignment; it never increases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpIteration {
    pub objective: f64,
    pub rmse: f64,
    pub correspondences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform3,
    /// RMS residual over the final correspondences.
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IcpIteration>,
}

/// An indexed target cloud, reusable across refinements.
#[derive(Debug, Clone)]
pub struct IcpTarget {
    points: Vec<Point3>,
    tree: KdTree,
}

impl IcpTarget {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyScan);
        }
        let tree = KdTree::from_points(&points);
        Ok(Self { points, tree })
    }

    /// Applies the configured voxel filter before indexing.
    pub fn from_map_cloud(cloud: &[Point3], cfg: &IcpConfig) -> Result<Self> {
        match cfg.target_voxel {
            Some(v) => Self::new(voxel_downsample(cloud, v)),
            None => Self::new(cloud.to_vec()),
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }
}

/// Least-squares rigid motion taking `source[i]` onto `target[i]`.
pub fn align_points(source: &[Point3], target: &[Point3]) -> Result<RigidTransform3> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            actual: target.len(),
        });
    }
    if source.is_empty() {
        return Err(Error::EmptyScan);
    }
    let n = source.len() as f64;
    let cs = source.iter().fold(Vector3::zeros(), |a, p| a + p.to_vector()) / n;
    let ct = target.iter().fold(Vector3::zeros(), |a, p| a + p.to_vector()) / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s.to_vector() - cs) * (t.to_vector() - ct).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::NonFinite { layer: "icp alignment".into() }),
    };
    let mut v = v_t.transpose();
    if (v * u.transpose()).determinant() < 0.0 {
        v.column_mut(2).neg_mut();
    }
    let rotation = v * u.transpose();
    let translation = ct - rotation * cs;
    RigidTransform3::new(rotation, translation)
}

fn nearest_all(source: &[Point3], target: &IcpTarget, transform: &RigidTransform3) -> Vec<(Point3, usize, f64)> {
    source
        .par_iter()
        .map(|p| {
            let moved = transform.apply(p);
            let nn = target.tree.nearest(&moved.as_array()).expect("target is nonempty");
            (moved, nn.index, nn.dist_sq)
        })
        .collect()
}

pub fn icp(source: &[Point3], target: &[Point3], init: &RigidTransform3, cfg: &IcpConfig) -> Result<IcpResult> {
    icp_with_target(source, &IcpTarget::new(target.to_vec())?, init, cfg)
}

pub fn icp_with_target(source: &[Point3], target: &IcpTarget, init: &RigidTransform3, cfg: &IcpConfig) -> Result<IcpResult> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyScan);
    }
    init.validate()?;
    let r2 = cfg.max_correspondence_distance.powi(2);
    let mut transform = *init;
    let mut history = Vec::new();
    let mut previous: Option<f64> = None;
    let mut converged = false;
    while history.len() < cfg.max_iterations {
        let nn = nearest_all(source, target, &transform);
        let objective = (nn.iter().map(|&(_, _, d2)| d2.min(r2)).sum::<f64>() / nn.len() as f64).sqrt();
        let (moved, matched): (Vec<Point3>, Vec<Point3>) = nn
            .iter()
            .filter(|&&(_, _, d2)| d2 <= r2)
            .map(|&(m, j, _)| (m, target.points[j]))
            .unzip();
        if moved.len() < cfg.min_correspondences {
            return Err(Error::NoOverlap {
                found: moved.len(),
                required: cfg.min_correspondences,
            });
        }
        let step = align_points(&moved, &matched)?;
        transform = step.compose(&transform);
        transform.validate()?;
        let residual = moved
            .iter()
            .zip(&matched)
            .map(|(m, t)| {
                let d = step.apply(m).to_vector() - t.to_vector();
                d.norm_squared()
            })
            .sum::<f64>();
        let rmse = (residual / moved.len() as f64).sqrt();
        history.push(IcpIteration {
            objective,
            rmse,
            correspondences: moved.len(),
        });
        let done = rmse <= cfg.epsilon || previous.is_some_and(|p: f64| (p - rmse).abs() < cfg.epsilon);
        previous = Some(rmse);
        if done {
            converged = true;
            break;
        }
    }
    let nn = nearest_all(source, target, &transform);
    let kept: Vec<f64> = nn.iter().map(|&(_, _, d2)| d2).filter(|&d2| d2 <= r2).collect();
    if kept.len() < cfg.min_correspondences {
        return Err(Error::NoOverlap {
            found: kept.len(),
            required: cfg.min_correspondences,
        });
    }
    Ok(IcpResult {
        transform,
        rmse: (kept.iter().sum::<f64>() / kept.len() as f64).sqrt(),
        iterations: history.len(),
        converged,
        history,
    })
}

pub fn pose2_to_transform(p: &Pose2) -> RigidTransform3 {
    RigidTransform3::from_yaw_translation(p.yaw, Vector3::new(p.x, p.y, 0.0))
}

/// Planar projection: translation x, y and the yaw of the rotation.
pub fn transform_to_pose2(t: &RigidTransform3) -> Pose2 {
    Pose2::new(t.translation().x, t.translation().y, t.yaw())
}

/// RMS nearest-neighbor distance after moving `source` by `transform`.
pub fn registration_rmse(source: &[Point3], target: &KdTree, transform: &RigidTransform3) -> Result<f64> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyScan);
    }
    let total: f64 = source
        .iter()
        .map(|p| target.nearest(&transform.apply(p).as_array()).expect("nonempty").dist_sq)
        .sum();
    Ok((total / source.len() as f64).sqrt())
}

/// Refines a sensor pose by registering the scan (sensor frame) against the
/// map cloud (map frame).
pub fn refine_pose(scan_points: &[Point3], target: &IcpTarget, pose: &Pose2, cfg: &IcpConfig) -> Result<(Pose2, IcpResult)> {
    let result = icp_with_target(scan_points, target, &pose2_to_transform(pose), cfg)?;
    Ok((transform_to_pose2(&result.transform), result))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn cloud(seed: u64, n: usize) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..2.0)))
            .collect()
    }

    fn rotation_z(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn svd_alignment_recovers_known_transform() {
        let src = cloud(1, 50);
        let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 0.7);
        let truth = RigidTransform3::new(*rot.matrix(), Vector3::new(1.0, -2.0, 0.5)).unwrap();
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = align_points(&src, &dst).unwrap();
        assert!((est.rotation() - truth.rotation()).abs().max() < 1e-9);
        assert!((est.translation() - truth.translation()).abs().max() < 1e-9);
    }

    #[test]
    fn reflection_guard_on_coplanar_points() {
        let src: Vec<Point3> = (0..20).map(|k| Point3::new((k % 5) as f64, (k / 5) as f64, 0.0)).collect();
        let truth = RigidTransform3::new(rotation_z(0.4), Vector3::new(0.5, 0.1, 0.0)).unwrap();
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = align_points(&src, &dst).unwrap();
        assert!((est.rotation().determinant() - 1.0).abs() < 1e-9);
        assert!((est.rotation() - truth.rotation()).abs().max() < 1e-9);
    }

    #[test]
    fn identical_clouds_take_one_iteration() {
        let src = cloud(2, 200);
        let r = icp(&src, &src, &RigidTransform3::identity(), &IcpConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert!(r.rmse < 1e-12);
        assert!((r.transform.rotation() - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn recovers_small_rigid_motion() {
        let src = cloud(3, 800);
        let truth = RigidTransform3::new(rotation_z(5f64.to_radians()), Vector3::new(0.3, -0.2, 0.0)).unwrap();
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let r = icp(&src, &dst, &RigidTransform3::identity(), &IcpConfig::default()).unwrap();
        assert!((r.transform.translation() - truth.translation()).norm() < 1e-3);
        assert!((r.transform.yaw() - truth.yaw()).abs().to_degrees() < 0.02);
        assert!(r.rmse < 1e-6);
        for w in r.history.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
    }

    #[test]
    fn disjoint_clouds_have_no_overlap() {
        let src = cloud(4, 100);
        let far: Vec<Point3> = src.iter().map(|p| Point3::new(p.x + 100.0, p.y, p.z)).collect();
        let cfg = IcpConfig {
            max_correspondence_distance: 1.0,
            ..IcpConfig::default()
        };
        assert!(matches!(icp(&src, &far, &RigidTransform3::identity(), &cfg), Err(Error::NoOverlap { .. })));
    }

    #[test]
    fn pose_conversions() {
        let id = pose2_to_transform(&Pose2::identity());
        assert_eq!(*id.rotation(), Matrix3::identity());
        let half = pose2_to_transform(&Pose2::new(0.0, 0.0, std::f64::consts::PI));
        assert!((half.rotation() - Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0))).abs().max() < 1e-15);
        let t = RigidTransform3::new(rotation_z(1.1), Vector3::new(3.0, -4.0, 0.0)).unwrap();
        let back = pose2_to_transform(&transform_to_pose2(&t));
        assert!((back.rotation() - t.rotation()).abs().max() < 1e-15);
        assert_eq!(back.translation(), t.translation());
    }

    #[test]
    fn registration_rmse_examples() {
        let target = cloud(5, 300);
        let tree = KdTree::from_points(&target);
        assert_eq!(registration_rmse(&target, &tree, &RigidTransform3::identity()).unwrap(), 0.0);

        // dense plane z = 0; shifting by (0.3, 0.2, 1) leaves ≈ 1 m normal offset
        let plane: Vec<Point3> = (0..101 * 101).map(|k| Point3::new((k % 101) as f64 * 0.05, (k / 101) as f64 * 0.05, 0.0)).collect();
        let ptree = KdTree::from_points(&plane);
        let src: Vec<Point3> = (0..50).map(|k| Point3::new(1.0 + (k % 10) as f64 * 0.3, 1.0 + (k / 10) as f64 * 0.3, 0.0)).collect();
        let shift = RigidTransform3::new(Matrix3::identity(), Vector3::new(0.3, 0.2, 1.0)).unwrap();
        let r = registration_rmse(&src, &ptree, &shift).unwrap();
        assert!((r - 1.0).abs() < 1e-3, "{r}");

        let src = cloud(6, 40);
        let t = RigidTransform3::new(rotation_z(0.2), Vector3::new(0.1, 0.0, 0.3)).unwrap();
        let brute = (src
            .iter()
            .map(|p| {
                let q = t.apply(p);
                target
                    .iter()
                    .map(|s| (q.to_vector() - s.to_vector()).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / 40.0)
            .sqrt();
        assert!((registration_rmse(&src, &tree, &t).unwrap() - brute).abs() < 1e-12);
    }
}
