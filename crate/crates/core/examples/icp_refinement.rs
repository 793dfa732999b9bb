//! Refines a coarse pose against the prior map's point cloud and prints the
//! per-iteration registration error.

use ringloc::icp::{refine_pose, IcpConfig, IcpTarget};
use ringloc::map::build_map;
use ringloc::net::{NetworkConfig, NetworkParams};
use ringloc::sim::{interpolate_waypoints, simulate_scan, SyntheticWorld};
use ringloc::{HistogramConfig, Point3, Pose2, Scan, SensorModel};

fn main() -> ringloc::Result<()> {
    let sensor = SensorModel::vlp16();
    let hist = HistogramConfig::default();
    let (world, waypoints) = SyntheticWorld::street_loop(3, 20.0, 14.0, 6.0);
    let poses = interpolate_waypoints(&waypoints, 2.0)?;
    let scans: Vec<Scan> = poses.iter().map(|p| simulate_scan(&world, p, &sensor)).collect();
    let params = NetworkParams::init(&NetworkConfig::for_input(16, hist.bucket_count))?;
    let map = build_map(&scans, &poses, &params, &hist)?;

    let cfg = IcpConfig::default();
    let target = IcpTarget::from_map_cloud(map.cloud(), &cfg)?;
    println!("map cloud {} points, {} after voxel filter", map.cloud().len(), target.points().len());

    let truth = Pose2::new(13.3, 0.4, 0.02);
    let scan: Vec<Point3> = simulate_scan(&world, &truth, &sensor).points().copied().collect();
    let coarse = Pose2::new(truth.x + 0.6, truth.y - 0.3, truth.yaw + 4f64.to_radians());
    println!(
        "coarse estimate: {:.3} m, {:.2} deg off",
        coarse.distance(&truth),
        coarse.heading_error(&truth).to_degrees()
    );

    let (refined, result) = refine_pose(&scan, &target, &coarse, &cfg)?;
    for (k, it) in result.history.iter().enumerate().filter(|(k, _)| k % 10 == 0) {
        println!(
            "iteration {:>2}: rmse {:.4} m, truncated objective {:.4} m, {} correspondences",
            k + 1,
            it.rmse,
            it.objective,
            it.correspondences
        );
    }
    // ground rings seen from the mapped poses never line up point for point
    // with a new pose, so a residual of a decimetre or so remains
    println!(
        "refined: {:.3} m, {:.2} deg off (converged {}, final rmse {:.4} m)",
        refined.distance(&truth),
        refined.heading_error(&truth).to_degrees(),
        result.converged,
        result.rmse
    );
    Ok(())
}
