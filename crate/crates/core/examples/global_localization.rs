//! Global localization on a street block: train a small network on three
//! laps, map one of them, then drop the vehicle at an unknown spot on a
//! fourth lap and let the particle filter find it.
//!
//! ```text
//! cargo run --release --example global_localization -- [start frame]
//! ```

use std::sync::Arc;

use ringloc::map::build_map;
use ringloc::mcl::{run_global_localization, MclConfig};
use ringloc::net::{mine_pairs, train, ConvLayer, NetworkConfig, TrainOptions};
use ringloc::sim::{interpolate_waypoints, noisy_odometry, simulate_scan, OdometryNoise, SyntheticWorld};
use ringloc::{build_representation, HistogramConfig, Pose2, Scan, SensorModel};

fn main() -> ringloc::Result<()> {
    let start: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let sensor = SensorModel::vlp16();
    let hist = HistogramConfig::default();
    let (w, h) = (20.0, 14.0);
    let (world, waypoints) = SyntheticWorld::street_loop(3, w, h, 6.0);
    let simulate = |poses: &[Pose2]| -> Vec<Scan> { poses.iter().map(|p| simulate_scan(&world, p, &sensor)).collect() };

    let map_poses = interpolate_waypoints(&waypoints, 1.0)?;
    let map_scans = simulate(&map_poses);
    let (mut poses, mut scans) = (map_poses.clone(), map_scans.clone());
    for (k, d) in [(1, -0.4), (2, 0.4)] {
        let phase = k as f64 / 3.0;
        let corners = [(d + phase, d), (w - d, d), (w - d, h - d), (d, h - d), (d, d), (d + phase, d)];
        let lap = interpolate_waypoints(&corners.map(|(x, y)| Pose2::new(x, y, 0.0)), 1.0)?;
        scans.extend(simulate(&lap));
        poses.extend(lap);
    }
    let reps: Vec<_> = scans.iter().map(|s| Arc::new(build_representation(s, &hist))).collect();
    let pairs = mine_pairs(&poses, &reps, 2.0, 3.0, 3.0, 5)?;
    let config = NetworkConfig {
        conv: vec![ConvLayer {
            kernel_h: 3,
            kernel_w: 3,
            channels: 4,
            pool: 4,
        }],
        hidden: vec![32],
        output_dim: 16,
        ..NetworkConfig::for_input(16, hist.bucket_count)
    };
    let opts = TrainOptions {
        learning_rate: 0.01,
        ..TrainOptions::default()
    };
    let params = train(&pairs, &config, &opts)?.params;
    let map = build_map(&map_scans, &map_poses, &params, &hist)?;
    println!("trained on {} pairs, map of {} frames", pairs.len(), map.len());

    let mut shifted = waypoints.clone();
    shifted[0] = Pose2::new(0.5, 0.0, 0.0);
    shifted.push(Pose2::new(0.5, 0.0, 0.0));
    let lap = interpolate_waypoints(&shifted, 1.0)?;
    let truth: Vec<Pose2> = (0..60).map(|k| lap[(start + k) % lap.len()]).collect();
    let noise = OdometryNoise {
        sigma_trans: 0.05,
        sigma_rot: 0.01,
    };
    let deltas = noisy_odometry(&truth, noise, 1)?;
    let stream: Vec<(Scan, Pose2)> = simulate(&truth).into_iter().zip(deltas).collect();
    let cfg = MclConfig {
        sigma_obs: 1.5,
        odometry: noise,
        ..MclConfig::default()
    };
    let steps = run_global_localization(&map, &stream, &params, &cfg, 4.0)?;
    println!("step  converged  spread  heading  error_m  error_deg  observation");
    for (k, (s, t)) in steps.iter().zip(&truth).enumerate() {
        if k % 5 != 0 && k + 1 != steps.len() {
            continue;
        }
        let e = &s.estimate;
        let obs = if s.observation.accepted {
            format!("frame {} (d_w {:.2})", s.observation.frame, s.observation.d_w)
        } else {
            "rejected".to_string()
        };
        println!(
            "{k:>4}  {:>9}  {:>6.2}  {:>7.2}  {:>7.2}  {:>9.2}  {obs}",
            e.converged,
            e.spread,
            e.heading_spread.to_degrees(),
            e.pose.distance(t),
            e.pose.heading_error(t).to_degrees()
        );
    }
    Ok(())
}
