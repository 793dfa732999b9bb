//! Builds a prior map of a street block, saves and reloads it, then queries
//! it with scans taken half a metre off the mapped frames.

use ringloc::map::{build_map, load_map, nearest_fingerprint, save_map};
use ringloc::net::{forward, NetworkParams};
use ringloc::sim::{interpolate_waypoints, simulate_scan, SyntheticWorld};
use ringloc::{build_representation, HistogramConfig, Pose2, Scan, SensorModel};

fn main() -> ringloc::Result<()> {
    let sensor = SensorModel::vlp16();
    let hist = HistogramConfig::default();
    let (world, waypoints) = SyntheticWorld::street_loop(3, 20.0, 14.0, 6.0);
    let poses = interpolate_waypoints(&waypoints, 2.0)?;
    let scans: Vec<Scan> = poses.iter().map(|p| simulate_scan(&world, p, &sensor)).collect();

    // an untrained network is enough to show the mechanics
    let params = NetworkParams::init(&ringloc::net::NetworkConfig::for_input(16, hist.bucket_count))?;
    let mut map = build_map(&scans, &poses, &params, &hist)?;
    println!("{} frames, {} cloud points", map.len(), map.cloud().len());
    map.downsample_cloud(0.2);
    println!("cloud after 0.2 m voxel filter: {} points", map.cloud().len());

    let path = std::env::temp_dir().join("ringloc_example.llmap");
    save_map(&map, &path)?;
    let map = load_map(&path)?;
    println!("reloaded from {}", path.display());

    let self_hits = (0..map.len())
        .filter(|&i| {
            let f = forward(&params, &build_representation(&scans[i], &hist)).unwrap();
            nearest_fingerprint(&map, &f).unwrap() == (i, 0.0)
        })
        .count();
    println!("self-queries returning their own frame at d_w = 0: {self_hits}/{}", map.len());

    for along in [3.5, 11.0, 19.5] {
        let truth = Pose2::new(along, 0.5, 0.0);
        let f = forward(&params, &build_representation(&simulate_scan(&world, &truth, &sensor), &hist))?;
        let (frame, d_w) = nearest_fingerprint(&map, &f)?;
        let matched = map.frames()[frame].pose;
        println!(
            "query at ({:.1}, {:.1}) -> frame {frame} at ({:.1}, {:.1}), d_w {d_w:.3}, {:.2} m away",
            truth.x,
            truth.y,
            matched.x,
            matched.y,
            matched.distance(&truth)
        );
    }
    Ok(())
}
