//! Trains the siamese network on scans from two separate worlds and compares
//! held-out place recognition against both histogram baselines.
//!
//! ```text
//! cargo run --release --example train_siamese
//! ```

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringloc::net::{forward, mine_pairs, train, ConvLayer, NetworkConfig, TrainOptions};
use ringloc::recognition::{ground_truth_matrix, precision_recall, similarity_matrix};
use ringloc::representation::fast_histogram_baseline;
use ringloc::sim::{simulate_scan, Bounds, SyntheticWorld};
use ringloc::{build_representation, HistogramConfig, Pose2, Scan, SensorModel};

fn session(world: &SyntheticWorld, cx: f64, seed: u64) -> (Vec<Scan>, Vec<Pose2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<Pose2> = (0..20)
        .map(|_| Pose2::new(cx + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.1..3.1)))
        .collect();
    let scans = poses.iter().map(|p| simulate_scan(world, p, &SensorModel::vlp16())).collect();
    (scans, poses)
}

fn f1(descriptors: &[Vec<f64>], poses: &[Pose2]) -> f64 {
    let gt = ground_truth_matrix(poses, 3.0, 0).unwrap();
    precision_recall(&similarity_matrix(descriptors, "d").unwrap(), &gt).unwrap().f1_max
}

fn main() {
    let hist = HistogramConfig::default();
    let worlds = [
        (SyntheticWorld::random(1, Bounds::new(-40.0, -40.0, 40.0, 40.0).unwrap(), 25, true), 0.0),
        (SyntheticWorld::random(2, Bounds::new(960.0, -40.0, 1040.0, 40.0).unwrap(), 25, true), 1000.0),
    ];
    let (mut scans, mut poses, mut test_scans, mut test_poses) = (vec![], vec![], vec![], vec![]);
    for (k, (w, cx)) in worlds.iter().enumerate() {
        let (s, p) = session(w, *cx, 10 + k as u64);
        scans.extend(s);
        poses.extend(p);
        let (s, p) = session(w, *cx, 20 + k as u64);
        test_scans.extend(s);
        test_poses.extend(p);
    }

    let reps: Vec<_> = scans.iter().map(|s| Arc::new(build_representation(s, &hist))).collect();
    let pairs = mine_pairs(&poses, &reps, 3.0, 20.0, 1.0, 5).unwrap();
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
    println!("{} pairs, {} parameters", pairs.len(), ringloc::net::NetworkParams::zeros(&config).unwrap().parameter_count());
    let outcome = train(&pairs, &config, &TrainOptions::default()).unwrap();
    for e in outcome.history.iter().step_by(5) {
        println!(
            "epoch {:>2}: loss {:>8.4}  mean d_w similar {:.3} dissimilar {:.3}",
            e.epoch, e.mean_loss, e.positive_mean_dw, e.negative_mean_dw
        );
    }

    let fingerprints: Vec<Vec<f64>> = test_scans
        .iter()
        .map(|s| forward(&outcome.params, &build_representation(s, &hist)).unwrap().values().to_vec())
        .collect();
    let fast: Vec<Vec<f64>> = test_scans.iter().map(|s| fast_histogram_baseline(s, &hist)).collect();
    let raw: Vec<Vec<f64>> = test_scans.iter().map(|s| build_representation(s, &hist).as_slice().to_vec()).collect();
    println!("held-out f1_max at p = 3 m");
    println!("  fingerprint      {:.3}", f1(&fingerprints, &test_poses));
    println!("  range histogram  {:.3}", f1(&fast, &test_poses));
    println!("  ring histograms  {:.3}", f1(&raw, &test_poses));
}
