//! Builds the ring-histogram image of one scan, spins the sensor and shows
//! that the image does not move.

use ringloc::representation::fast_histogram_baseline;
use ringloc::scan::rotate_scan;
use ringloc::sim::{simulate_scan, SyntheticWorld};
use ringloc::{build_representation, HistogramConfig, Pose2, SensorModel};

fn main() {
    let (world, _) = SyntheticWorld::street_loop(3, 20.0, 14.0, 6.0);
    let scan = simulate_scan(&world, &Pose2::new(10.0, 0.0, 0.0), &SensorModel::vlp16());
    let hist = HistogramConfig::default();
    let r = build_representation(&scan, &hist);
    println!("{} points in {} rings -> {}x{} image", scan.point_count(), scan.ring_count(), r.ring_count(), r.bucket_count());

    for yaw_deg in [13.0, 90.0, 179.5, -60.0] {
        let rotated = build_representation(&rotate_scan(&scan, f64::to_radians(yaw_deg)), &hist);
        let diff = r
            .as_slice()
            .iter()
            .zip(rotated.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("yaw {yaw_deg:>6} deg: max |R - R'| = {diff:.1e}");
    }

    // the lowest ring sees mostly ground, so its mass sits in the first buckets
    let row = r.row(0);
    let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    println!(
        "ring 0: mass {:.3}, peak bucket {peak} [{:.2}, {:.2}) m",
        row.iter().sum::<f64>(),
        hist.edge(peak),
        hist.edge(peak + 1)
    );
    let fast = fast_histogram_baseline(&scan, &hist);
    println!("range histogram baseline: mass {:.3} over {} buckets", fast.iter().sum::<f64>(), fast.len());
}
