//! Exhaustive place-recognition evaluation of a driven loop against itself:
//! similarity matrix, precision-recall sweep and the distance travelled
//! between successful localizations. CSVs go to the directory given as the
//! first argument.
//!
//! ```text
//! cargo run --release --example place_recognition_eval -- /tmp/eval
//! ```

use std::path::PathBuf;

use ringloc::recognition::{
    ground_truth_matrix, localization_probability_curve, nearest_neighbor_pr, precision_recall, similarity_matrix,
};
use ringloc::sim::{interpolate_waypoints, simulate_scan, SyntheticWorld};
use ringloc::{build_representation, HistogramConfig, Pose2, SensorModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "eval".into()));
    std::fs::create_dir_all(&out)?;
    let sensor = SensorModel::vlp16();
    let hist = HistogramConfig::default();
    let (world, mut waypoints) = SyntheticWorld::street_loop(3, 20.0, 14.0, 6.0);
    // two laps, the second shifted half a metre along the street
    let first = interpolate_waypoints(&waypoints, 1.0)?;
    waypoints[0] = Pose2::new(0.5, 0.0, 0.0);
    waypoints.push(Pose2::new(0.5, 0.0, 0.0));
    let poses: Vec<Pose2> = first.into_iter().chain(interpolate_waypoints(&waypoints, 1.0)?).collect();
    let descriptors: Vec<Vec<f64>> = poses
        .iter()
        .map(|p| build_representation(&simulate_scan(&world, p, &sensor), &hist).as_slice().to_vec())
        .collect();

    let sim = similarity_matrix(&descriptors, "ring_histogram")?;
    std::fs::write(out.join("similarity.csv"), sim.to_csv())?;
    // neighbours within five frames do not count as revisits
    let gt = ground_truth_matrix(&poses, 3.0, 5)?;
    println!("{} frames, {} revisit pairs", poses.len(), gt.positive_pairs());

    let pr = precision_recall(&sim, &gt)?;
    std::fs::write(out.join("pr.csv"), pr.to_csv())?;
    println!("all-pairs sweep: f1_max {:.3} at tau {:.4}", pr.f1_max, pr.tau_star);
    let nn = nearest_neighbor_pr(&descriptors, &gt)?;
    println!("nearest-neighbour sweep: f1_max {:.3} at tau {:.4}", nn.f1_max, nn.tau_star);

    // second lap against the first: success when the best first-lap frame is within 3 m
    let half = poses.len() / 2;
    let mut travel = 0.0;
    let mut entries = Vec::new();
    for i in half..poses.len() {
        if i > half {
            travel += poses[i - 1].distance(&poses[i]);
        }
        let best = (0..half).min_by(|&a, &b| sim.get(i, a).total_cmp(&sim.get(i, b))).unwrap();
        entries.push((travel, sim.get(i, best) <= pr.tau_star && poses[best].distance(&poses[i]) < 3.0));
    }
    let curve = localization_probability_curve(&entries)?;
    std::fs::write(out.join("loc_probability.csv"), curve.to_csv(1.0, 20.0))?;
    for d in [0.0, 1.0, 5.0, 20.0] {
        println!("P(localized within {d:>4} m) = {:.3}", curve.probability_within(d));
    }
    println!("CSVs in {}", out.display());
    Ok(())
}
