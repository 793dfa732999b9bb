//! Simulates a drive around a street block and writes a dataset that the
//! `ringloc` binary can consume.
//!
//! ```text
//! cargo run --release --example simulate_world -- /tmp/street
//! ```

use std::path::PathBuf;

use ringloc::config::PipelineConfig;
use ringloc::pipeline::cmd_simulate;
use ringloc::sim::SyntheticWorld;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "street".into()));
    std::fs::create_dir_all(&out)?;

    let (world, waypoints) = SyntheticWorld::street_loop(3, 20.0, 14.0, 6.0);
    let world_path = out.join("street.world");
    let waypoint_path = out.join("loop.waypoints");
    let lines: String = waypoints.iter().map(|p| format!("{} {}\n", p.x, p.y)).collect();
    std::fs::write(&world_path, world.to_text())?;
    std::fs::write(&waypoint_path, lines)?;

    let cfg = PipelineConfig::default();
    let manifest = cmd_simulate(&cfg, &world_path, &waypoint_path, &out)?;
    let points: usize = manifest
        .entries
        .iter()
        .map(|e| std::fs::metadata(manifest.resolve(e)).map(|m| m.len() as usize / 16).unwrap_or(0))
        .sum();
    println!("{} landmarks, {} scans, {points} points", world.landmarks.len(), manifest.len());
    println!("manifest: {}", out.join("manifest.txt").display());
    Ok(())
}
