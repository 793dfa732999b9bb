//! The end-to-end commands behind the `ringloc` binary. Each command reads
//! its inputs from files, derives every random stream from the config seed
//! and writes plain CSV, so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{PipelineConfig, Stage};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::icp::{refine_pose, IcpTarget};
use crate::manifest::{Manifest, ManifestEntry};
use crate::map::{build_map, load_map, save_map, PriorMap};
use crate::mcl::{run_global_localization, MclStep};
use crate::net::{forward, history_csv, load_checkpoint, mine_pairs, save_checkpoint, train, NetworkParams, TrainingOutcome};
use crate::recognition::{
    ground_truth_matrix, localization_gaps, precision_recall, recognize, similarity_matrix, LocalizationCurve, MatchResult, PrCurve,
};
use crate::representation::{build_representation, fast_histogram_baseline, RangeHistogramImage};
use crate::scan::{load_scan_file, write_kitti_points, Scan};
use crate::sim::{parse_waypoints, simulate_trajectory, SyntheticWorld};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads every scan of a manifest, in order.
pub fn load_scans(manifest: &Manifest, cfg: &PipelineConfig) -> Result<Vec<Scan>> {
    let sensor = cfg.sensor_model()?;
    manifest
        .entries
        .par_iter()
        .map(|e| load_scan_file(&manifest.resolve(e), &sensor))
        .collect()
}

/// Loads a checkpoint and checks it accepts this config's representation.
pub fn load_network(path: &Path, cfg: &PipelineConfig) -> Result<NetworkParams> {
    let params = load_checkpoint(path, None)?;
    let n = params.config();
    let expected = (cfg.sensor.rings, cfg.histogram.buckets);
    if (n.input_rings, n.input_buckets) != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: (n.input_rings, n.input_buckets),
        });
    }
    Ok(params)
}

/// Simulates a drive along the waypoints through the world, writing one
/// KITTI-format scan per frame under `out/scans` and `out/manifest.txt`.
pub fn cmd_simulate(cfg: &PipelineConfig, world: &Path, waypoints: &Path, out: &Path) -> Result<Manifest> {
    let world = SyntheticWorld::parse(&read_text(world)?)?;
    let waypoints = parse_waypoints(&read_text(waypoints)?)?;
    let samples = simulate_trajectory(
        &world,
        &waypoints,
        cfg.simulate.step,
        cfg.odometry_noise(),
        &cfg.sensor_model()?,
        cfg.stage_seed(Stage::Simulate),
    )?;
    let mut manifest = Manifest {
        entries: Vec::with_capacity(samples.len()),
        base_dir: out.to_path_buf(),
    };
    for (i, s) in samples.iter().enumerate() {
        let rel = PathBuf::from(format!("scans/{i:06}.bin"));
        write(&out.join(&rel), write_kitti_points(s.scan.points()))?;
        manifest.entries.push(ManifestEntry {
            scan_path: rel,
            pose: s.true_pose,
            odom_delta: Some(s.odom_delta),
        });
    }
    write(&out.join("manifest.txt"), manifest.to_text())?;
    Ok(manifest)
}

/// Mines pairs across all given sessions, trains, and writes the checkpoint
/// plus a per-epoch log.
pub fn cmd_train(cfg: &PipelineConfig, manifests: &[Manifest], checkpoint: &Path, log: &Path) -> Result<TrainingOutcome> {
    let hist = cfg.histogram_config()?;
    let mut poses = Vec::new();
    let mut reps = Vec::new();
    for m in manifests {
        poses.extend(m.poses());
        reps.extend(
            load_scans(m, cfg)?
                .par_iter()
                .map(|s| Arc::new(build_representation(s, &hist)))
                .collect::<Vec<_>>(),
        );
    }
    let t = &cfg.training;
    let pairs = mine_pairs(&poses, &reps, t.p_pos, t.p_neg, t.negative_ratio, cfg.stage_seed(Stage::Pairs))?;
    let outcome = train(&pairs, &cfg.network_config()?, &cfg.train_options())?;
    save_checkpoint(&outcome.params, checkpoint)?;
    write(log, history_csv(&outcome.history))?;
    Ok(outcome)
}

pub fn cmd_build_map(cfg: &PipelineConfig, manifest: &Manifest, checkpoint: &Path, out: &Path) -> Result<PriorMap> {
    let params = load_network(checkpoint, cfg)?;
    let scans = load_scans(manifest, cfg)?;
    let mut map = build_map(&scans, &manifest.poses(), &params, &cfg.histogram_config()?)?;
    map.set_sources(manifest.entries.iter().map(|e| e.scan_path.display().to_string()));
    save_map(&map, out)?;
    Ok(map)
}

/// Headline numbers of an evaluation run; the curves themselves go to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// `(descriptor, p, f1_max, tau_star)` rows.
    pub f1_table: Vec<(String, f64, f64, f64)>,
    pub fingerprint_pr: PrCurve,
    pub localization: Option<LocalizationCurve>,
}

fn descriptors(scans: &[Scan], params: &NetworkParams, cfg: &PipelineConfig) -> Result<[(String, Vec<Vec<f64>>); 3]> {
    let hist = cfg.histogram_config()?;
    let reps: Vec<RangeHistogramImage> = scans.par_iter().map(|s| build_representation(s, &hist)).collect();
    let fingerprints = reps
        .par_iter()
        .map(|r| forward(params, r).map(|f| f.values().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok([
        ("fingerprint".to_string(), fingerprints),
        ("fast_histogram".to_string(), scans.par_iter().map(|s| fast_histogram_baseline(s, &hist)).collect()),
        ("ring_histogram".to_string(), reps.iter().map(|r| r.as_slice().to_vec()).collect()),
    ])
}

/// Cumulative path length along the poses.
fn travel(poses: &[Pose2]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(poses.len());
    for (i, p) in poses.iter().enumerate() {
        if i > 0 {
            acc += poses[i - 1].distance(p);
        }
        out.push(acc);
    }
    out
}

/// Exhaustive place-recognition evaluation of one session: similarity
/// matrices and PR curves for the learned fingerprint and both baselines, an
/// F1-max table over the configured thresholds and, when a reference map is
/// given, the localization-probability curve of matching against it.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    manifest: &Manifest,
    checkpoint: &Path,
    reference: Option<&Path>,
    out: &Path,
) -> Result<EvaluationReport> {
    let params = load_network(checkpoint, cfg)?;
    let scans = load_scans(manifest, cfg)?;
    let poses = manifest.poses();
    let ev = &cfg.evaluate;
    let mut f1_table = Vec::new();
    let mut table = String::from("descriptor,p,f1_max,tau_star\n");
    let mut fingerprint_pr = None;
    for (name, desc) in descriptors(&scans, &params, cfg)? {
        let sim = similarity_matrix(&desc, &name)?;
        if name == "fingerprint" {
            write(&out.join("similarity_fingerprint.csv"), sim.to_csv())?;
        }
        let main = precision_recall(&sim, &ground_truth_matrix(&poses, ev.p, ev.exclusion)?)?;
        write(&out.join(format!("pr_{name}.csv")), main.to_csv())?;
        for &p in &ev.thresholds {
            match precision_recall(&sim, &ground_truth_matrix(&poses, p, ev.exclusion)?) {
                Ok(pr) => {
                    writeln!(table, "{name},{p},{},{}", pr.f1_max, pr.tau_star).expect("string write");
                    f1_table.push((name.clone(), p, pr.f1_max, pr.tau_star));
                }
                Err(Error::NoPositivePairs) => writeln!(table, "{name},{p},,").expect("string write"),
                Err(e) => return Err(e),
            }
        }
        if name == "fingerprint" {
            fingerprint_pr = Some(main);
        }
    }
    write(&out.join("f1_table.csv"), table)?;

    let localization = match reference {
        Some(path) => {
            let map = load_map(path)?;
            let matches = scans
                .par_iter()
                .map(|s| recognize(&map, s, &params, cfg.tau))
                .collect::<Result<Vec<_>>>()?;
            let entries: Vec<(f64, bool)> = travel(&poses)
                .into_iter()
                .zip(&matches)
                .zip(&poses)
                .map(|((t, m), p)| (t, m.accepted && m.observation.distance(p) < ev.p))
                .collect();
            let curve = LocalizationCurve::from_gaps(localization_gaps(&entries)?);
            write(&out.join("loc_probability.csv"), curve.to_csv(1.0, ev.curve_max))?;
            Some(curve)
        }
        None => None,
    };
    Ok(EvaluationReport {
        f1_table,
        fingerprint_pr: fingerprint_pr.expect("fingerprint descriptor is always evaluated"),
        localization,
    })
}

pub fn recognition_csv(names: &[String], matches: &[MatchResult]) -> String {
    let mut out = String::from("scan,frame,d_w,x,y,yaw,accepted\n");
    for (n, m) in names.iter().zip(matches) {
        let o = m.observation;
        writeln!(out, "{n},{},{},{},{},{},{}", m.frame, m.d_w, o.x, o.y, o.yaw, u8::from(m.accepted)).expect("string write");
    }
    out
}

/// Matches individual scan files against the map.
pub fn cmd_recognize(cfg: &PipelineConfig, map: &Path, checkpoint: &Path, scans: &[PathBuf], out: &Path) -> Result<Vec<MatchResult>> {
    let map = load_map(map)?;
    let params = load_network(checkpoint, cfg)?;
    let sensor = cfg.sensor_model()?;
    let matches = scans
        .par_iter()
        .map(|p| recognize(&map, &load_scan_file(p, &sensor)?, &params, cfg.tau))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = scans.iter().map(|p| p.display().to_string()).collect();
    write(out, recognition_csv(&names, &matches))?;
    Ok(matches)
}

/// One localization step with its optional ICP refinement and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeRecord {
    pub mcl: MclStep,
    /// Refined pose and registration RMSE, once the filter has converged.
    pub icp: Option<(Pose2, f64)>,
    pub truth: Pose2,
}

impl LocalizeRecord {
    pub fn location_error(&self) -> f64 {
        self.mcl.estimate.pose.distance(&self.truth)
    }

    pub fn heading_error(&self) -> f64 {
        self.mcl.estimate.pose.heading_error(&self.truth)
    }
}

pub fn localize_csv(records: &[LocalizeRecord]) -> String {
    let mut out = String::from(
        "step,est_x,est_y,est_yaw,spread,heading_spread,converged,obs_accepted,obs_frame,obs_dw,obs_x,obs_y,\
         icp_x,icp_y,icp_yaw,icp_rmse,true_x,true_y,true_yaw,location_error,heading_error,icp_location_error,icp_heading_error\n",
    );
    for (k, r) in records.iter().enumerate() {
        let e = &r.mcl.estimate;
        let o = &r.mcl.observation;
        write!(
            out,
            "{k},{},{},{},{},{},{},{},{},{},{},{},",
            e.pose.x,
            e.pose.y,
            e.pose.yaw,
            e.spread,
            e.heading_spread,
            u8::from(e.converged),
            u8::from(o.accepted),
            o.frame,
            o.d_w,
            o.observation.x,
            o.observation.y
        )
        .expect("string write");
        match r.icp {
            Some((p, rmse)) => write!(out, "{},{},{},{rmse},", p.x, p.y, p.yaw),
            None => write!(out, ",,,,"),
        }
        .expect("string write");
        write!(out, "{},{},{},{},{},", r.truth.x, r.truth.y, r.truth.yaw, r.location_error(), r.heading_error()).expect("string write");
        match r.icp {
            Some((p, _)) => writeln!(out, "{},{}", p.distance(&r.truth), p.heading_error(&r.truth)),
            None => writeln!(out, ","),
        }
        .expect("string write");
    }
    out
}

/// Counts of location (0.1 m bins) and heading (0.5° bins) errors over the
/// converged steps, for the filter estimate and the ICP-refined pose. The
/// last bin of each series collects everything beyond the range.
pub fn error_histogram_csv(records: &[LocalizeRecord]) -> String {
    let converged: Vec<&LocalizeRecord> = records.iter().filter(|r| r.mcl.estimate.converged).collect();
    let series: [(&str, f64, usize, Vec<f64>); 4] = [
        ("mcl_location_m", 0.1, 20, converged.iter().map(|r| r.location_error()).collect()),
        ("mcl_heading_deg", 0.5, 20, converged.iter().map(|r| r.heading_error().to_degrees()).collect()),
        (
            "icp_location_m",
            0.1,
            20,
            converged.iter().filter_map(|r| r.icp.map(|(p, _)| p.distance(&r.truth))).collect(),
        ),
        (
            "icp_heading_deg",
            0.5,
            20,
            converged
                .iter()
                .filter_map(|r| r.icp.map(|(p, _)| p.heading_error(&r.truth).to_degrees()))
                .collect(),
        ),
    ];
    let mut out = String::from("series,bin_lo,bin_hi,count\n");
    for (name, width, bins, values) in series {
        let mut counts = vec![0usize; bins + 1];
        for v in values {
            counts[((v / width).floor() as usize).min(bins)] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            let lo = b as f64 * width;
            let hi = if b == bins { "inf".to_string() } else { format!("{:.2}", lo + width) };
            writeln!(out, "{name},{lo:.2},{hi},{c}").expect("string write");
        }
    }
    out
}

/// Odometry for each manifest row: the recorded delta, or the motion between
/// consecutive listed poses when the row has none.
fn odometry(manifest: &Manifest) -> Vec<Pose2> {
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| match (e.odom_delta, i) {
            (Some(d), _) => d,
            (None, 0) => Pose2::identity(),
            (None, _) => manifest.entries[i - 1].pose.between(&e.pose),
        })
        .collect()
}

/// Global localization of a scan stream in the map, refining converged
/// estimates with ICP against the map cloud. Writes `localize.csv` and
/// `error_histogram.csv` to `out`.
pub fn cmd_localize(cfg: &PipelineConfig, map: &Path, checkpoint: &Path, stream: &Manifest, out: &Path) -> Result<Vec<LocalizeRecord>> {
    let map = load_map(map)?;
    let params = load_network(checkpoint, cfg)?;
    let scans = load_scans(stream, cfg)?;
    if scans.is_empty() {
        return Err(Error::Config("localization stream is empty".into()));
    }
    let pairs: Vec<(Scan, Pose2)> = scans.into_iter().zip(odometry(stream)).collect();
    let steps = run_global_localization(&map, &pairs, &params, &cfg.mcl_config(), cfg.tau)?;
    let icp_cfg = cfg.icp_config();
    let target = if cfg.icp.enabled && !map.cloud().is_empty() {
        Some(IcpTarget::from_map_cloud(map.cloud(), &icp_cfg)?)
    } else {
        None
    };
    let records = steps
        .into_par_iter()
        .zip(pairs.par_iter())
        .zip(stream.entries.par_iter())
        .map(|((mcl, (scan, _)), entry)| {
            let icp = match &target {
                Some(t) if mcl.estimate.converged => {
                    let source: Vec<_> = scan.points().copied().collect();
                    let source = match icp_cfg.target_voxel {
                        Some(v) => crate::map::voxel_downsample(&source, v),
                        None => source,
                    };
                    match refine_pose(&source, t, &mcl.estimate.pose, &icp_cfg) {
                        Ok((pose, result)) => Some((pose, result.rmse)),
                        Err(Error::NoOverlap { .. }) => None,
                        Err(e) => return Err(e),
                    }
                }
                _ => None,
            };
            Ok(LocalizeRecord {
                mcl,
                icp,
                truth: entry.pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write(&out.join("localize.csv"), localize_csv(&records))?;
    write(&out.join("error_histogram.csv"), error_histogram_csv(&records))?;
    Ok(records)
}
