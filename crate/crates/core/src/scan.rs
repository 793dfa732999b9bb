//! Sensor model, ring-structured scans, and scan ingestion.
//!
//! A scan is stored as `N` rings, one per laser elevation, each holding its
//! points sorted ascending by azimuth. Ring membership is decided by nearest
//! elevation angle so the same code handles 16- and 64-beam sensors.

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// One elevation per ring in radians, strictly decreasing (top ring first).
    elevation_angles: Vec<f64>,
    pub azimuth_step: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Height of the optical center above the ground plane, used by the simulator.
    pub mount_height: f64,
}

impl SensorModel {
    pub fn new(
        elevation_angles: Vec<f64>,
        azimuth_step: f64,
        min_range: f64,
        max_range: f64,
        mount_height: f64,
    ) -> Result<Self> {
        if elevation_angles.is_empty() {
            return Err(Error::Config("sensor needs at least one ring".into()));
        }
        if elevation_angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("non-finite elevation angle".into()));
        }
        if elevation_angles.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "elevation angles must be strictly decreasing".into(),
            ));
        }
        if !(azimuth_step > 0.0 && azimuth_step.is_finite()) {
            return Err(Error::Config("azimuth step must be positive".into()));
        }
        if !(min_range >= 0.0 && min_range < max_range && max_range.is_finite()) {
            return Err(Error::Config(format!(
                "invalid range gate [{min_range}, {max_range}]"
            )));
        }
        if !mount_height.is_finite() {
            return Err(Error::Config("non-finite mount height".into()));
        }
        Ok(Self {
            elevation_angles,
            azimuth_step,
            min_range,
            max_range,
            mount_height,
        })
    }

    /// `rings` beams evenly spread from `top_deg` down to `bottom_deg`.
    pub fn uniform(
        rings: usize,
        top_deg: f64,
        bottom_deg: f64,
        azimuth_step_deg: f64,
        min_range: f64,
        max_range: f64,
        mount_height: f64,
    ) -> Result<Self> {
        let angles = if rings == 1 {
            vec![top_deg.to_radians()]
        } else {
            let step = (top_deg - bottom_deg) / (rings - 1) as f64;
            (0..rings)
                .map(|i| (top_deg - step * i as f64).to_radians())
                .collect()
        };
        Self::new(
            angles,
            azimuth_step_deg.to_radians(),
            min_range,
            max_range,
            mount_height,
        )
    }

    /// 16 beams over ±15°, 0.4° azimuth resolution, 0.5–60 m.
    pub fn vlp16() -> Self {
        Self::uniform(16, 15.0, -15.0, 0.4, 0.5, 60.0, 1.8).expect("valid preset")
    }

    /// One horizontal beam, handy for tests.
    pub fn single_ring(azimuth_step_deg: f64, max_range: f64) -> Self {
        Self::uniform(1, 0.0, 0.0, azimuth_step_deg, 0.1, max_range, 1.0).expect("valid preset")
    }

    pub fn ring_count(&self) -> usize {
        self.elevation_angles.len()
    }

    pub fn elevation_angles(&self) -> &[f64] {
        &self.elevation_angles
    }

    /// Number of azimuth samples per revolution.
    pub fn azimuth_samples(&self) -> usize {
        (std::f64::consts::TAU / self.azimuth_step).round().max(1.0) as usize
    }

    /// Ring whose elevation is nearest to `elevation`; ties go to the lower index.
    pub fn nearest_ring(&self, elevation: f64) -> usize {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (i, a) in self.elevation_angles.iter().enumerate() {
            let err = (elevation - a).abs();
            if err < best_err {
                best = i;
                best_err = err;
            }
        }
        best
    }

    pub fn in_range(&self, p: &Point3) -> bool {
        let r = p.norm();
        r >= self.min_range && r <= self.max_range
    }
}

/// One LiDAR frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub rings: Vec<Vec<Point3>>,
    pub sensor: SensorModel,
    pub timestamp: Option<f64>,
}

impl Scan {
    pub fn empty(sensor: SensorModel) -> Self {
        Self {
            rings: vec![Vec::new(); sensor.ring_count()],
            sensor,
            timestamp: None,
        }
    }

    /// Partitions `points` into rings without range filtering.
    pub fn from_points(points: &[Point3], sensor: SensorModel) -> Self {
        let rings = partition_rings(points, &sensor);
        Self {
            rings,
            sensor,
            timestamp: None,
        }
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn point_count(&self) -> usize {
        self.rings.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.point_count() == 0
    }

    /// All points, ring by ring.
    pub fn points(&self) -> impl Iterator<Item = &Point3> {
        self.rings.iter().flatten()
    }
}

/// Canonical in-ring order: azimuth ascending, then range ascending, then input order.
fn azimuth_order(a: &Point3, b: &Point3) -> Ordering {
    a.azimuth()
        .total_cmp(&b.azimuth())
        .then_with(|| a.norm().total_cmp(&b.norm()))
}

pub(crate) fn sort_ring(ring: &mut [Point3]) {
    // stable: equal keys keep input order
    ring.sort_by(azimuth_order);
}

pub fn partition_rings(points: &[Point3], sensor: &SensorModel) -> Vec<Vec<Point3>> {
    let mut rings = vec![Vec::new(); sensor.ring_count()];
    for p in points {
        rings[sensor.nearest_ring(p.elevation())].push(*p);
    }
    for ring in &mut rings {
        sort_ring(ring);
    }
    rings
}

/// Rotates every point about the sensor z-axis; ring membership is kept.
pub fn rotate_scan(scan: &Scan, yaw: f64) -> Scan {
    let (s, c) = yaw.sin_cos();
    let rings = scan
        .rings
        .iter()
        .map(|ring| {
            let mut out: Vec<Point3> = ring
                .iter()
                .map(|p| Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z))
                .collect();
            sort_ring(&mut out);
            out
        })
        .collect();
    Scan {
        rings,
        sensor: scan.sensor.clone(),
        timestamp: scan.timestamp,
    }
}

fn ingest(points: impl IntoIterator<Item = Point3>, sensor: &SensorModel) -> Result<Scan> {
    let kept: Vec<Point3> = points
        .into_iter()
        .filter(|p| p.is_finite() && sensor.in_range(p))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok(Scan::from_points(&kept, sensor.clone()))
}

const KITTI_RECORD: usize = 16;

/// Decodes a KITTI Velodyne buffer: little-endian `f32` records `x, y, z, intensity`.
pub fn read_kitti_points(raw: &[u8]) -> Result<Vec<Point3>> {
    if raw.len() % KITTI_RECORD != 0 {
        return Err(Error::Format(format!(
            "KITTI buffer length {} is not a multiple of {KITTI_RECORD}",
            raw.len()
        )));
    }
    Ok(raw
        .chunks_exact(KITTI_RECORD)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap());
            Point3::new(f(0) as f64, f(1) as f64, f(2) as f64)
        })
        .collect())
}

pub fn load_scan_kitti(raw: &[u8], sensor: &SensorModel) -> Result<Scan> {
    ingest(read_kitti_points(raw)?, sensor)
}

/// Encodes points in KITTI layout (coordinates narrowed to `f32`, intensity 0).
pub fn write_kitti_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Vec<u8> {
    let mut out = Vec::new();
    for p in points {
        for v in [p.x as f32, p.y as f32, p.z as f32, 0.0f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses `x,y,z` lines; blank lines and `#` comments are skipped.
pub fn read_csv_points(text: &str) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "line {}: expected 3 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut xyz = [0.0; 3];
        for (v, f) in xyz.iter_mut().zip(&fields) {
            *v = f
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad number {f:?}", lineno + 1)))?;
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(points)
}

pub fn load_scan_csv(text: &str, sensor: &SensorModel) -> Result<Scan> {
    ingest(read_csv_points(text)?, sensor)
}

/// Loads a scan file, picking the decoder from the extension (`.csv` or KITTI binary).
pub fn load_scan_file(path: &Path, sensor: &SensorModel) -> Result<Scan> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))?;
        load_scan_csv(&text, sensor)
    } else {
        load_scan_kitti(&bytes, sensor)
    }
}
