//! Deterministic synthetic LiDAR: vertical boxes and cylinders on a ground
//! plane, ray-cast exactly from a planar sensor pose.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point3, Pose2};
use crate::scan::{sort_ring, Scan, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        if !(min_x < max_x && min_y < max_y) {
            return Err(Error::Config(format!(
                "degenerate bounds [{min_x}, {max_x}] x [{min_y}, {max_y}]"
            )));
        }
        Ok(Self {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn expanded(&self, margin: f64) -> Bounds {
        Bounds {
            min_x: self.min_x - margin,
            min_y: self.min_y - margin,
            max_x: self.max_x + margin,
            max_y: self.max_y + margin,
        }
    }

    /// Smallest box holding all poses; `None` for an empty slice.
    pub fn around(poses: &[Pose2]) -> Option<Bounds> {
        let first = poses.first()?;
        let mut b = Bounds {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in poses {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }
}

/// A vertical prism standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Axis-aligned box: center, full side lengths, height.
    Box {
        cx: f64,
        cy: f64,
        size_x: f64,
        size_y: f64,
        height: f64,
    },
    Cylinder {
        cx: f64,
        cy: f64,
        radius: f64,
        height: f64,
    },
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        let dims: &[f64] = match self {
            Primitive::Box {
                size_x,
                size_y,
                height,
                ..
            } => &[*size_x, *size_y, *height],
            Primitive::Cylinder { radius, height, .. } => &[*radius, *height],
        };
        if dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("non-positive dimension in {self:?}")))
        }
    }

    fn footprint(&self) -> Bounds {
        match *self {
            Primitive::Box {
                cx,
                cy,
                size_x,
                size_y,
                ..
            } => Bounds {
                min_x: cx - size_x / 2.0,
                min_y: cy - size_y / 2.0,
                max_x: cx + size_x / 2.0,
                max_y: cy + size_y / 2.0,
            },
            Primitive::Cylinder { cx, cy, radius, .. } => Bounds {
                min_x: cx - radius,
                min_y: cy - radius,
                max_x: cx + radius,
                max_y: cy + radius,
            },
        }
    }

    fn height(&self) -> f64 {
        match *self {
            Primitive::Box { height, .. } | Primitive::Cylinder { height, .. } => height,
        }
    }

    /// Horizontal entry/exit distances of the ray `o + t·u` through the footprint.
    fn footprint_interval(&self, ox: f64, oy: f64, ux: f64, uy: f64) -> Option<(f64, f64)> {
        match *self {
            Primitive::Box { .. } => {
                let fp = self.footprint();
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for (o, u, lo, hi) in [(ox, ux, fp.min_x, fp.max_x), (oy, uy, fp.min_y, fp.max_y)] {
                    if u.abs() < 1e-15 {
                        if o < lo || o > hi {
                            return None;
                        }
                    } else {
                        let a = (lo - o) / u;
                        let b = (hi - o) / u;
                        t0 = t0.max(a.min(b));
                        t1 = t1.min(a.max(b));
                    }
                }
                (t0 <= t1).then_some((t0, t1))
            }
            Primitive::Cylinder { cx, cy, radius, .. } => {
                let dx = ox - cx;
                let dy = oy - cy;
                let b = dx * ux + dy * uy;
                let c = dx * dx + dy * dy - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                Some((-b - sq, -b + sq))
            }
        }
    }

    /// Horizontal distance to the first surface hit by a ray with slope `tan_el`
    /// leaving from height `h`.
    fn ray_hit(&self, ox: f64, oy: f64, h: f64, ux: f64, uy: f64, tan_el: f64) -> Option<f64> {
        let (t_in, t_out) = self.footprint_interval(ox, oy, ux, uy)?;
        if t_in < 0.0 {
            // sensor inside or object behind
            return None;
        }
        let top = self.height();
        let z_in = h + t_in * tan_el;
        if (0.0..=top).contains(&z_in) {
            return Some(t_in);
        }
        if z_in > top && tan_el < 0.0 {
            let t = (top - h) / tan_el;
            if t <= t_out {
                return Some(t);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub landmarks: Vec<Primitive>,
    pub ground: bool,
    pub bounds: Bounds,
}

impl SyntheticWorld {
    pub fn new(landmarks: Vec<Primitive>, ground: bool, bounds: Bounds) -> Result<Self> {
        for lm in &landmarks {
            lm.validate()?;
            let fp = lm.footprint();
            if !(bounds.contains(fp.min_x, fp.min_y) && bounds.contains(fp.max_x, fp.max_y)) {
                return Err(Error::Config(format!("{lm:?} lies outside world bounds")));
            }
        }
        Ok(Self {
            landmarks,
            ground,
            bounds,
        })
    }

    pub fn empty(bounds: Bounds) -> Self {
        Self {
            landmarks: Vec::new(),
            ground: false,
            bounds,
        }
    }

    /// `count` randomly sized boxes and cylinders scattered over `bounds`.
    pub fn random(seed: u64, bounds: Bounds, count: usize, ground: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let landmarks = (0..count)
            .map(|_| {
                let margin = 4.0;
                let cx = rng.random_range(bounds.min_x + margin..bounds.max_x - margin);
                let cy = rng.random_range(bounds.min_y + margin..bounds.max_y - margin);
                random_primitive(&mut rng, cx, cy)
            })
            .collect();
        Self {
            landmarks,
            ground,
            bounds,
        }
    }

    /// A closed rectangular street of `width × height` meters lined on both
    /// sides with random structures. Returns the world and the street's
    /// corner waypoints (closed: last equals first).
    pub fn street_loop(seed: u64, width: f64, height: f64, spacing: f64) -> (Self, Vec<Pose2>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corners = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)];
        let waypoints: Vec<Pose2> = corners
            .iter()
            .chain(std::iter::once(&corners[0]))
            .map(|&(x, y)| Pose2::new(x, y, 0.0))
            .collect();
        let bounds = Bounds {
            min_x: -25.0,
            min_y: -25.0,
            max_x: width + 25.0,
            max_y: height + 25.0,
        };
        let mut landmarks = Vec::new();
        for seg in waypoints.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = a.distance(&b);
            let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
            let mut s = rng.random_range(0.0..spacing);
            while s < len {
                for side in [-1.0, 1.0] {
                    if rng.random_bool(0.2) {
                        continue;
                    }
                    let lateral = side * rng.random_range(5.0..14.0);
                    let along = s + rng.random_range(-spacing / 3.0..spacing / 3.0);
                    let cx = a.x + ux * along - uy * lateral;
                    let cy = a.y + uy * along + ux * lateral;
                    let lm = random_primitive(&mut rng, cx, cy);
                    let fp = lm.footprint();
                    let clear = waypoints
                        .windows(2)
                        .all(|w| footprint_clearance(&fp, &w[0], &w[1]) > 2.5);
                    if clear && bounds.contains(fp.min_x, fp.min_y) && bounds.contains(fp.max_x, fp.max_y)
                    {
                        landmarks.push(lm);
                    }
                }
                s += spacing;
            }
        }
        let world = Self {
            landmarks,
            ground: true,
            bounds,
        };
        (world, waypoints)
    }

    /// Parses the plain-text world format:
    ///
    /// ```text
    /// bounds <min_x> <min_y> <max_x> <max_y>
    /// ground on|off
    /// box <cx> <cy> <size_x> <size_y> <height>
    /// cylinder <cx> <cy> <radius> <height>
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut bounds = None;
        let mut ground = false;
        let mut landmarks = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let kind = fields.next().unwrap_or_default();
            let rest: Vec<&str> = fields.collect();
            let bad = |msg: &str| Error::Config(format!("world line {}: {msg}", lineno + 1));
            let nums = || -> Result<Vec<f64>> {
                rest.iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad(&format!("bad number {f:?}"))))
                    .collect()
            };
            match kind {
                "bounds" => {
                    let v = nums()?;
                    if v.len() != 4 {
                        return Err(bad("bounds needs 4 numbers"));
                    }
                    bounds = Some(Bounds::new(v[0], v[1], v[2], v[3])?);
                }
                "ground" => {
                    ground = match rest.as_slice() {
                        ["on"] => true,
                        ["off"] => false,
                        _ => return Err(bad("ground expects on|off")),
                    }
                }
                "box" => {
                    let v = nums()?;
                    if v.len() != 5 {
                        return Err(bad("box needs cx cy size_x size_y height"));
                    }
                    landmarks.push(Primitive::Box {
                        cx: v[0],
                        cy: v[1],
                        size_x: v[2],
                        size_y: v[3],
                        height: v[4],
                    });
                }
                "cylinder" => {
                    let v = nums()?;
                    if v.len() != 4 {
                        return Err(bad("cylinder needs cx cy radius height"));
                    }
                    landmarks.push(Primitive::Cylinder {
                        cx: v[0],
                        cy: v[1],
                        radius: v[2],
                        height: v[3],
                    });
                }
                other => return Err(bad(&format!("unknown primitive {other:?}"))),
            }
        }
        let bounds = bounds.ok_or_else(|| Error::Config("world file has no bounds line".into()))?;
        Self::new(landmarks, ground, bounds)
    }

    pub fn to_text(&self) -> String {
        let b = &self.bounds;
        let mut out = format!(
            "bounds {} {} {} {}\nground {}\n",
            b.min_x,
            b.min_y,
            b.max_x,
            b.max_y,
            if self.ground { "on" } else { "off" }
        );
        for lm in &self.landmarks {
            match lm {
                Primitive::Box {
                    cx,
                    cy,
                    size_x,
                    size_y,
                    height,
                } => writeln!(out, "box {cx} {cy} {size_x} {size_y} {height}"),
                Primitive::Cylinder {
                    cx,
                    cy,
                    radius,
                    height,
                } => writeln!(out, "cylinder {cx} {cy} {radius} {height}"),
            }
            .expect("write to string");
        }
        out
    }
}

fn random_primitive(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> Primitive {
    let height = rng.random_range(1.0..12.0);
    if rng.random_bool(0.5) {
        Primitive::Box {
            cx,
            cy,
            size_x: rng.random_range(1.0..8.0),
            size_y: rng.random_range(1.0..8.0),
            height,
        }
    } else {
        Primitive::Cylinder {
            cx,
            cy,
            radius: rng.random_range(0.2..2.5),
            height,
        }
    }
}

/// Lower bound on the distance from a footprint box to segment `a`–`b`.
fn footprint_clearance(fp: &Bounds, a: &Pose2, b: &Pose2) -> f64 {
    let seg = Bounds {
        min_x: a.x.min(b.x),
        min_y: a.y.min(b.y),
        max_x: a.x.max(b.x),
        max_y: a.y.max(b.y),
    };
    let dx = (fp.min_x - seg.max_x).max(seg.min_x - fp.max_x).max(0.0);
    let dy = (fp.min_y - seg.max_y).max(seg.min_y - fp.max_y).max(0.0);
    dx.hypot(dy)
}

/// Sensor-frame azimuth of the `j`-th sample, in (−π, π].
fn sample_azimuth(j: usize, samples: usize) -> f64 {
    normalize_angle(j as f64 * TAU / samples as f64)
}

/// Ray-casts every (ring elevation, azimuth) direction from `pose`. The
/// returned points are expressed in the sensor frame, z relative to the
/// sensor's optical center.
pub fn simulate_scan(world: &SyntheticWorld, pose: &Pose2, sensor: &SensorModel) -> Scan {
    let samples = sensor.azimuth_samples();
    let h = sensor.mount_height;
    let rings = sensor
        .elevation_angles()
        .iter()
        .map(|&el| {
            let (sin_el, cos_el) = el.sin_cos();
            let tan_el = sin_el / cos_el;
            let mut ring = Vec::new();
            for j in 0..samples {
                let az = sample_azimuth(j, samples);
                let (uy, ux) = (pose.yaw + az).sin_cos();
                let mut best = f64::INFINITY;
                if world.ground && tan_el < 0.0 {
                    best = h / -tan_el;
                }
                for lm in &world.landmarks {
                    if let Some(t) = lm.ray_hit(pose.x, pose.y, h, ux, uy, tan_el) {
                        best = best.min(t);
                    }
                }
                if !best.is_finite() {
                    continue;
                }
                let range = best / cos_el;
                if range < sensor.min_range || range > sensor.max_range {
                    continue;
                }
                let (s_az, c_az) = az.sin_cos();
                ring.push(Point3::new(
                    range * cos_el * c_az,
                    range * cos_el * s_az,
                    range * sin_el,
                ));
            }
            sort_ring(&mut ring);
            ring
        })
        .collect();
    Scan {
        rings,
        sensor: sensor.clone(),
        timestamp: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub scan: Scan,
    pub true_pose: Pose2,
    /// Noisy relative motion from the previous sample (identity for the first).
    pub odom_delta: Pose2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryNoise {
    pub sigma_trans: f64,
    pub sigma_rot: f64,
}

/// Poses spaced `step` meters apart along the waypoint polyline, each facing
/// along its segment. `⌈length / step⌉` poses are produced.
pub fn interpolate_waypoints(waypoints: &[Pose2], step: f64) -> Result<Vec<Pose2>> {
    if waypoints.len() < 2 {
        return Err(Error::Config("trajectory needs at least two waypoints".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("trajectory step must be positive, got {step}")));
    }
    let mut cumulative = vec![0.0];
    for (i, w) in waypoints.windows(2).enumerate() {
        let len = w[0].distance(&w[1]);
        if len <= 1e-12 {
            return Err(Error::DegenerateWaypoints(i, i + 1));
        }
        cumulative.push(cumulative[i] + len);
    }
    let total = *cumulative.last().unwrap();
    let count = (total / step).ceil() as usize;
    let mut seg = 0;
    Ok((0..count)
        .map(|k| {
            let s = k as f64 * step;
            while seg + 2 < cumulative.len() && s >= cumulative[seg + 1] {
                seg += 1;
            }
            let (a, b) = (waypoints[seg], waypoints[seg + 1]);
            let frac = (s - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
            Pose2::new(
                a.x + frac * (b.x - a.x),
                a.y + frac * (b.y - a.y),
                (b.y - a.y).atan2(b.x - a.x),
            )
        })
        .collect())
}

/// Drives the waypoint polyline, simulating a scan at every pose and
/// odometry perturbed by zero-mean Gaussian noise on (Δx, Δy, Δyaw).
pub fn simulate_trajectory(
    world: &SyntheticWorld,
    waypoints: &[Pose2],
    step: f64,
    noise: OdometryNoise,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Vec<TrajectorySample>> {
    let poses = interpolate_waypoints(waypoints, step)?;
    let deltas = noisy_odometry(&poses, noise, seed)?;
    let scans: Vec<Scan> = poses
        .par_iter()
        .map(|p| simulate_scan(world, p, sensor))
        .collect();
    Ok(scans
        .into_iter()
        .zip(poses.iter().zip(deltas))
        .enumerate()
        .map(|(i, (mut scan, (pose, delta)))| {
            scan.timestamp = Some(i as f64);
            TrajectorySample {
                scan,
                true_pose: *pose,
                odom_delta: delta,
            }
        })
        .collect())
}

/// Relative motions between consecutive poses with additive Gaussian noise.
pub fn noisy_odometry(poses: &[Pose2], noise: OdometryNoise, seed: u64) -> Result<Vec<Pose2>> {
    let trans = Normal::new(0.0, noise.sigma_trans)
        .map_err(|e| Error::Config(format!("translation noise: {e}")))?;
    let rot = Normal::new(0.0, noise.sigma_rot)
        .map_err(|e| Error::Config(format!("rotation noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        if i == 0 {
            out.push(Pose2::identity());
            continue;
        }
        let d = poses[i - 1].between(pose);
        out.push(Pose2::new(
            d.x + trans.sample(&mut rng),
            d.y + trans.sample(&mut rng),
            d.yaw + rot.sample(&mut rng),
        ));
    }
    Ok(out)
}

/// Integrates odometry from `start`.
pub fn dead_reckon(start: Pose2, deltas: &[Pose2]) -> Vec<Pose2> {
    let mut pose = start;
    deltas
        .iter()
        .map(|d| {
            pose = pose.compose(d);
            pose
        })
        .collect()
}

/// Parses a waypoint file: `x y` per line, `#` comments.
pub fn parse_waypoints(text: &str) -> Result<Vec<Pose2>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("waypoint line {}: bad number", lineno + 1)))?;
        match v.as_slice() {
            [x, y] | [x, y, _] => out.push(Pose2::new(*x, *y, 0.0)),
            _ => {
                return Err(Error::Config(format!(
                    "waypoint line {}: expected `x y`",
                    lineno + 1
                )))
            }
        }
    }
    if out.len() < 2 {
        return Err(Error::Config("waypoint file needs at least two waypoints".into()));
    }
    Ok(out)
}
