//! Rotation-invariant ring histograms of consecutive-point distances, plus the
//! single whole-scan range histogram used as a baseline descriptor.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scan::Scan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramConfig {
    pub bucket_count: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bucket_count: 80,
            d_min: 0.0,
            d_max: 10.0,
        }
    }
}

impl HistogramConfig {
    pub fn new(bucket_count: usize, d_min: f64, d_max: f64) -> Result<Self> {
        let cfg = Self {
            bucket_count,
            d_min,
            d_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bucket_count == 0 {
            return Err(Error::Config("bucket count must be positive".into()));
        }
        if !(self.d_min.is_finite() && self.d_max.is_finite() && self.d_min < self.d_max) {
            return Err(Error::Config(format!(
                "histogram interval [{}, {}] is degenerate",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }

    pub fn bucket_width(&self) -> f64 {
        (self.d_max - self.d_min) / self.bucket_count as f64
    }

    /// Lower edge of bucket `m`; `edge(b)` is `d_max`.
    pub fn edge(&self, m: usize) -> f64 {
        if m == self.bucket_count {
            self.d_max
        } else {
            self.d_min + m as f64 * self.bucket_width()
        }
    }

    /// Bucket holding `d`: `[edge(m), edge(m+1))`, last bucket closed on the right.
    pub fn bucket_of(&self, d: f64) -> Option<usize> {
        if !(d >= self.d_min && d <= self.d_max) {
            return None;
        }
        let b = self.bucket_count;
        let mut m = (((d - self.d_min) / self.bucket_width()) as usize).min(b - 1);
        // the division can land one bucket off near an edge
        while m > 0 && d < self.edge(m) {
            m -= 1;
        }
        while m + 1 < b && d >= self.edge(m + 1) {
            m += 1;
        }
        Some(m)
    }
}

/// The `N × b` stack of per-ring histograms, top ring first.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeHistogramImage {
    rings: usize,
    values: Vec<f64>,
    config: HistogramConfig,
}

impl RangeHistogramImage {
    pub fn zeros(rings: usize, config: HistogramConfig) -> Self {
        Self {
            rings,
            values: vec![0.0; rings * config.bucket_count],
            config,
        }
    }

    /// Builds an image from row-major values, checking entry and row-sum bounds.
    pub fn from_values(rings: usize, values: Vec<f64>, config: HistogramConfig) -> Result<Self> {
        config.validate()?;
        if values.len() != rings * config.bucket_count {
            return Err(Error::ShapeMismatch {
                expected: (rings, config.bucket_count),
                actual: (values.len() / config.bucket_count.max(1), config.bucket_count),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("histogram entries must lie in [0, 1]".into()));
        }
        for row in values.chunks(config.bucket_count) {
            if row.iter().sum::<f64>() > 1.0 + 1e-9 {
                return Err(Error::Format("histogram row sums above 1".into()));
            }
        }
        Ok(Self {
            rings,
            values,
            config,
        })
    }

    pub fn ring_count(&self) -> usize {
        self.rings
    }

    pub fn bucket_count(&self) -> usize {
        self.config.bucket_count
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rings, self.config.bucket_count)
    }

    pub fn config(&self) -> &HistogramConfig {
        &self.config
    }

    pub fn get(&self, ring: usize, bucket: usize) -> f64 {
        self.values[ring * self.config.bucket_count + bucket]
    }

    pub fn row(&self, ring: usize) -> &[f64] {
        let b = self.config.bucket_count;
        &self.values[ring * b..(ring + 1) * b]
    }

    /// Row-major view; doubles as the raw flattened descriptor.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rings {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(",")).expect("write to string");
        }
        out
    }

    pub fn from_csv(text: &str, config: HistogramConfig) -> Result<Self> {
        let mut values = Vec::new();
        let mut rings = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("histogram line {}: bad number", lineno + 1)))?;
            if row.len() != config.bucket_count {
                return Err(Error::ShapeMismatch {
                    expected: (rings + 1, config.bucket_count),
                    actual: (rings + 1, row.len()),
                });
            }
            values.extend(row);
            rings += 1;
        }
        Self::from_values(rings, values, config)
    }
}

/// Planar distances between azimuth-consecutive points, closing the ring
/// with the pair (last, first). A ring of K ≥ 2 points yields K distances.
pub fn consecutive_distances(ring: &[Point3]) -> Vec<f64> {
    if ring.len() < 2 {
        return Vec::new();
    }
    let mut out: Vec<f64> = ring.windows(2).map(|w| w[1].distance_xy(&w[0])).collect();
    out.push(ring[0].distance_xy(&ring[ring.len() - 1]));
    out
}

fn normalized_histogram(values: impl Iterator<Item = f64>, total: usize, config: &HistogramConfig) -> Vec<f64> {
    let mut hist = vec![0.0; config.bucket_count];
    if total == 0 {
        return hist;
    }
    let mut counts = vec![0usize; config.bucket_count];
    for v in values {
        if let Some(m) = config.bucket_of(v) {
            counts[m] += 1;
        }
    }
    for (h, c) in hist.iter_mut().zip(counts) {
        *h = c as f64 / total as f64;
    }
    hist
}

/// Normalized histogram of one ring's distances. Out-of-interval distances
/// are dropped but still count toward the normalizer.
pub fn ring_histogram(distances: &[f64], config: &HistogramConfig) -> Vec<f64> {
    normalized_histogram(distances.iter().copied(), distances.len(), config)
}

pub fn build_representation(scan: &Scan, config: &HistogramConfig) -> RangeHistogramImage {
    let mut values = Vec::with_capacity(scan.ring_count() * config.bucket_count);
    for ring in &scan.rings {
        values.extend(ring_histogram(&consecutive_distances(ring), config));
    }
    RangeHistogramImage {
        rings: scan.ring_count(),
        values,
        config: *config,
    }
}

/// One histogram of point ranges `‖p‖` over the whole scan.
pub fn fast_histogram_baseline(scan: &Scan, config: &HistogramConfig) -> Vec<f64> {
    normalized_histogram(scan.points().map(Point3::norm), scan.point_count(), config)
}
