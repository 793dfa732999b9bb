//! The prior map: per-frame poses and fingerprints indexed by a kd-tree, plus
//! the aggregated point cloud used for metric refinement.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose2};
use crate::kdtree::KdTree;
use crate::net::{forward, Fingerprint, NetworkParams};
use crate::representation::{build_representation, HistogramConfig};
use crate::scan::Scan;

#[derive(Debug, Clone, PartialEq)]
pub struct MapFrame {
    pub index: usize,
    pub pose: Pose2,
    pub fingerprint: Fingerprint,
    /// Where the frame's scan came from, if known.
    pub source: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PriorMap {
    frames: Vec<MapFrame>,
    tree: KdTree,
    cloud: Vec<Point3>,
    histogram: HistogramConfig,
}

impl PartialEq for PriorMap {
    fn eq(&self, other: &Self) -> bool {
        // the tree is a pure function of the frames
        self.frames == other.frames && self.cloud == other.cloud && self.histogram == other.histogram
    }
}

/// Embeds every scan and assembles the map. The cloud is the union of all
/// scans moved into the map frame by their poses.
pub fn build_map(
    scans: &[Scan],
    poses: &[Pose2],
    params: &NetworkParams,
    histogram: &HistogramConfig,
) -> Result<PriorMap> {
    if scans.len() != poses.len() {
        return Err(Error::DimensionMismatch {
            expected: scans.len(),
            actual: poses.len(),
        });
    }
    if scans.is_empty() {
        return Err(Error::EmptyMap);
    }
    let fingerprints = scans
        .par_iter()
        .map(|s| forward(params, &build_representation(s, histogram)))
        .collect::<Result<Vec<_>>>()?;
    let frames = fingerprints
        .into_iter()
        .zip(poses)
        .enumerate()
        .map(|(index, (fingerprint, pose))| MapFrame {
            index,
            pose: *pose,
            fingerprint,
            source: None,
        })
        .collect();
    let cloud = scans
        .iter()
        .zip(poses)
        .flat_map(|(s, p)| s.points().map(move |pt| p.transform_point(pt)))
        .collect();
    PriorMap::from_parts(frames, cloud, *histogram)
}

impl PriorMap {
    pub fn from_parts(frames: Vec<MapFrame>, cloud: Vec<Point3>, histogram: HistogramConfig) -> Result<Self> {
        let dim = frames.first().map(|f| f.fingerprint.dim()).ok_or(Error::EmptyMap)?;
        for (i, f) in frames.iter().enumerate() {
            if f.fingerprint.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: f.fingerprint.dim(),
                });
            }
            if f.index != i {
                return Err(Error::Format(format!("frame {i} carries index {}", f.index)));
            }
        }
        let coords = frames.iter().flat_map(|f| f.fingerprint.values().iter().copied()).collect();
        let tree = KdTree::new(dim, coords);
        Ok(Self {
            frames,
            tree,
            cloud,
            histogram,
        })
    }

    pub fn frames(&self) -> &[MapFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fingerprint_dim(&self) -> usize {
        self.tree.dim()
    }

    pub fn cloud(&self) -> &[Point3] {
        &self.cloud
    }

    pub fn histogram(&self) -> &HistogramConfig {
        &self.histogram
    }

    pub fn poses(&self) -> Vec<Pose2> {
        self.frames.iter().map(|f| f.pose).collect()
    }

    pub fn set_sources(&mut self, sources: impl IntoIterator<Item = String>) {
        for (f, s) in self.frames.iter_mut().zip(sources) {
            f.source = Some(s);
        }
    }

    pub fn downsample_cloud(&mut self, voxel: f64) {
        self.cloud = voxel_downsample(&self.cloud, voxel);
    }
}

/// Frame whose fingerprint is closest to `f`, with its distance; ties go to
/// the lower frame index.
pub fn nearest_fingerprint(map: &PriorMap, f: &Fingerprint) -> Result<(usize, f64)> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    if f.dim() != map.fingerprint_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.fingerprint_dim(),
            actual: f.dim(),
        });
    }
    let n = map.tree.nearest(f.values()).ok_or(Error::EmptyMap)?;
    Ok((n.index, n.distance()))
}

/// Replaces the points of each occupied voxel by their centroid. Output is
/// ordered by voxel coordinate.
pub fn voxel_downsample(points: &[Point3], voxel: f64) -> Vec<Point3> {
    if !(voxel > 0.0) {
        return points.to_vec();
    }
    let mut cells: BTreeMap<(i64, i64, i64), (f64, f64, f64, usize)> = BTreeMap::new();
    for p in points {
        let key = (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        );
        let c = cells.entry(key).or_insert((0.0, 0.0, 0.0, 0));
        c.0 += p.x;
        c.1 += p.y;
        c.2 += p.z;
        c.3 += 1;
    }
    cells
        .values()
        .map(|&(x, y, z, n)| {
            let n = n as f64;
            Point3::new(x / n, y / n, z / n)
        })
        .collect()
}

const MAGIC: &[u8; 6] = b"LLMAP1";
const VERSION: u32 = 1;

/// Binary map container, little-endian: magic `LLMAP1`, version, histogram
/// config, fingerprint dimension, frames (index, pose, source, fingerprint as
/// `f64`), then the cloud.
pub fn encode_map(map: &PriorMap) -> Vec<u8> {
    let mut e = Encoder::default();
    e.bytes(MAGIC);
    e.u32(VERSION);
    e.len(map.histogram.bucket_count);
    e.f64(map.histogram.d_min);
    e.f64(map.histogram.d_max);
    e.len(map.fingerprint_dim());
    e.len(map.frames.len());
    for f in &map.frames {
        e.len(f.index);
        e.f64(f.pose.x);
        e.f64(f.pose.y);
        e.f64(f.pose.yaw);
        match &f.source {
            Some(s) => {
                e.u32(1);
                e.string(s);
            }
            None => e.u32(0),
        }
        for &v in f.fingerprint.values() {
            e.f64(v);
        }
    }
    e.len(map.cloud.len());
    for p in &map.cloud {
        e.f64(p.x);
        e.f64(p.y);
        e.f64(p.z);
    }
    e.buf
}

pub fn decode_map(bytes: &[u8]) -> Result<PriorMap> {
    let mut d = Decoder::new(bytes, "map");
    d.magic(MAGIC)?;
    let version = d.u32()?;
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let histogram = HistogramConfig::new(d.u64()? as usize, d.f64()?, d.f64()?)?;
    let dim = d.u64()? as usize;
    let count = d.len(8 * (4 + dim) + 4)?;
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let index = d.u64()? as usize;
        let pose = Pose2 {
            x: d.f64()?,
            y: d.f64()?,
            yaw: d.f64()?,
        };
        let source = match d.u32()? {
            0 => None,
            1 => Some(d.string()?),
            other => return Err(Error::Format(format!("map: bad source flag {other}"))),
        };
        let values = (0..dim).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
        frames.push(MapFrame {
            index,
            pose,
            fingerprint: Fingerprint::new(values)?,
            source,
        });
    }
    let npoints = d.len(24)?;
    let cloud = (0..npoints)
        .map(|_| Ok(Point3::new(d.f64()?, d.f64()?, d.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    d.finish()?;
    PriorMap::from_parts(frames, cloud, histogram)
}

pub fn save_map(map: &PriorMap, path: &Path) -> Result<()> {
    std::fs::write(path, encode_map(map)).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: &Path) -> Result<PriorMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn frames_from(rows: &[Vec<f64>]) -> Vec<MapFrame> {
        rows.iter()
            .enumerate()
            .map(|(index, r)| MapFrame {
                index,
                pose: Pose2::new(index as f64, 0.0, 0.0),
                fingerprint: Fingerprint::new(r.clone()).unwrap(),
                source: None,
            })
            .collect()
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let map = PriorMap::from_parts(frames_from(&[vec![1.0, 0.0], vec![-1.0, 0.0]]), vec![], HistogramConfig::default()).unwrap();
        let (i, d) = nearest_fingerprint(&map, &Fingerprint::new(vec![0.0, 5.0]).unwrap()).unwrap();
        assert_eq!(i, 0);
        assert_eq!(d, 26f64.sqrt());
        assert!(nearest_fingerprint(&map, &Fingerprint::new(vec![0.0]).unwrap()).is_err());
    }

    #[test]
    fn kd_tree_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let map = PriorMap::from_parts(frames_from(&rows), vec![], HistogramConfig::default()).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (i, d) = nearest_fingerprint(&map, &Fingerprint::new(q.clone()).unwrap()).unwrap();
            let mut best = (0, f64::INFINITY);
            for (k, r) in rows.iter().enumerate() {
                let dd: f64 = r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if dd < best.1 {
                    best = (k, dd);
                }
            }
            assert_eq!((i, d), best);
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let rows = vec![vec![0.25, -1.5, 3.0], vec![1e-300, 2.0, f64::MAX / 4.0]];
        let mut map = PriorMap::from_parts(
            frames_from(&rows),
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-0.1, 0.2, -0.3)],
            HistogramConfig::new(40, 0.0, 5.0).unwrap(),
        )
        .unwrap();
        map.set_sources(["a.bin".to_string(), "b.bin".to_string()]);
        let bytes = encode_map(&map);
        let back = decode_map(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(encode_map(&back), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let map = PriorMap::from_parts(frames_from(&[vec![1.0, 2.0]]), vec![Point3::new(0.0, 0.0, 0.0)], HistogramConfig::default()).unwrap();
        let bytes = encode_map(&map);
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(decode_map(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        match decode_map(&bad) {
            Err(Error::BadMagic { expected, .. }) => assert_eq!(expected, "LLMAP1"),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes;
        bad[6] = 2;
        assert!(matches!(decode_map(&bad), Err(Error::Version(2))));
    }

    #[test]
    fn voxel_centroids() {
        let pts = vec![Point3::new(0.1, 0.1, 0.1), Point3::new(0.3, 0.1, 0.1), Point3::new(1.5, 0.0, 0.0)];
        let out = voxel_downsample(&pts, 1.0);
        assert_eq!(out.len(), 2);
        assert!((out[0].x - 0.2).abs() < 1e-12);
        assert_eq!(voxel_downsample(&pts, 0.0), pts);
    }
}
