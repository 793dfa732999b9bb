//! Online matching against the prior map and the offline evaluation
//! protocol: exhaustive similarity matrices, ground truth by pose distance,
//! precision/recall sweeps with F1-max, and the localization-probability curve.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::kdtree::{squared_distance, KdTree};
use crate::map::{nearest_fingerprint, PriorMap};
use crate::net::{classify, forward, NetworkParams};
use crate::representation::build_representation;
use crate::scan::Scan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub frame: usize,
    pub d_w: f64,
    /// Pose of the matched map frame, used as a position-only observation.
    pub observation: Pose2,
    pub accepted: bool,
}

/// Embeds `scan` and looks up its nearest map frame. The map's histogram
/// settings are used so queries always match how the map was built.
pub fn recognize(map: &PriorMap, scan: &Scan, params: &NetworkParams, tau: f64) -> Result<MatchResult> {
    let fingerprint = forward(params, &build_representation(scan, map.histogram()))?;
    let (frame, d_w) = nearest_fingerprint(map, &fingerprint)?;
    Ok(MatchResult {
        frame,
        d_w,
        observation: map.frames()[frame].pose,
        accepted: classify(d_w, tau),
    })
}

/// Symmetric matrix of pairwise descriptor distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
    pub label: String,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_uniform<R: AsRef<[f64]>>(descriptors: &[R]) -> Result<usize> {
    let dim = descriptors.first().map_or(0, |d| d.as_ref().len());
    for d in descriptors {
        if d.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: d.as_ref().len(),
            });
        }
    }
    Ok(dim)
}

/// Euclidean distance between every pair of descriptors.
pub fn similarity_matrix<R: AsRef<[f64]> + Sync>(descriptors: &[R], label: &str) -> Result<SimilarityMatrix> {
    check_uniform(descriptors)?;
    let n = descriptors.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| squared_distance(descriptors[i].as_ref(), descriptors[j].as_ref()).sqrt())
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &d) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(SimilarityMatrix {
        n,
        values,
        label: label.to_string(),
    })
}

/// For each descriptor, its nearest other descriptor more than `exclusion`
/// indices away, found through a kd-tree.
pub fn nearest_neighbor_matches<R: AsRef<[f64]>>(descriptors: &[R], exclusion: usize) -> Result<Vec<Option<(usize, f64)>>> {
    let dim = check_uniform(descriptors)?;
    if dim == 0 {
        return Ok(vec![None; descriptors.len()]);
    }
    let tree = KdTree::from_rows(dim, descriptors);
    Ok(descriptors
        .iter()
        .enumerate()
        .map(|(i, q)| {
            tree.nearest_where(q.as_ref(), |j| j.abs_diff(i) > exclusion)
                .map(|n| (n.index, n.distance()))
        })
        .collect())
}

/// Same-place labels: frames closer than `p` meters, ignoring pairs within
/// `exclusion` indices of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    n: usize,
    same: Vec<bool>,
    pub exclusion: usize,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_same(&self, i: usize, j: usize) -> bool {
        self.same[i * self.n + j]
    }

    /// Whether the pair takes part in evaluation (distinct, outside the window).
    pub fn is_evaluated(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) > self.exclusion
    }

    pub fn positive_pairs(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_evaluated(i, j) && self.is_same(i, j))
            .count()
    }
}

pub fn ground_truth_matrix(poses: &[Pose2], p: f64, exclusion: usize) -> Result<GroundTruth> {
    if !(p > 0.0) {
        return Err(Error::Config(format!("place threshold must be positive, got {p}")));
    }
    let n = poses.len();
    let mut same = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            same[i * n + j] = i.abs_diff(j) > exclusion && poses[i].distance(&poses[j]) < p;
        }
    }
    Ok(GroundTruth { n, same, exclusion })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub f1_max: f64,
    pub tau_star: f64,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,precision,recall,f1\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.tau, p.precision, p.recall, p.f1));
        }
        out
    }
}

fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Sweeps τ over the sorted distinct distances. `candidates` holds
/// (distance, correct) for every prediction; `positives` is the recall
/// denominator.
fn sweep(mut candidates: Vec<(f64, bool)>, positives: usize) -> Result<PrCurve> {
    if positives == 0 {
        return Err(Error::NoPositivePairs);
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < candidates.len() {
        let tau = candidates[k].0;
        while k < candidates.len() && candidates[k].0 == tau {
            if candidates[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        points.push(PrPoint {
            tau,
            precision,
            recall,
            f1: f1_score(precision, recall),
        });
    }
    let (f1_max, tau_star) = points
        .iter()
        .fold((0.0, f64::NAN), |(best, t), p| if p.f1 > best { (p.f1, p.tau) } else { (best, t) });
    Ok(PrCurve {
        points,
        f1_max,
        tau_star,
    })
}

/// Precision/recall over every evaluated pair of the matrix.
pub fn precision_recall(sim: &SimilarityMatrix, gt: &GroundTruth) -> Result<PrCurve> {
    if sim.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: sim.len(),
            actual: gt.len(),
        });
    }
    let n = sim.len();
    let mut candidates = Vec::new();
    let mut positives = 0;
    for i in 0..n {
        for j in i + 1..n {
            if gt.is_evaluated(i, j) {
                let same = gt.is_same(i, j);
                positives += usize::from(same);
                candidates.push((sim.get(i, j), same));
            }
        }
    }
    sweep(candidates, positives)
}

/// Precision/recall counting only each frame's nearest neighbor: a frame is
/// a positive if any evaluated partner is the same place, and its match is
/// correct if the nearest neighbor is one of them.
pub fn nearest_neighbor_pr<R: AsRef<[f64]>>(descriptors: &[R], gt: &GroundTruth) -> Result<PrCurve> {
    if descriptors.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            actual: descriptors.len(),
        });
    }
    let matches = nearest_neighbor_matches(descriptors, gt.exclusion)?;
    let n = gt.len();
    let positives = (0..n)
        .filter(|&i| (0..n).any(|j| gt.is_evaluated(i, j) && gt.is_same(i, j)))
        .count();
    let candidates = matches
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|(j, d)| (d, gt.is_same(i, j))))
        .collect();
    sweep(candidates, positives)
}

/// Distances traveled before each successful localization: from the start to
/// the first success (when the first entry is not one), then between
/// consecutive successes.
pub fn localization_gaps(entries: &[(f64, bool)]) -> Result<Vec<f64>> {
    if entries.windows(2).any(|w| !(w[1].0 >= w[0].0)) {
        return Err(Error::Format("trajectory positions must be nondecreasing".into()));
    }
    let mut last = entries.first().map(|e| e.0);
    let mut gaps = Vec::new();
    let mut any = false;
    for (k, &(pos, ok)) in entries.iter().enumerate() {
        if !ok {
            continue;
        }
        if k > 0 || any {
            gaps.push(pos - last.unwrap_or(pos));
        }
        any = true;
        last = Some(pos);
    }
    if !any {
        return Err(Error::NoSuccesses);
    }
    Ok(gaps)
}

/// Empirical distribution of distance traveled before localizing.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationCurve {
    gaps: Vec<f64>,
}

impl LocalizationCurve {
    pub fn from_gaps(mut gaps: Vec<f64>) -> Self {
        gaps.sort_by(f64::total_cmp);
        Self { gaps }
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Fraction of gaps no longer than `distance` (1 when there are no gaps).
    pub fn probability_within(&self, distance: f64) -> f64 {
        if self.gaps.is_empty() {
            return 1.0;
        }
        let k = self.gaps.partition_point(|&g| g <= distance);
        k as f64 / self.gaps.len() as f64
    }

    /// Step points `(distance, probability)` at every distinct gap length.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (k, &g) in self.gaps.iter().enumerate() {
            let p = (k + 1) as f64 / self.gaps.len() as f64;
            match out.last_mut() {
                Some(last) if last.0 == g => last.1 = p,
                _ => out.push((g, p)),
            }
        }
        out
    }

    /// Curve sampled on `0, step, 2·step, …, max`.
    pub fn to_csv(&self, step: f64, max: f64) -> String {
        let mut out = String::from("distance,probability\n");
        let n = (max / step).round() as usize;
        for k in 0..=n {
            let x = k as f64 * step;
            out.push_str(&format!("{x},{}\n", self.probability_within(x)));
        }
        out
    }
}

pub fn localization_probability_curve(entries: &[(f64, bool)]) -> Result<LocalizationCurve> {
    Ok(LocalizationCurve::from_gaps(localization_gaps(entries)?))
}
