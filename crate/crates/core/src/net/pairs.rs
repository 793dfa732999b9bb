use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::representation::RangeHistogramImage;

/// Two representations and whether they were taken at the same place (`Y = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub r1: Arc<RangeHistogramImage>,
    pub r2: Arc<RangeHistogramImage>,
    pub similar: bool,
}

impl TrainingPair {
    pub fn label(&self) -> u8 {
        u8::from(self.similar)
    }
}

/// Labels frame pairs by pose distance: closer than `p_pos` is similar,
/// farther than `p_neg` is dissimilar, anything between is skipped.
/// Dissimilar pairs are subsampled to `ratio ×` the positive count.
/// Positives come first, each group in (i, j) order.
pub fn mine_pairs(
    poses: &[Pose2],
    reps: &[Arc<RangeHistogramImage>],
    p_pos: f64,
    p_neg: f64,
    ratio: f64,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    if poses.len() != reps.len() {
        return Err(Error::DimensionMismatch {
            expected: poses.len(),
            actual: reps.len(),
        });
    }
    if !(p_pos > 0.0 && p_pos < p_neg) {
        return Err(Error::Config(format!(
            "pair thresholds need 0 < p_pos < p_neg, got {p_pos} and {p_neg}"
        )));
    }
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("negative ratio must be non-negative, got {ratio}")));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            let d = poses[i].distance(&poses[j]);
            if d < p_pos {
                positives.push((i, j));
            } else if d > p_neg {
                negatives.push((i, j));
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::NoPositivePairs);
    }
    let wanted = ((positives.len() as f64 * ratio).round() as usize).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, negatives.len(), wanted).into_vec();
    chosen.sort_unstable();
    let make = |(i, j): (usize, usize), similar| TrainingPair {
        r1: reps[i].clone(),
        r2: reps[j].clone(),
        similar,
    };
    Ok(positives
        .into_iter()
        .map(|p| make(p, true))
        .chain(chosen.into_iter().map(|k| make(negatives[k], false)))
        .collect())
}
