#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringloc::net::{forward, loss_gradients, ConvLayer, NetworkConfig, NetworkParams, TrainingPair};
use ringloc::sim::{simulate_scan, Bounds, SyntheticWorld};
use ringloc::{HistogramConfig, Pose2, RangeHistogramImage, Scan, SensorModel};

pub fn small_network(rings: usize, buckets: usize) -> NetworkConfig {
    NetworkConfig {
        conv: vec![ConvLayer {
            kernel_h: 3,
            kernel_w: 3,
            channels: 4,
            pool: 4,
        }],
        hidden: vec![32],
        output_dim: 16,
        ..NetworkConfig::for_input(rings, buckets)
    }
}

/// `n` poses scattered within a metre of `(cx, cy)` with arbitrary heading.
pub fn scattered_session(world: &SyntheticWorld, cx: f64, cy: f64, n: usize, seed: u64, sensor: &SensorModel) -> (Vec<Scan>, Vec<Pose2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<Pose2> = (0..n)
        .map(|_| {
            Pose2::new(
                cx + rng.random_range(-1.0..1.0),
                cy + rng.random_range(-1.0..1.0),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        })
        .collect();
    (poses.iter().map(|p| simulate_scan(world, p, sensor)).collect(), poses)
}

pub fn two_worlds() -> [(SyntheticWorld, f64); 2] {
    [
        (SyntheticWorld::random(1, Bounds::new(-40.0, -40.0, 40.0, 40.0).unwrap(), 25, true), 0.0),
        (SyntheticWorld::random(2, Bounds::new(960.0, -40.0, 1040.0, 40.0).unwrap(), 25, true), 1000.0),
    ]
}

pub fn random_image(rng: &mut ChaCha8Rng, rings: usize, buckets: usize, hist: HistogramConfig) -> Arc<RangeHistogramImage> {
    let mut values: Vec<f64> = (0..rings * buckets).map(|_| rng.random_range(0.0..1.0)).collect();
    for row in values.chunks_mut(buckets) {
        let total: f64 = row.iter().sum::<f64>() * 1.25;
        row.iter_mut().for_each(|v| *v /= total);
    }
    Arc::new(RangeHistogramImage::from_values(rings, values, hist).unwrap())
}

/// Rows with most of their mass in one random bucket.
pub fn peaked_image(rng: &mut ChaCha8Rng, rings: usize, buckets: usize, hist: HistogramConfig) -> Arc<RangeHistogramImage> {
    let mut values = vec![0.0; rings * buckets];
    for row in values.chunks_mut(buckets) {
        for v in row.iter_mut() {
            *v = rng.random_range(0.0..0.2 / buckets as f64);
        }
        row[rng.random_range(0..buckets)] += 0.7;
    }
    Arc::new(RangeHistogramImage::from_values(rings, values, hist).unwrap())
}

/// Second difference of both fingerprints along one parameter. Each
/// fingerprint is piecewise linear in any single parameter, so this is zero
/// up to rounding unless a ReLU or max-pool switch lies within `eps`.
fn straddles_switch(params: &NetworkParams, pair: &TrainingPair, k: usize, eps: f64) -> bool {
    let shifted = |delta: f64| {
        let mut p = params.clone();
        *p.values_mut().nth(k).unwrap() += delta;
        [&pair.r1, &pair.r2].map(|r| forward(&p, r).unwrap().values().to_vec())
    };
    let (plus, mid, minus) = (shifted(eps), shifted(0.0), shifted(-eps));
    (0..2).any(|b| {
        plus[b]
            .iter()
            .zip(&mid[b])
            .zip(&minus[b])
            .any(|((p, m), n)| (p - 2.0 * m + n).abs() > 1e-11 * (1.0 + m.abs()))
    })
}

pub struct GradientCheck {
    pub worst: f64,
    pub checked: usize,
    /// Probes skipped because the loss is not smooth on `[θ−ε, θ+ε]`.
    pub straddling: usize,
}

/// Largest relative error between analytic gradients and central differences
/// with step `eps`, over every parameter whose probe interval is smooth.
/// Denominators are floored at `floor`.
pub fn gradient_check(params: &NetworkParams, pair: &TrainingPair, eps: f64, floor: f64) -> GradientCheck {
    let analytic: Vec<f64> = loss_gradients(params, pair).unwrap().gradients.values().copied().collect();
    let mut out = GradientCheck {
        worst: 0.0,
        checked: 0,
        straddling: 0,
    };
    for (k, a) in analytic.iter().enumerate() {
        if straddles_switch(params, pair, k, eps) {
            out.straddling += 1;
            continue;
        }
        let mut plus = params.clone();
        *plus.values_mut().nth(k).unwrap() += eps;
        let mut minus = params.clone();
        *minus.values_mut().nth(k).unwrap() -= eps;
        let numeric = (loss_gradients(&plus, pair).unwrap().loss - loss_gradients(&minus, pair).unwrap().loss) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        out.worst = out.worst.max(rel);
        out.checked += 1;
    }
    out
}
