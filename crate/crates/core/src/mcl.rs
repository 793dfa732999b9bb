//! Monte-Carlo localization with range-only observations: the matched map
//! frame's position weights particles, and heading is recovered through
//! consistency with odometry.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2};
use crate::map::PriorMap;
use crate::net::NetworkParams;
use crate::recognition::{recognize, MatchResult};
use crate::scan::Scan;
use crate::sim::{Bounds, OdometryNoise};

/// Words of the ChaCha stream reserved for each particle within one step.
const WORDS_PER_PARTICLE: u128 = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MclConfig {
    pub particles: usize,
    pub sigma_obs: f64,
    pub odometry: OdometryNoise,
    pub convergence_radius: f64,
    /// Converged also requires the circular standard deviation of the
    /// particle headings to be below this, in radians.
    pub convergence_heading: f64,
    /// Kernel bandwidth factor for jittering particles after resampling,
    /// relative to the cloud's spread; 0 keeps exact copies.
    pub regularization: f64,
    /// Extra space around the map's pose bounds for the uniform prior.
    pub init_margin: f64,
    pub seed: u64,
}

impl Default for MclConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            sigma_obs: 2.0,
            odometry: OdometryNoise {
                sigma_trans: 0.05,
                sigma_rot: 0.01,
            },
            convergence_radius: 1.0,
            convergence_heading: 8f64.to_radians(),
            regularization: 0.3,
            init_margin: 1.0,
            seed: 0,
        }
    }
}

impl MclConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.particles == 0 {
            return Err(Error::Config("particle count must be at least 1".into()));
        }
        if !positive(self.sigma_obs) || !positive(self.convergence_radius) || !positive(self.convergence_heading) {
            return Err(Error::Config("sigma_obs and convergence thresholds must be positive".into()));
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.odometry.sigma_trans)
            || !nonneg(self.odometry.sigma_rot)
            || !nonneg(self.init_margin)
            || !nonneg(self.regularization)
        {
            return Err(Error::Config("noise, regularization and init margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Weighted pose hypotheses plus the seed and step counter that define each
/// particle's random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    seed: u64,
    draws: u64,
}

impl ParticleSet {
    pub fn new(particles: Vec<Particle>, seed: u64) -> Self {
        Self {
            particles,
            seed,
            draws: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// A fresh stream per stochastic operation.
    fn next_stream(&mut self) -> u64 {
        self.draws += 1;
        self.draws
    }

    fn rng(&self, stream: u64, particle: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(particle as u128 * WORDS_PER_PARTICLE);
        rng
    }
}

pub fn init_uniform(bounds: &Bounds, n: usize, seed: u64) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
        return Err(Error::Config("particle bounds are degenerate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 1.0 / n as f64;
    let particles = (0..n)
        .map(|_| {
            let x = rng.random_range(bounds.min_x..bounds.max_x);
            let y = rng.random_range(bounds.min_y..bounds.max_y);
            let yaw = rng.random_range(-PI..PI);
            Particle {
                pose: Pose2::new(x, y, yaw),
                weight: w,
            }
        })
        .collect();
    Ok(ParticleSet::new(particles, seed))
}

/// Moves every particle by `delta` perturbed with its own Gaussian noise.
pub fn predict(set: &mut ParticleSet, delta: &Pose2, noise: OdometryNoise) -> Result<()> {
    let trans = Normal::new(0.0, noise.sigma_trans).map_err(|e| Error::Config(format!("translation noise: {e}")))?;
    let rot = Normal::new(0.0, noise.sigma_rot).map_err(|e| Error::Config(format!("rotation noise: {e}")))?;
    let stream = set.next_stream();
    let base = set.clone();
    set.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
        let mut rng = base.rng(stream, i);
        let noisy = Pose2::new(
            delta.x + trans.sample(&mut rng),
            delta.y + trans.sample(&mut rng),
            delta.yaw + rot.sample(&mut rng),
        );
        p.pose = p.pose.compose(&noisy);
    });
    Ok(())
}

/// Gaussian weighting on the distance to the observed position; the
/// observation's yaw is never read. Returns `true` when every weight
/// underflowed and the set was reset to uniform.
pub fn update_weights(set: &mut ParticleSet, z: &Pose2, sigma_obs: f64) -> Result<bool> {
    if !(sigma_obs > 0.0 && sigma_obs.is_finite()) {
        return Err(Error::Config(format!("sigma_obs must be positive, got {sigma_obs}")));
    }
    let (zx, zy) = (z.x, z.y);
    let denom = 2.0 * sigma_obs * sigma_obs;
    for p in &mut set.particles {
        let d2 = (p.pose.x - zx).powi(2) + (p.pose.y - zy).powi(2);
        p.weight *= (-d2 / denom).exp();
    }
    let total = set.weight_sum();
    let diverged = !(total > 0.0 && total.is_finite());
    let n = set.len() as f64;
    for p in &mut set.particles {
        p.weight = if diverged { 1.0 / n } else { p.weight / total };
    }
    Ok(diverged)
}

pub fn effective_sample_size(set: &ParticleSet) -> f64 {
    1.0 / set.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
}

/// Systematic resampling drawing `n` particles with pointers `offset + k/n`,
/// `offset ∈ [0, 1/n)`. Weights are assumed normalized.
pub fn resample_with_offset(particles: &[Particle], n: usize, offset: f64) -> Vec<Particle> {
    let w = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cumulative = particles.first().map_or(0.0, |p| p.weight);
    for k in 0..n {
        let u = offset + k as f64 * w;
        while u >= cumulative && i + 1 < particles.len() {
            i += 1;
            cumulative += particles[i].weight;
        }
        out.push(Particle {
            pose: particles[i].pose,
            weight: w,
        });
    }
    out
}

pub fn resample(set: &mut ParticleSet) {
    if set.is_empty() {
        return;
    }
    let stream = set.next_stream();
    let offset = set.rng(stream, 0).random_range(0.0..1.0) / set.len() as f64;
    set.particles = resample_with_offset(&set.particles, set.len(), offset);
}

/// Weighted standard deviations of x, y and (circular) yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudSpread {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_yaw: f64,
}

fn circular_std(resultant: f64) -> f64 {
    if resultant <= 0.0 {
        PI
    } else {
        (-2.0 * resultant.min(1.0).ln()).sqrt().min(PI)
    }
}

pub fn cloud_spread(set: &ParticleSet) -> CloudSpread {
    let total = set.weight_sum();
    let (mut mx, mut my, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for p in &set.particles {
        let w = p.weight / total;
        mx += w * p.pose.x;
        my += w * p.pose.y;
        s += w * p.pose.yaw.sin();
        c += w * p.pose.yaw.cos();
    }
    let (mut vx, mut vy) = (0.0, 0.0);
    for p in &set.particles {
        let w = p.weight / total;
        vx += w * (p.pose.x - mx).powi(2);
        vy += w * (p.pose.y - my).powi(2);
    }
    CloudSpread {
        sigma_x: vx.sqrt(),
        sigma_y: vy.sqrt(),
        sigma_yaw: circular_std(s.hypot(c)),
    }
}

/// Jitters every particle with Gaussian noise of `factor` times `spread`
/// per axis (regularized resampling). Weights are unchanged.
pub fn regularize(set: &mut ParticleSet, spread: &CloudSpread, factor: f64) {
    if factor <= 0.0 {
        return;
    }
    let stream = set.next_stream();
    let base = set.clone();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    set.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
        let mut rng = base.rng(stream, i);
        p.pose = Pose2::new(
            p.pose.x + factor * spread.sigma_x * unit.sample(&mut rng),
            p.pose.y + factor * spread.sigma_y * unit.sample(&mut rng),
            p.pose.yaw + factor * spread.sigma_yaw * unit.sample(&mut rng),
        );
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub pose: Pose2,
    pub converged: bool,
    /// Weighted RMS distance of particles from the mean position.
    pub spread: f64,
    /// Circular standard deviation of the headings, radians.
    pub heading_spread: f64,
    /// The circular mean of the yaws is undefined.
    pub degenerate: bool,
}

/// Weighted mean pose. Converged means the position spread is below
/// `radius` and the heading spread below `heading`.
pub fn estimate(set: &ParticleSet, radius: f64, heading: f64) -> Result<Estimate> {
    if set.is_empty() {
        return Err(Error::Config("cannot estimate from an empty particle set".into()));
    }
    let total = set.weight_sum();
    let (mut x, mut y, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for p in &set.particles {
        let w = p.weight / total;
        x += w * p.pose.x;
        y += w * p.pose.y;
        s += w * p.pose.yaw.sin();
        c += w * p.pose.yaw.cos();
    }
    let spread = set
        .particles
        .iter()
        .map(|p| p.weight / total * ((p.pose.x - x).powi(2) + (p.pose.y - y).powi(2)))
        .sum::<f64>()
        .sqrt();
    let resultant = s.hypot(c);
    let degenerate = resultant < 1e-9;
    let yaw = if degenerate { 0.0 } else { s.atan2(c) };
    let heading_spread = circular_std(resultant);
    Ok(Estimate {
        pose: Pose2::new(x, y, normalize_angle(yaw)),
        converged: !degenerate && spread < radius && heading_spread < heading,
        spread,
        heading_spread,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MclStep {
    pub estimate: Estimate,
    pub observation: MatchResult,
    /// Weights underflowed during this step's update.
    pub diverged: bool,
    pub resampled: bool,
    pub effective_sample_size: f64,
}

/// Runs the filter over `(scan, odometry delta)` pairs. The initial set is
/// uniform over the map's pose bounds; accepted matches update the weights
/// and trigger regularized resampling once the effective sample size drops
/// below n/2.
pub fn run_global_localization(
    map: &PriorMap,
    stream: &[(Scan, Pose2)],
    params: &NetworkParams,
    cfg: &MclConfig,
    tau: f64,
) -> Result<Vec<MclStep>> {
    cfg.validate()?;
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let matches = stream
        .par_iter()
        .map(|(scan, _)| recognize(map, scan, params, tau))
        .collect::<Result<Vec<_>>>()?;
    let bounds = initial_bounds(map, cfg.init_margin)?;
    let mut set = init_uniform(&bounds, cfg.particles, cfg.seed)?;
    let mut steps = Vec::with_capacity(stream.len());
    for ((_, delta), observation) in stream.iter().zip(matches) {
        predict(&mut set, delta, cfg.odometry)?;
        let mut diverged = false;
        let mut resampled = false;
        if observation.accepted {
            diverged = update_weights(&mut set, &observation.observation, cfg.sigma_obs)?;
            if effective_sample_size(&set) < set.len() as f64 / 2.0 {
                let spread = cloud_spread(&set);
                resample(&mut set);
                regularize(&mut set, &spread, cfg.regularization);
                resampled = true;
            }
        }
        steps.push(MclStep {
            estimate: estimate(&set, cfg.convergence_radius, cfg.convergence_heading)?,
            observation,
            diverged,
            resampled,
            effective_sample_size: effective_sample_size(&set),
        });
    }
    Ok(steps)
}

fn initial_bounds(map: &PriorMap, margin: f64) -> Result<Bounds> {
    let b = Bounds::around(&map.poses()).ok_or(Error::EmptyMap)?;
    // a single frame or a straight line still needs area to sample from
    Ok(b.expanded(margin.max(1.0)))
}
