//! Pipeline configuration read from TOML, one table per stage. Every field
//! has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icp::IcpConfig;
use crate::mcl::MclConfig;
use crate::net::{ConvLayer, NetworkConfig, TrainOptions};
use crate::representation::HistogramConfig;
use crate::scan::SensorModel;
use crate::sim::OdometryNoise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub rings: usize,
    pub top_deg: f64,
    pub bottom_deg: f64,
    pub azimuth_step_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub mount_height: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            rings: 16,
            top_deg: 15.0,
            bottom_deg: -15.0,
            azimuth_step_deg: 0.4,
            min_range: 0.5,
            max_range: 60.0,
            mount_height: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSection {
    pub buckets: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for HistogramSection {
    fn default() -> Self {
        let h = HistogramConfig::default();
        Self {
            buckets: h.bucket_count,
            d_min: h.d_min,
            d_max: h.d_max,
        }
    }
}

/// Conv layers are `[kernel_h, kernel_w, channels, pool]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub conv: Vec<[usize; 4]>,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub margin: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::for_input(1, 1);
        Self {
            conv: n.conv.iter().map(|c| [c.kernel_h, c.kernel_w, c.channels, c.pool]).collect(),
            hidden: n.hidden,
            output_dim: n.output_dim,
            margin: n.margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Frames closer than this (meters) form similar pairs.
    pub p_pos: f64,
    /// Frames farther than this form dissimilar pairs.
    pub p_neg: f64,
    /// Dissimilar pairs sampled per similar pair.
    pub negative_ratio: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            batch_size: t.batch_size,
            p_pos: 3.0,
            p_neg: 20.0,
            negative_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Spacing between consecutive frames along the waypoints, meters.
    pub step: f64,
    pub sigma_trans: f64,
    pub sigma_rot: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            step: 1.0,
            sigma_trans: 0.05,
            sigma_rot: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Same-place threshold for the main PR curve, meters.
    pub p: f64,
    /// Thresholds for the F1-max table.
    pub thresholds: Vec<f64>,
    /// Pairs within this many frames of each other are not evaluated.
    pub exclusion: usize,
    /// Largest travel distance on the localization-probability curve.
    pub curve_max: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            p: 3.0,
            thresholds: vec![2.0, 3.0, 5.0, 10.0],
            exclusion: 0,
            curve_max: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MclSection {
    pub particles: usize,
    pub sigma_obs: f64,
    pub sigma_trans: f64,
    pub sigma_rot: f64,
    pub convergence_radius: f64,
    pub convergence_heading_deg: f64,
    pub regularization: f64,
    pub init_margin: f64,
}

impl Default for MclSection {
    fn default() -> Self {
        let m = MclConfig::default();
        Self {
            particles: m.particles,
            sigma_obs: m.sigma_obs,
            sigma_trans: m.odometry.sigma_trans,
            sigma_rot: m.odometry.sigma_rot,
            convergence_radius: m.convergence_radius,
            convergence_heading_deg: m.convergence_heading.to_degrees(),
            regularization: m.regularization,
            init_margin: m.init_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpSection {
    pub enabled: bool,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub max_correspondence_distance: f64,
    pub min_correspondences: usize,
    /// Map-cloud voxel size in meters; 0 disables downsampling.
    pub voxel: f64,
}

impl Default for IcpSection {
    fn default() -> Self {
        let c = IcpConfig::default();
        Self {
            enabled: true,
            max_iterations: c.max_iterations,
            epsilon: c.epsilon,
            max_correspondence_distance: c.max_correspondence_distance,
            min_correspondences: c.min_correspondences,
            voxel: c.target_voxel.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub map: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; each stochastic stage derives its own seed from it.
    pub seed: u64,
    /// Fingerprint distance below which a map match is accepted.
    pub tau: f64,
    pub sensor: SensorSection,
    pub histogram: HistogramSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub simulate: SimulateSection,
    pub evaluate: EvaluateSection,
    pub mcl: MclSection,
    pub icp: IcpSection,
    pub paths: PathsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tau: 6.0,
            sensor: SensorSection::default(),
            histogram: HistogramSection::default(),
            network: NetworkSection::default(),
            training: TrainingSection::default(),
            simulate: SimulateSection::default(),
            evaluate: EvaluateSection::default(),
            mcl: MclSection::default(),
            icp: IcpSection::default(),
            paths: PathsSection::default(),
        }
    }
}

/// Stage offsets mixed into the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    NetworkInit,
    Pairs,
    Training,
    Mcl,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor_model()?;
        self.histogram_config()?;
        self.network_config()?.validate()?;
        self.mcl_config().validate()?;
        self.icp_config().validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        let t = &self.training;
        if !(t.p_pos > 0.0 && t.p_neg >= t.p_pos && t.negative_ratio >= 0.0) {
            return Err(Error::Config("training needs 0 < p_pos ≤ p_neg and a non-negative ratio".into()));
        }
        if !(self.simulate.step > 0.0) {
            return Err(Error::Config("simulation step must be positive".into()));
        }
        if !(self.evaluate.p > 0.0) || self.evaluate.thresholds.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("evaluation thresholds must be positive".into()));
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let offset = match stage {
            Stage::Simulate => 0x5157,
            Stage::NetworkInit => 0x1417,
            Stage::Pairs => 0x9a12,
            Stage::Training => 0x7a11,
            Stage::Mcl => 0x3c1e,
        };
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset)
    }

    pub fn sensor_model(&self) -> Result<SensorModel> {
        let s = &self.sensor;
        SensorModel::uniform(
            s.rings,
            s.top_deg,
            s.bottom_deg,
            s.azimuth_step_deg,
            s.min_range,
            s.max_range,
            s.mount_height,
        )
    }

    pub fn histogram_config(&self) -> Result<HistogramConfig> {
        HistogramConfig::new(self.histogram.buckets, self.histogram.d_min, self.histogram.d_max)
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        let n = &self.network;
        Ok(NetworkConfig {
            input_rings: self.sensor.rings,
            input_buckets: self.histogram.buckets,
            conv: n
                .conv
                .iter()
                .map(|&[kernel_h, kernel_w, channels, pool]| ConvLayer {
                    kernel_h,
                    kernel_w,
                    channels,
                    pool,
                })
                .collect(),
            hidden: n.hidden.clone(),
            output_dim: n.output_dim,
            margin: n.margin,
            seed: self.stage_seed(Stage::NetworkInit),
        })
    }

    pub fn train_options(&self) -> TrainOptions {
        let t = &self.training;
        TrainOptions {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.stage_seed(Stage::Training),
        }
    }

    pub fn odometry_noise(&self) -> OdometryNoise {
        OdometryNoise {
            sigma_trans: self.simulate.sigma_trans,
            sigma_rot: self.simulate.sigma_rot,
        }
    }

    pub fn mcl_config(&self) -> MclConfig {
        let m = &self.mcl;
        MclConfig {
            particles: m.particles,
            sigma_obs: m.sigma_obs,
            odometry: OdometryNoise {
                sigma_trans: m.sigma_trans,
                sigma_rot: m.sigma_rot,
            },
            convergence_radius: m.convergence_radius,
            convergence_heading: m.convergence_heading_deg.to_radians(),
            regularization: m.regularization,
            init_margin: m.init_margin,
            seed: self.stage_seed(Stage::Mcl),
        }
    }

    pub fn icp_config(&self) -> IcpConfig {
        let i = &self.icp;
        IcpConfig {
            max_iterations: i.max_iterations,
            epsilon: i.epsilon,
            max_correspondence_distance: i.max_correspondence_distance,
            min_correspondences: i.min_correspondences,
            target_voxel: (i.voxel > 0.0).then_some(i.voxel),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 42;
        cfg.network.hidden = vec![32, 16];
        cfg.paths.map = Some("out/map.bin".into());
        assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_rejections() {
        let cfg = PipelineConfig::parse("seed = 7\n[mcl]\nparticles = 100\n").unwrap();
        assert_eq!(cfg.mcl_config().particles, 100);
        assert!(PipelineConfig::parse("[mcl]\nparticles = 0\n").is_err());
        assert!(PipelineConfig::parse("[mcl]\nbogus = 1\n").is_err());
        assert!(PipelineConfig::parse("tau = -1.0\n").is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = PipelineConfig::default();
        let seeds = [Stage::Simulate, Stage::NetworkInit, Stage::Pairs, Stage::Training, Stage::Mcl].map(|s| cfg.stage_seed(s));
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
