//! Experiment configuration: presets for the five canned experiments,
//! TOML (de)serialization, scaling, and hashing.

use serde::{Deserialize, Serialize};

use crate::env::{ImprintColor, ImprintShape, LightingSpec, WorldKind};
use crate::networks::{EncoderSize, SUPPORTED_RESOLUTIONS};
use crate::ppo::PpoConfig;

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Exp5,
}

impl ExperimentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::Exp4 => "exp4",
            ExperimentId::Exp5 => "exp5",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp1" => Ok(ExperimentId::Exp1),
            "exp2" => Ok(ExperimentId::Exp2),
            "exp3" => Ok(ExperimentId::Exp3),
            "exp4" => Ok(ExperimentId::Exp4),
            "exp5" => Ok(ExperimentId::Exp5),
            other => Err(format!("unknown experiment {other:?} (expected exp1..exp5)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rearing {
    /// All agents share one world during training.
    Group,
    /// Each agent trains in its own copy of the world.
    Alone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprintSetup {
    pub shape: ImprintShape,
    pub color: ImprintColor,
    pub trials_per_contrast: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub world: WorldKind,
    pub n_agents: usize,
    pub train_episodes: usize,
    pub test_episodes: usize,
    pub train_episode_len: usize,
    pub test_episode_len: usize,
    pub actor_encoder: EncoderSize,
    pub wm_encoder: EncoderSize,
    pub eta: f64,
    pub alpha: f64,
    pub resolution: usize,
    #[serde(default)]
    pub lighting: LightingSpec,
    pub rearing: Rearing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imprint: Option<ImprintSetup>,
    pub seed: u64,
    pub world_seed: u64,
    /// Multiplier on episode and trial counts; < 1 shrinks runs for desk
    /// hardware (counts round up).
    pub scale: f64,
    /// Write intermediate checkpoints every this many episodes (0: only
    /// the final one).
    pub checkpoint_every: usize,
    /// Record one training-log row per agent per step.
    pub record_steps: bool,
    pub ppo: PpoConfig,
}

impl ExperimentConfig {
    /// Paper-scale defaults for one of the five experiments.
    pub fn preset(experiment: ExperimentId) -> Self {
        let base = Self {
            experiment,
            world: WorldKind::Simple,
            n_agents: 10,
            train_episodes: 1000,
            test_episodes: 50,
            train_episode_len: 1000,
            test_episode_len: 2000,
            actor_encoder: EncoderSize::Large,
            wm_encoder: EncoderSize::Small,
            eta: 0.1,
            alpha: 0.2,
            resolution: 96,
            lighting: LightingSpec::default(),
            rearing: Rearing::Group,
            imprint: None,
            seed: 1,
            world_seed: 1,
            scale: 1.0,
            checkpoint_every: 100,
            record_steps: true,
            ppo: PpoConfig::default(),
        };
        match experiment {
            ExperimentId::Exp1 | ExperimentId::Exp2 => base,
            ExperimentId::Exp3 | ExperimentId::Exp4 => Self {
                world: WorldKind::RealisticArena,
                train_episodes: 1200,
                test_episodes: 30,
                ..base
            },
            ExperimentId::Exp5 => Self {
                world: WorldKind::SimpleSmall,
                n_agents: 1,
                imprint: Some(ImprintSetup {
                    shape: ImprintShape::Sphere,
                    color: ImprintColor::Red,
                    trials_per_contrast: 35,
                }),
                ..base
            },
        }
    }

    /// Apply the scale factor: episode and trial counts shrink
    /// proportionally, rounding up, never below one.
    pub fn scaled(mut self) -> Self {
        let scale = self.scale;
        if (scale - 1.0).abs() < f64::EPSILON {
            return self;
        }
        let apply = |n: usize| ((n as f64 * scale).ceil() as usize).max(1);
        self.train_episodes = apply(self.train_episodes);
        self.test_episodes = apply(self.test_episodes);
        if let Some(imprint) = &mut self.imprint {
            imprint.trials_per_contrast = apply(imprint.trials_per_contrast);
        }
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !SUPPORTED_RESOLUTIONS.contains(&self.resolution) {
            return Err(HarnessError::InvalidConfig(format!(
                "resolution {} not in {SUPPORTED_RESOLUTIONS:?}",
                self.resolution
            )));
        }
        if self.n_agents == 0 {
            return Err(HarnessError::InvalidConfig("n_agents must be at least 1".into()));
        }
        if !(self.scale > 0.0) {
            return Err(HarnessError::InvalidConfig(format!("scale must be positive, got {}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(HarnessError::InvalidConfig(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if !(self.eta >= 0.0) {
            return Err(HarnessError::InvalidConfig(format!("eta must be non-negative, got {}", self.eta)));
        }
        if self.experiment == ExperimentId::Exp5 {
            if self.imprint.is_none() {
                return Err(HarnessError::InvalidConfig("exp5 needs an [imprint] section".into()));
            }
            if self.n_agents != 1 {
                return Err(HarnessError::InvalidConfig("imprinting rears a single agent".into()));
            }
        }
        if self.train_episodes == 0 || self.train_episode_len == 0 {
            return Err(HarnessError::InvalidConfig("training length must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Hex digest of the canonical TOML serialization.
    pub fn content_hash(&self) -> Result<String, HarnessError> {
        use sha2::{Digest, Sha256};
        let toml = self.to_toml()?;
        Ok(hex_digest(Sha256::digest(toml.as_bytes()).as_slice()))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The hyperparameter sweep: four axes, three levels each, varying one
/// axis at a time away from the base configuration.
pub fn sweep_conditions(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut out = Vec::new();
    for size in EncoderSize::ALL {
        let mut cfg = base.clone();
        cfg.actor_encoder = size;
        out.push((format!("actor_encoder={size}"), cfg));
    }
    for size in EncoderSize::ALL {
        let mut cfg = base.clone();
        cfg.wm_encoder = size;
        out.push((format!("wm_encoder={size}"), cfg));
    }
    for eta in [0.01, 0.1, 1.0] {
        let mut cfg = base.clone();
        cfg.eta = eta;
        out.push((format!("eta={eta}"), cfg));
    }
    for resolution in SUPPORTED_RESOLUTIONS {
        let mut cfg = base.clone();
        cfg.resolution = resolution;
        out.push((format!("resolution={resolution}"), cfg));
    }
    out
}

/// The lighting conditions evaluated in the illumination-invariance
/// test phase: seven angles, then eight intensities.
pub fn lighting_grid() -> (Vec<f64>, Vec<f64>) {
    let angles = vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0];
    let intensities = vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
    (angles, intensities)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp1_preset_matches_stated_settings() {
        let c = ExperimentConfig::preset(ExperimentId::Exp1);
        assert_eq!(c.n_agents, 10);
        assert_eq!(c.train_episodes, 1000);
        assert_eq!(c.train_episode_len, 1000);
        assert_eq!(c.test_episodes, 50);
        assert_eq!(c.test_episode_len, 2000);
        assert_eq!(c.resolution, 96);
        assert_eq!(c.eta, 0.1);
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.ppo.buffer_size, 2560);
        assert_eq!(c.ppo.batch_size, 256);
        assert!(matches!(c.world, WorldKind::Simple));
    }

    #[test]
    fn exp3_preset_uses_the_arena_and_longer_training() {
        let c = ExperimentConfig::preset(ExperimentId::Exp3);
        assert!(matches!(c.world, WorldKind::RealisticArena));
        assert_eq!(c.train_episodes, 1200);
        assert_eq!(c.test_episodes, 30);
    }

    #[test]
    fn exp5_preset_is_single_agent_with_imprint_object() {
        let c = ExperimentConfig::preset(ExperimentId::Exp5);
        assert!(matches!(c.world, WorldKind::SimpleSmall));
        assert_eq!(c.n_agents, 1);
        let imprint = c.imprint.unwrap();
        assert_eq!(imprint.trials_per_contrast, 35);
        c.validate().unwrap();
    }

    #[test]
    fn scale_factor_shrinks_episode_counts_with_ceiling() {
        let mut c = ExperimentConfig::preset(ExperimentId::Exp1);
        c.scale = 0.05;
        let scaled = c.scaled();
        assert_eq!(scaled.train_episodes, 50);
        assert_eq!(scaled.test_episodes, 3); // ceil(2.5)
    }

    #[test]
    fn toml_roundtrip_preserves_the_config() {
        for id in [ExperimentId::Exp1, ExperimentId::Exp3, ExperimentId::Exp5] {
            let c = ExperimentConfig::preset(id);
            let text = c.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(c.content_hash().unwrap(), back.content_hash().unwrap());
        }
    }

    #[test]
    fn hash_changes_with_any_field() {
        let a = ExperimentConfig::preset(ExperimentId::Exp1);
        let mut b = a.clone();
        b.seed = 2;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
    }

    #[test]
    fn sweep_covers_four_axes_three_levels_one_at_a_time() {
        let base = ExperimentConfig::preset(ExperimentId::Exp4);
        let conditions = sweep_conditions(&base);
        assert_eq!(conditions.len(), 12);
        for (name, cfg) in &conditions {
            let mut changed = 0;
            if cfg.actor_encoder != base.actor_encoder {
                changed += 1;
            }
            if cfg.wm_encoder != base.wm_encoder {
                changed += 1;
            }
            if cfg.eta != base.eta {
                changed += 1;
            }
            if cfg.resolution != base.resolution {
                changed += 1;
            }
            assert!(changed <= 1, "{name} varies more than one axis");
        }
        // eta levels from the sweep
        let etas: Vec<f64> = conditions
            .iter()
            .filter(|(n, _)| n.starts_with("eta="))
            .map(|(_, c)| c.eta)
            .collect();
        assert_eq!(etas, vec![0.01, 0.1, 1.0]);
    }

    #[test]
    fn lighting_grid_has_seven_angles_and_eight_intensities() {
        let (angles, intensities) = lighting_grid();
        assert_eq!(angles.len(), 7);
        assert_eq!(intensities.len(), 8);
        assert_eq!(angles[0], 0.0);
        assert_eq!(*angles.last().unwrap(), 90.0);
        assert_eq!(intensities[0], 0.25);
        assert_eq!(*intensities.last().unwrap(), 2.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = ExperimentConfig::preset(ExperimentId::Exp1);
        c.resolution = 80;
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::preset(ExperimentId::Exp5);
        c.imprint = None;
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::preset(ExperimentId::Exp1);
        c.scale = 0.0;
        assert!(c.validate().is_err());
    }
}
