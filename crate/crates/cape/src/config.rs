//! Run configuration: one tree covering training, guidance, planning,
//! observation, and experiment settings, with file loading and strict
//! validation. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::planner::{default_max_iterations, ControllerKind, PlannerConfig};
use crate::trajectory::Bounds;
use crate::world::{Difficulty, ObsMode, ObservationModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralSection {
    pub n: usize,
    pub d: usize,
    pub diffusion_steps: usize,
    pub batch_size: usize,
    pub history_length: usize,
}

impl Default for GeneralSection {
    fn default() -> Self {
        Self { n: 32, d: 2, diffusion_steps: 25, batch_size: 256, history_length: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { beta_min: crate::schedule::DEFAULT_BETA_MIN, beta_max: crate::schedule::DEFAULT_BETA_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self { learning_rate: 1e-4, epochs: 80, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DenoiserConfig::default();
        Self { hidden_width: d.hidden_width, depth: d.depth, time_embed_dim: d.time_embed_dim }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceSection {
    /// Guidance strength (lambda).
    pub strength: f64,
    /// Guidance start step (chi).
    pub start_step: usize,
    pub eef_radius: f64,
    pub safety_margin: f64,
}

impl Default for GuidanceSection {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        Self {
            strength: g.strength,
            start_step: g.start_step,
            eef_radius: g.eef_radius,
            safety_margin: g.safety_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    /// Trajectory prefix length (m).
    pub prefix_length: usize,
    /// Intermediate noise level (delta).
    pub prior_noise_level: usize,
    pub goal_tolerance: f64,
    /// Defaults to 10 * (n / prefix_length) when absent.
    pub max_iterations: Option<usize>,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self { prefix_length: 2, prior_noise_level: 2, goal_tolerance: 0.02, max_iterations: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSection {
    pub mode: String,
    pub sensing_radius: f64,
    pub samples_per_obstacle: usize,
}

impl Default for ObservationSection {
    fn default() -> Self {
        let o = ObservationModel::default();
        Self {
            mode: o.mode.to_string(),
            sensing_radius: o.sensing_radius,
            samples_per_obstacle: o.samples_per_obstacle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenSection {
    pub count: usize,
    pub step_size: f64,
    pub goal_bias: f64,
    pub shortcut_attempts: usize,
    pub k_per_traj: usize,
    pub min_separation: f64,
}

impl Default for DatagenSection {
    fn default() -> Self {
        let d = crate::datagen::DatagenConfig::default();
        Self {
            count: d.base_count,
            step_size: d.step_size,
            goal_bias: d.goal_bias,
            shortcut_attempts: d.shortcut_attempts,
            k_per_traj: d.k_per_traj,
            min_separation: d.min_separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub difficulty: String,
    pub scenes: usize,
    pub poses: usize,
    pub seed: u64,
    pub controllers: Vec<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            difficulty: "medium".into(),
            scenes: 20,
            poses: 5,
            seed: 0,
            controllers: vec!["cape".into(), "mpd-refine".into(), "mpd".into()],
        }
    }
}

/// The merged configuration tree. Every field carries the experiment
/// defaults; files override defaults and flags override files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub general: GeneralSection,
    pub schedule: ScheduleSection,
    pub training: TrainingSection,
    pub model: ModelSection,
    pub guidance: GuidanceSection,
    pub planner: PlannerSection,
    pub observation: ObservationSection,
    pub datagen: DatagenSection,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.general.n < 2 {
            return Err(Error::Config("general.n must be at least 2".into()));
        }
        if self.general.d == 0 {
            return Err(Error::Config("general.d must be positive".into()));
        }
        if self.general.diffusion_steps < 2 {
            return Err(Error::Config("general.diffusion_steps must be at least 2".into()));
        }
        if self.general.batch_size == 0 {
            return Err(Error::Config("general.batch_size must be positive".into()));
        }
        self.guidance_config().validate(self.general.diffusion_steps)?;
        self.planner_config(ControllerKind::Cape)?
            .validate(self.general.n, self.general.diffusion_steps)?;
        self.observation_model()?.validate()?;
        self.difficulty()?;
        self.controllers()?;
        if self.training.learning_rate <= 0.0 {
            return Err(Error::Config("training.learning_rate must be positive".into()));
        }
        if self.training.epochs == 0 {
            return Err(Error::Config("training.epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::desk(self.general.d)
    }

    pub fn schedule(&self) -> Result<crate::schedule::DiffusionSchedule> {
        crate::schedule::make_schedule(
            self.general.diffusion_steps,
            self.schedule.beta_min,
            self.schedule.beta_max,
        )
    }

    pub fn guidance_config(&self) -> GuidanceConfig {
        GuidanceConfig {
            strength: self.guidance.strength,
            start_step: self.guidance.start_step,
            eef_radius: self.guidance.eef_radius,
            safety_margin: self.guidance.safety_margin,
        }
    }

    pub fn planner_config(&self, controller: ControllerKind) -> Result<PlannerConfig> {
        Ok(PlannerConfig {
            prefix_length: self.planner.prefix_length,
            prior_noise_level: self.planner.prior_noise_level,
            max_iterations: self
                .planner
                .max_iterations
                .unwrap_or_else(|| default_max_iterations(self.general.n, self.planner.prefix_length)),
            goal_tolerance: self.planner.goal_tolerance,
            controller,
        })
    }

    pub fn observation_model(&self) -> Result<ObservationModel> {
        Ok(ObservationModel {
            mode: self.observation.mode.parse::<ObsMode>()?,
            sensing_radius: self.observation.sensing_radius,
            samples_per_obstacle: self.observation.samples_per_obstacle,
        })
    }

    pub fn difficulty(&self) -> Result<Difficulty> {
        self.experiment.difficulty.parse()
    }

    pub fn controllers(&self) -> Result<Vec<ControllerKind>> {
        self.experiment.controllers.iter().map(|s| s.parse()).collect()
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.training.learning_rate,
            epochs: self.training.epochs,
            batch_size: self.general.batch_size,
            seed: self.training.seed,
        }
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            hidden_width: self.model.hidden_width,
            depth: self.model.depth,
            time_embed_dim: self.model.time_embed_dim,
        }
    }

    pub fn datagen_config(&self) -> crate::datagen::DatagenConfig {
        crate::datagen::DatagenConfig {
            base_count: self.datagen.count,
            step_size: self.datagen.step_size,
            goal_bias: self.datagen.goal_bias,
            shortcut_attempts: self.datagen.shortcut_attempts,
            k_per_traj: self.datagen.k_per_traj,
            min_separation: self.datagen.min_separation,
            max_nodes: crate::datagen::DatagenConfig::default().max_nodes,
        }
    }
}
