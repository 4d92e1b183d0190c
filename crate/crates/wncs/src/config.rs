//! TOML experiment configuration. Decibel values are converted to linear
//! units when the config is resolved.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use wncs_core::channel::ChannelParams;
use wncs_core::control::{DareMethod, DareOptions};
use wncs_core::dynamics::{InputNonlinearity, Plant};
use wncs_core::harness::{ActuatorFallback, EpisodeConfig, FailureBurst, LinkMode, SchedulePolicy};
use wncs_core::koopman::{
    default_envelope, DatasetConfig, KoopmanDims, ModelVariant, TrainingConfig,
};
use wncs_core::scheduler::SchedulerConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    DoublePendulum,
    Cartpole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub kind: PlantKind,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: InputNonlinearity,
    /// Overrides the plant's actuator limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
}

fn default_nonlinearity() -> InputNonlinearity {
    InputNonlinearity::Tanh
}

/// Diagonal cost weights; missing values fall back to per-plant defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ref: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub kappa: f64,
    pub n0_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub gamma0_db: f64,
    pub outage_target: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            kappa: 10.0,
            n0_dbm_per_hz: -168.0,
            bandwidth_hz: 2.4e9,
            gamma0_db: 20.0,
            outage_target: 1e-3,
        }
    }
}

impl ChannelSection {
    pub fn resolve(&self) -> Result<ChannelParams, CliError> {
        Ok(ChannelParams::from_db(
            self.kappa,
            self.n0_dbm_per_hz,
            self.bandwidth_hz,
            self.gamma0_db,
            self.outage_target,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub v: f64,
    pub lambda: f64,
    pub delta: f64,
    pub p_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recharge_period: Option<usize>,
    pub p_b0: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        let c = SchedulerConfig::table_one();
        Self {
            v: c.v,
            lambda: c.lambda,
            delta: c.delta,
            p_s: c.p_s,
            recharge_period: c.recharge_period,
            p_b0: c.p_b0,
        }
    }
}

impl SchedulerSection {
    pub fn resolve(&self) -> SchedulerConfig {
        SchedulerConfig {
            v: self.v,
            lambda: self.lambda,
            delta: self.delta,
            p_s: self.p_s,
            recharge_period: self.recharge_period,
            p_b0: self.p_b0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: ModelVariant,
    /// Learned observables appended to the state.
    pub lifted: usize,
    pub hidden: Vec<usize>,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Proposed,
            lifted: 20,
            hidden: vec![64, 64, 64],
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_traj: usize,
    pub n_steps: usize,
    pub noise_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_box: Option<Vec<f64>>,
    /// Half-width of the uniform random actions; defaults to the plant limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_traj: 200,
            n_steps: 500,
            noise_variance: 1e-6,
            init_box: None,
            u_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Vec<f64>>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            horizon: t.horizon,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            envelope: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorSection {
    pub samples: usize,
    pub beta_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_box: Option<Vec<f64>>,
    pub degrees: Vec<usize>,
    /// Skip selection and fit this degree.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
}

impl Default for ErrorSection {
    fn default() -> Self {
        Self {
            samples: 2000,
            beta_max: 25,
            state_box: None,
            degrees: vec![1, 2, 3],
            degree: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub slots: usize,
    pub n_c: usize,
    pub episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_box: Option<Vec<f64>>,
    pub sc_link: LinkMode,
    pub ca_link: LinkMode,
    pub fallback: ActuatorFallback,
    pub policy: SchedulePolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ca_burst: Option<FailureBurst>,
    pub divergence_bound: f64,
    pub dare: DareMethod,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        Self {
            slots: 1000,
            n_c: 10,
            episodes: 100,
            init_box: None,
            sc_link: LinkMode::Fading,
            ca_link: LinkMode::Fading,
            fallback: ActuatorFallback::Cache,
            policy: SchedulePolicy::DriftPlusPenalty,
            ca_burst: None,
            divergence_bound: 1e3,
            dare: DareMethod::Doubling,
        }
    }
}

/// Artifact paths, relative to the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactSection {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub coeffs: PathBuf,
}

impl Default for ArtifactSection {
    fn default() -> Self {
        Self {
            dataset: "dataset.bin".into(),
            model: "model.bin".into(),
            coeffs: "error_coeffs.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub channel: ChannelSection,
    /// Controller-actuator link; defaults to `channel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ca_channel: Option<ChannelSection>,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub error_model: ErrorSection,
    #[serde(default)]
    pub episode: EpisodeSection,
    #[serde(default)]
    pub artifacts: ArtifactSection,
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

impl ExperimentConfig {
    pub fn for_plant(kind: PlantKind, nonlinearity: InputNonlinearity) -> Self {
        Self {
            seed: 0,
            plant: PlantSection {
                kind,
                nonlinearity,
                u_max: None,
            },
            cost: CostSection::default(),
            channel: ChannelSection::default(),
            ca_channel: None,
            scheduler: SchedulerSection::default(),
            model: ModelSection::default(),
            data: DataSection::default(),
            training: TrainingSection::default(),
            error_model: ErrorSection::default(),
            episode: EpisodeSection::default(),
            artifacts: ArtifactSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| CliError::MissingArtifact(path.to_path_buf()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let plant = self.plant();
        let d = plant.state_dim();
        let m = plant.action_dim();
        let check = |name: &str, v: &Option<Vec<f64>>, n: usize| match v {
            Some(v) if v.len() != n => Err(CliError::Usage(format!(
                "{name} needs {n} values, got {}",
                v.len()
            ))),
            _ => Ok(()),
        };
        check("cost.q", &self.cost.q, d)?;
        check("cost.b", &self.cost.b, m)?;
        check("cost.x_ref", &self.cost.x_ref, d)?;
        check("data.init_box", &self.data.init_box, d)?;
        check("training.envelope", &self.training.envelope, d)?;
        check("error_model.state_box", &self.error_model.state_box, d)?;
        check("episode.init_box", &self.episode.init_box, d)?;
        self.channel.resolve()?;
        if let Some(ca) = &self.ca_channel {
            ca.resolve()?;
        }
        if self.scheduler.v < 0.0 || self.scheduler.delta <= 0.0 {
            return Err(CliError::Usage(
                "scheduler needs v ≥ 0 and delta > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn plant(&self) -> Plant {
        let mut plant = match self.plant.kind {
            PlantKind::DoublePendulum => Plant::double_pendulum(self.plant.nonlinearity),
            PlantKind::Cartpole => Plant::cartpole(),
        };
        if let Some(limit) = self.plant.u_max {
            match &mut plant {
                Plant::DoublePendulum { u_max, .. } | Plant::CartPole { u_max, .. } => {
                    *u_max = limit
                }
            }
        }
        plant
    }

    pub fn q(&self) -> DMatrix<f64> {
        match (&self.cost.q, self.plant.kind) {
            (Some(q), _) => diag(q),
            (None, PlantKind::DoublePendulum) => diag(&[20.0, 0.01, 5.0, 0.01]),
            (None, PlantKind::Cartpole) => diag(&[1.0, 1.0, 10.0, 1.0]),
        }
    }

    pub fn b(&self) -> DMatrix<f64> {
        match &self.cost.b {
            Some(b) => diag(b),
            None => DMatrix::identity(self.plant().action_dim(), self.plant().action_dim()) * 0.001,
        }
    }

    pub fn x_ref(&self) -> Vec<f64> {
        self.cost
            .x_ref
            .clone()
            .unwrap_or_else(|| vec![0.0; self.plant().state_dim()])
    }

    pub fn dims(&self) -> KoopmanDims {
        let plant = self.plant();
        KoopmanDims::new(plant.state_dim(), plant.action_dim(), self.model.lifted)
    }

    pub fn dataset_config(&self, seed: u64) -> DatasetConfig {
        let plant = self.plant();
        let mut cfg = DatasetConfig::for_plant(&plant, seed);
        cfg.n_traj = self.data.n_traj;
        cfg.n_steps = self.data.n_steps;
        cfg.noise_variance = self.data.noise_variance;
        if let Some(b) = &self.data.init_box {
            cfg.init_box = b.clone();
        }
        if let Some(u) = self.data.u_max {
            cfg.u_max = u;
        }
        cfg
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            horizon: self.training.horizon,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            epochs: self.training.epochs,
            weight_decay: self.training.weight_decay,
            seed: self.seed,
        }
    }

    pub fn envelope(&self) -> Vec<f64> {
        self.training
            .envelope
            .clone()
            .unwrap_or_else(|| default_envelope(&self.plant()))
    }

    pub fn dare_options(&self) -> DareOptions {
        DareOptions {
            method: self.episode.dare,
            ..DareOptions::default()
        }
    }

    /// Box for the error-sample start states; defaults to the episode box.
    pub fn error_state_box(&self) -> Vec<f64> {
        self.error_model
            .state_box
            .clone()
            .unwrap_or_else(|| self.episode_init_box())
    }

    pub fn episode_init_box(&self) -> Vec<f64> {
        self.episode
            .init_box
            .clone()
            .unwrap_or_else(|| match self.plant.kind {
                PlantKind::DoublePendulum => match self.plant.nonlinearity {
                    InputNonlinearity::Tanh => vec![0.05; 4],
                    InputNonlinearity::Cubic => vec![0.03; 4],
                },
                PlantKind::Cartpole => vec![0.05; 4],
            })
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig, CliError> {
        let sc = self.channel.resolve()?;
        let ca = self.ca_channel.unwrap_or(self.channel).resolve()?;
        Ok(EpisodeConfig {
            horizon: self.episode.slots,
            n_c: self.episode.n_c,
            q: self.q(),
            b: self.b(),
            x_ref: self.x_ref(),
            init_box: self.episode_init_box(),
            noise_variance: self.data.noise_variance,
            sc_channel: sc,
            ca_channel: ca,
            sc_link: self.episode.sc_link,
            ca_link: self.episode.ca_link,
            ca_burst: self.episode.ca_burst,
            fallback: self.episode.fallback,
            policy: self.episode.policy,
            scheduler: self.scheduler.resolve(),
            divergence_bound: self.episode.divergence_bound,
        })
    }
}
