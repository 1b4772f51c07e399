//! Experiment configuration: a TOML file with a strict schema (unknown keys
//! are rejected) and validation of every field before any compute starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use morse_core::{
    Activation, AdamConfig, ChainSource, DashTrainConfig, DotTrainConfig, InputMask, MlpConfig,
    NoiseSchedule, PairRollout, SamplerKind, ToyDataset, Vector,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every random quantity in the experiment derives from it.
    pub seed: u64,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub dash_training: DashTrainingSection,
    #[serde(default)]
    pub dot_training: DotTrainingSection,
    #[serde(default)]
    pub morse: MorseSection,
    pub bench: Option<BenchSection>,
    pub sample: Option<SampleSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub dim: Option<usize>,
    pub variances: Option<Vec<f64>>,
    pub modes: Option<usize>,
    pub radius: Option<f64>,
    pub component_sigma: Option<f64>,
    pub point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    IsotropicGaussian,
    AnisotropicGaussian,
    GmmRing,
    PointMass,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub total_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { total_steps: 1000, beta_start: 1e-4, beta_end: 0.02 }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default)]
    pub kind: SamplerKindArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKindArg {
    #[default]
    Ddim,
    Ddpm,
}

impl From<SamplerKindArg> for SamplerKind {
    fn from(k: SamplerKindArg) -> Self {
        match k {
            SamplerKindArg::Ddim => SamplerKind::Ddim,
            SamplerKindArg::Ddpm => SamplerKind::DdpmAncestral,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub activation: ActivationArg,
    pub lora_rank: usize,
    pub lora_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            embed_dim: 32,
            activation: ActivationArg::Silu,
            lora_rank: 8,
            lora_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Silu,
    Relu,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Silu => Activation::SiLU,
            ActivationArg::Relu => Activation::ReLU,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DashTrainingSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay of the learning rate to this fraction of the base
    /// (1.0 = constant).
    #[serde(default = "one")]
    pub lr_final_fraction: f64,
}

impl Default for DashTrainingSection {
    fn default() -> Self {
        Self { iterations: 8000, batch_size: 256, learning_rate: 1e-3, lr_final_fraction: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DotTrainingSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay of the learning rate to this fraction of the base
    /// (1.0 = constant).
    #[serde(default = "one")]
    pub lr_final_fraction: f64,
    /// Optional cap on the step-pair gap (omit for unbounded).
    pub max_gap: Option<usize>,
    /// Optional multi-step rollout when generating x_to (omit for the
    /// standard single jump).
    pub rollout_substeps: Option<usize>,
    pub validation_examples: usize,
}

impl Default for DotTrainingSection {
    fn default() -> Self {
        Self {
            iterations: 4000,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_final_fraction: 1.0,
            max_gap: None,
            rollout_substeps: None,
            validation_examples: 4096,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseSection {
    pub speed_ratio: f64,
    #[serde(default)]
    pub chain_source: ChainSourceArg,
    #[serde(default)]
    pub input_mask: InputMaskSection,
}

impl Default for MorseSection {
    fn default() -> Self {
        Self {
            speed_ratio: 4.0,
            chain_source: ChainSourceArg::Dash,
            input_mask: InputMaskSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ChainSourceArg {
    #[default]
    Dash,
    Previous,
}

impl From<ChainSourceArg> for ChainSource {
    fn from(c: ChainSourceArg) -> Self {
        match c {
            ChainSourceArg::Dash => ChainSource::FromDash,
            ChainSourceArg::Previous => ChainSource::FromPrevious,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InputMaskSection {
    pub x_ts: bool,
    pub z_ts: bool,
    pub t_s: bool,
}

impl Default for InputMaskSection {
    fn default() -> Self {
        Self { x_ts: true, z_ts: true, t_s: true }
    }
}

impl From<InputMaskSection> for InputMask {
    fn from(m: InputMaskSection) -> Self {
        InputMask { use_x_ts: m.x_ts, use_z_ts: m.z_ts, use_t_s: m.t_s }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Baseline all-Dash step counts (one curve point per entry).
    pub grid_sizes: Vec<usize>,
    /// LSD budgets for the dual-model rows.
    pub morse_budgets: Vec<usize>,
    /// Exchanged-steps ratios k/n; the first one is the candidate curve used
    /// for the speedup table.
    pub exchanged_ratios: Vec<f64>,
    /// Additional ratios swept for the ratio-effect table.
    #[serde(default)]
    pub sweep_ratios: Vec<f64>,
    /// Same-grid Dash/Dot splits (optional alternative parameterization).
    #[serde(default)]
    pub dash_counts: Vec<usize>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub metric: MetricKind,
    pub latency_set: Vec<f64>,
}

fn default_chains() -> usize {
    20_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Mmd,
    W2,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub chains: usize,
    pub grid_size: usize,
    /// Dash steps for the dual schedule; omit to run all-Dash.
    pub dash_count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl ExperimentConfig {
    /// Parse and validate; every error names the offending key.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset()?;
        self.noise_schedule()?;
        if self.model.hidden.is_empty() || self.model.hidden.iter().any(|w| *w == 0) {
            return Err(CliError::Config("model.hidden must be non-empty positive widths".into()));
        }
        if self.model.embed_dim == 0 || self.model.embed_dim % 2 != 0 {
            return Err(CliError::Config("model.embed_dim must be positive even".into()));
        }
        if self.model.lora_rank == 0 {
            return Err(CliError::Config("model.lora_rank must be >= 1".into()));
        }
        if !(self.morse.speed_ratio > 1.0) {
            return Err(CliError::Config("morse.speed_ratio must be > 1".into()));
        }
        for (name, s) in [
            ("dash_training", (self.dash_training.iterations, self.dash_training.batch_size)),
            ("dot_training", (self.dot_training.iterations, self.dot_training.batch_size)),
        ] {
            if s.0 == 0 || s.1 == 0 {
                return Err(CliError::Config(format!(
                    "{name}.iterations and {name}.batch_size must be >= 1"
                )));
            }
        }
        if self.dot_training.validation_examples < 2 {
            return Err(CliError::Config("dot_training.validation_examples must be >= 2".into()));
        }
        for (name, f) in [
            ("dash_training", self.dash_training.lr_final_fraction),
            ("dot_training", self.dot_training.lr_final_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(CliError::Config(format!(
                    "{name}.lr_final_fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        if let Some(bench) = &self.bench {
            let t = self.schedule.total_steps;
            if bench.grid_sizes.is_empty() {
                return Err(CliError::Config("bench.grid_sizes must be non-empty".into()));
            }
            if bench.grid_sizes.iter().any(|n| *n < 1 || *n > t) {
                return Err(CliError::Config(format!("bench.grid_sizes must lie in [1, {t}]")));
            }
            if bench.morse_budgets.iter().any(|n| *n < 1) {
                return Err(CliError::Config("bench.morse_budgets must be >= 1".into()));
            }
            for r in bench.exchanged_ratios.iter().chain(&bench.sweep_ratios) {
                if !(0.0..1.0).contains(r) {
                    return Err(CliError::Config(format!(
                        "exchanged ratio {r} must lie in [0, 1)"
                    )));
                }
            }
            if bench.exchanged_ratios.is_empty() && bench.dash_counts.is_empty() {
                return Err(CliError::Config(
                    "bench needs exchanged_ratios or dash_counts".into(),
                ));
            }
            if bench.chains < 40 {
                return Err(CliError::Config("bench.chains must be >= 40".into()));
            }
            if bench.latency_set.is_empty() || bench.latency_set.iter().any(|l| !(*l > 0.0)) {
                return Err(CliError::Config("bench.latency_set must be positive".into()));
            }
        }
        if let Some(sample) = &self.sample {
            if sample.chains == 0 || sample.grid_size < 1 || sample.grid_size > self.schedule.total_steps {
                return Err(CliError::Config("sample.chains/grid_size out of range".into()));
            }
            if let Some(d) = sample.dash_count {
                if d < 1 || d > sample.grid_size {
                    return Err(CliError::Config("sample.dash_count out of range".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<ToyDataset> {
        let d = &self.dataset;
        let require = |field: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!("dataset.{field} is required for {:?}", d.kind)))
            }
        };
        let ds = match d.kind {
            DatasetKind::IsotropicGaussian => {
                require("dim", d.dim.is_some())?;
                ToyDataset::IsotropicGaussian { dim: d.dim.unwrap() }
            }
            DatasetKind::AnisotropicGaussian => {
                require("variances", d.variances.is_some())?;
                ToyDataset::AnisotropicGaussian { variances: d.variances.clone().unwrap() }
            }
            DatasetKind::GmmRing => ToyDataset::GmmRing {
                modes: d.modes.unwrap_or(8),
                radius: d.radius.unwrap_or(4.0),
                component_sigma: d.component_sigma.unwrap_or(0.3),
            },
            DatasetKind::PointMass => {
                require("point", d.point.is_some())?;
                let point = Vector::new(d.point.clone().unwrap())
                    .map_err(|e| CliError::Config(format!("dataset.point: {e}")))?;
                ToyDataset::PointMass { point }
            }
        };
        ds.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(ds)
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(
            self.schedule.total_steps,
            self.schedule.beta_start,
            self.schedule.beta_end,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn mlp_config(&self, data_dim: usize) -> MlpConfig {
        MlpConfig {
            data_dim,
            embed_dim: self.model.embed_dim,
            extra_cond_dim: 0,
            hidden: self.model.hidden.clone(),
            activation: self.model.activation.into(),
            total_steps: self.schedule.total_steps,
        }
    }

    pub fn dash_train_config(&self, seed: u64) -> DashTrainConfig {
        DashTrainConfig {
            iterations: self.dash_training.iterations,
            batch_size: self.dash_training.batch_size,
            adam: AdamConfig { lr: self.dash_training.learning_rate, ..AdamConfig::default() },
            seed,
            lr_final_fraction: self.dash_training.lr_final_fraction,
        }
    }

    pub fn dot_train_config(&self, seed: u64) -> DotTrainConfig {
        DotTrainConfig {
            iterations: self.dot_training.iterations,
            batch_size: self.dot_training.batch_size,
            adam: AdamConfig { lr: self.dot_training.learning_rate, ..AdamConfig::default() },
            seed,
            max_gap: self.dot_training.max_gap,
            rollout: match self.dot_training.rollout_substeps {
                None => PairRollout::SingleJump,
                Some(k) => PairRollout::MultiStep(k),
            },
            pair_kind: self.sampler.kind.into(),
            validation_examples: self.dot_training.validation_examples,
            lr_final_fraction: self.dot_training.lr_final_fraction,
        }
    }
}
