//! JSON training configuration. Keys mirror [`TrainConfig`] field names and
//! unknown keys are rejected.

use std::fs;
use std::path::Path;

use cbc_core::objectives::DEFAULT_LAMBDA;
use cbc_core::{DistanceKind, HeadKind, LossKind, TemperatureMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    Margin {
        gamma: f64,
    },
    Glvq,
    CrossEntropy,
    RobustDelta {
        gamma: f64,
    },
    RobustSquared {
        gamma: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    LogLikelihoodRatio,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl From<LossSpec> for LossKind {
    fn from(s: LossSpec) -> Self {
        match s {
            LossSpec::Margin { gamma } => Self::Margin { gamma },
            LossSpec::Glvq => Self::Glvq,
            LossSpec::CrossEntropy => Self::CrossEntropy,
            LossSpec::RobustDelta { gamma } => Self::RobustDelta { gamma },
            LossSpec::RobustSquared { gamma, lambda } => Self::RobustSquared { gamma, lambda },
            LossSpec::LogLikelihoodRatio => Self::LogLikelihoodRatio,
        }
    }
}

impl From<LossKind> for LossSpec {
    fn from(k: LossKind) -> Self {
        match k {
            LossKind::Margin { gamma } => Self::Margin { gamma },
            LossKind::Glvq => Self::Glvq,
            LossKind::CrossEntropy => Self::CrossEntropy,
            LossKind::RobustDelta { gamma } => Self::RobustDelta { gamma },
            LossKind::RobustSquared { gamma, lambda } => Self::RobustSquared { gamma, lambda },
            LossKind::LogLikelihoodRatio => Self::LogLikelihoodRatio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DistanceSpec {
    Euclidean,
    SquaredEuclidean,
    Tangent,
    SquaredTangent,
    ConstrainedTangent { gamma: f64 },
}

impl From<DistanceSpec> for DistanceKind {
    fn from(s: DistanceSpec) -> Self {
        match s {
            DistanceSpec::Euclidean => Self::Euclidean,
            DistanceSpec::SquaredEuclidean => Self::SquaredEuclidean,
            DistanceSpec::Tangent => Self::Tangent,
            DistanceSpec::SquaredTangent => Self::SquaredTangent,
            DistanceSpec::ConstrainedTangent { gamma } => Self::ConstrainedTangent { gamma },
        }
    }
}

impl From<DistanceKind> for DistanceSpec {
    fn from(k: DistanceKind) -> Self {
        match k {
            DistanceKind::Euclidean => Self::Euclidean,
            DistanceKind::SquaredEuclidean => Self::SquaredEuclidean,
            DistanceKind::Tangent => Self::Tangent,
            DistanceKind::SquaredTangent => Self::SquaredTangent,
            DistanceKind::ConstrainedTangent { gamma } => Self::ConstrainedTangent { gamma },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadSpec {
    Cbc,
    OriginalCbc,
    Rbf,
    RbfNorm,
    Glvq,
}

impl From<HeadSpec> for HeadKind {
    fn from(s: HeadSpec) -> Self {
        match s {
            HeadSpec::Cbc => Self::Cbc,
            HeadSpec::OriginalCbc => Self::OriginalCbc,
            HeadSpec::Rbf => Self::Rbf,
            HeadSpec::RbfNorm => Self::RbfNorm,
            HeadSpec::Glvq => Self::Glvq,
        }
    }
}

impl From<HeadKind> for HeadSpec {
    fn from(k: HeadKind) -> Self {
        match k {
            HeadKind::Cbc => Self::Cbc,
            HeadKind::OriginalCbc => Self::OriginalCbc,
            HeadKind::Rbf => Self::Rbf,
            HeadKind::RbfNorm => Self::RbfNorm,
            HeadKind::Glvq => Self::Glvq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureModeSpec {
    Shared,
    PerComponent,
}

impl From<TemperatureModeSpec> for TemperatureMode {
    fn from(s: TemperatureModeSpec) -> Self {
        match s {
            TemperatureModeSpec::Shared => Self::Shared,
            TemperatureModeSpec::PerComponent => Self::PerComponent,
        }
    }
}

impl From<TemperatureMode> for TemperatureModeSpec {
    fn from(m: TemperatureMode) -> Self {
        match m {
            TemperatureMode::Shared => Self::Shared,
            TemperatureMode::PerComponent => Self::PerComponent,
        }
    }
}

/// Serialized form of [`TrainConfig`]; missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossSpec,
    pub seed: u64,
    pub temperature_mode: TemperatureModeSpec,
    pub p0: f64,
    pub concepts_per_class: usize,
    pub subspace_dim: usize,
    pub clip_components: bool,
    pub head: HeadSpec,
    pub distance: DistanceSpec,
    pub components: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_temperature: Option<f64>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        TrainConfig::default().into()
    }
}

impl From<TrainConfig> for ConfigFile {
    fn from(c: TrainConfig) -> Self {
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            loss: c.loss.into(),
            seed: c.seed,
            temperature_mode: c.temperature_mode.into(),
            p0: c.p0,
            concepts_per_class: c.concepts_per_class,
            subspace_dim: c.subspace_dim,
            clip_components: c.clip_components,
            head: c.head.into(),
            distance: c.distance.into(),
            components: c.components,
            initial_temperature: c.initial_temperature,
        }
    }
}

impl From<ConfigFile> for TrainConfig {
    fn from(c: ConfigFile) -> Self {
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            loss: c.loss.into(),
            seed: c.seed,
            temperature_mode: c.temperature_mode.into(),
            p0: c.p0,
            concepts_per_class: c.concepts_per_class,
            subspace_dim: c.subspace_dim,
            clip_components: c.clip_components,
            head: c.head.into(),
            distance: c.distance.into(),
            components: c.components,
            initial_temperature: c.initial_temperature,
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let file: ConfigFile = serde_json::from_str(text)?;
    let config = TrainConfig::from(file);
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_config(&text).map_err(|e| match e {
        IoError::Json(j) => IoError::format(path.display().to_string(), "config", j.to_string()),
        other => other,
    })
}

pub fn config_to_json(config: &TrainConfig) -> String {
    serde_json::to_string_pretty(&ConfigFile::from(config.clone())).expect("config serializes")
}
