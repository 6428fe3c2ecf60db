//! Versioned JSON model files.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so a save/load round trip is bit-exact.

use std::fs;
use std::path::Path;

use cbc_core::model::{ComponentSet, LinearHead, OriginalReasoningHead, PrototypeLabels, ReasoningHead};
use cbc_core::training::History;
use cbc_core::{Head, HeadKind, Model, TemperatureMode};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, DistanceSpec, HeadSpec, TemperatureModeSpec};
use crate::error::{IoError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub classes: usize,
    pub components: usize,
    pub concepts: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadPayload {
    /// `C * M` rows of `2K` logits, concept-major within each class.
    Reasoning {
        raw: Vec<Vec<f64>>,
        negative_masked: bool,
    },
    /// `C * K` rows of 3 logits.
    OriginalTriples { raw: Vec<Vec<f64>> },
    Rbf { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    Glvq { labels: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochSummary {
    pub loss: f64,
    pub accuracy: f64,
    pub clamps: u64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub library_version: String,
    pub config: ConfigFile,
    pub seed: u64,
    pub final_loss: f64,
    pub final_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_component_distance: Option<f64>,
    pub history: Vec<EpochSummary>,
}

impl TrainingMeta {
    pub fn new(config: ConfigFile, history: &History) -> Self {
        let last = history.epochs.last();
        Self {
            library_version: crate::library_version(),
            seed: config.seed,
            config,
            final_loss: last.map_or(f64::NAN, |r| r.loss),
            final_accuracy: last.map_or(f64::NAN, |r| r.accuracy),
            min_component_distance: Some(history.min_component_distance).filter(|d| d.is_finite()),
            history: history
                .epochs
                .iter()
                .map(|r| EpochSummary {
                    loss: r.loss,
                    accuracy: r.accuracy,
                    clamps: r.clamps,
                    sigma_min: r.sigma_min,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub head_kind: HeadSpec,
    pub distance_kind: DistanceSpec,
    pub dims: Dims,
    pub temperature_mode: TemperatureModeSpec,
    pub components: Vec<Vec<f64>>,
    pub temperatures: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bases: Option<Vec<Vec<f64>>>,
    pub head: HeadPayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

fn rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    if width == 0 {
        return Vec::new();
    }
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

impl ModelFile {
    pub fn from_model(model: &Model, training: Option<TrainingMeta>) -> Self {
        let cs = &model.components;
        let (concepts, head) = match &model.head {
            Head::Cbc(h) | Head::RbfNorm(h) => (
                h.concepts,
                HeadPayload::Reasoning {
                    raw: rows(&h.raw, h.width()),
                    negative_masked: h.negative_masked,
                },
            ),
            Head::OriginalCbc(h) => (1, HeadPayload::OriginalTriples { raw: rows(&h.raw, 3) }),
            Head::Rbf(h) => (
                1,
                HeadPayload::Rbf {
                    weights: rows(&h.weights, h.components),
                    bias: h.bias.clone(),
                },
            ),
            Head::Glvq(h) => (1, HeadPayload::Glvq { labels: h.labels.clone() }),
        };
        Self {
            format_version: FORMAT_VERSION,
            head_kind: model.head_kind().into(),
            distance_kind: cs.kind.into(),
            dims: Dims {
                n: cs.dim,
                classes: model.classes(),
                components: cs.count,
                concepts,
                rank: cs.rank,
            },
            temperature_mode: cs.temperature_mode().into(),
            components: rows(&cs.translations, cs.dim),
            temperatures: cs.temperatures.clone(),
            bases: (cs.rank > 0).then(|| rows(&cs.bases, cs.dim * cs.rank)),
            head,
            training,
        }
    }

    /// Rebuilds and re-validates the model.
    pub fn to_model(&self) -> Result<Model> {
        let bad = |field: &str, message: String| IoError::format("model", field, message);
        if self.format_version != FORMAT_VERSION {
            return Err(bad(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", self.format_version),
            ));
        }
        let d = &self.dims;
        let flatten = |field: &str, rows: &[Vec<f64>], count: usize, width: usize| -> Result<Vec<f64>> {
            if rows.len() != count {
                return Err(bad(field, format!("expected {count} rows, found {}", rows.len())));
            }
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
                return Err(bad(
                    &format!("{field}[{i}]"),
                    format!("expected {width} values, found {}", r.len()),
                ));
            }
            Ok(rows.concat())
        };
        let translations = flatten("components", &self.components, d.components, d.n)?;
        let bases = match &self.bases {
            Some(b) => flatten("bases", b, d.components, d.n * d.rank)?,
            None if d.rank == 0 => Vec::new(),
            None => return Err(bad("bases", format!("missing for rank {}", d.rank))),
        };
        let expected_temps = match TemperatureMode::from(self.temperature_mode) {
            TemperatureMode::Shared => 1,
            TemperatureMode::PerComponent => d.components,
        };
        if self.temperatures.len() != expected_temps {
            return Err(bad(
                "temperatures",
                format!("expected {expected_temps} values, found {}", self.temperatures.len()),
            ));
        }
        let components = ComponentSet {
            kind: self.distance_kind.into(),
            dim: d.n,
            count: d.components,
            rank: d.rank,
            translations,
            bases,
            temperatures: self.temperatures.clone(),
        };
        let kind = HeadKind::from(self.head_kind);
        let head = match (&self.head, kind) {
            (HeadPayload::Reasoning { raw, negative_masked }, HeadKind::Cbc | HeadKind::RbfNorm) => {
                let h = ReasoningHead {
                    classes: d.classes,
                    concepts: d.concepts,
                    components: d.components,
                    raw: flatten("head.raw", raw, d.classes * d.concepts, 2 * d.components)?,
                    negative_masked: *negative_masked,
                };
                if kind == HeadKind::Cbc {
                    Head::Cbc(h)
                } else {
                    Head::RbfNorm(h)
                }
            }
            (HeadPayload::OriginalTriples { raw }, HeadKind::OriginalCbc) => {
                Head::OriginalCbc(OriginalReasoningHead {
                    classes: d.classes,
                    components: d.components,
                    raw: flatten("head.raw", raw, d.classes * d.components, 3)?,
                })
            }
            (HeadPayload::Rbf { weights, bias }, HeadKind::Rbf) => Head::Rbf(LinearHead {
                classes: d.classes,
                components: d.components,
                weights: flatten("head.weights", weights, d.classes, d.components)?,
                bias: bias.clone(),
            }),
            (HeadPayload::Glvq { labels }, HeadKind::Glvq) => Head::Glvq(PrototypeLabels {
                classes: d.classes,
                labels: labels.clone(),
            }),
            _ => {
                return Err(bad(
                    "head",
                    format!("payload does not match head_kind {}", kind.name()),
                ))
            }
        };
        let model = Model { components, head };
        model.validate().map_err(|e| bad("model", e.to_string()))?;
        Ok(model)
    }
}

pub fn model_to_json(model: &Model, training: Option<TrainingMeta>) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(model, training)).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<(Model, Option<TrainingMeta>)> {
    let file: ModelFile = serde_json::from_str(text)?;
    Ok((file.to_model()?, file.training))
}

pub fn save_model(path: impl AsRef<Path>, model: &Model, training: Option<TrainingMeta>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model, training)).map_err(|e| IoError::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, Option<TrainingMeta>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    model_from_json(&text).map_err(|e| match e {
        IoError::Json(j) => IoError::format(path.display().to_string(), "json", j.to_string()),
        IoError::Format { field, message, .. } => IoError::format(path.display().to_string(), field, message),
        other => other,
    })
}
