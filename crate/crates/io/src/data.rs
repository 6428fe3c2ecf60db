//! Dataset files: MNIST IDX pairs or JSON documents.

use std::fs;
use std::path::Path;

use cbc_core::Dataset;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::idx;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub dim: usize,
    pub classes: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        Self {
            dim: d.dim,
            classes: d.classes,
            points: d.points.chunks(d.dim).map(<[f64]>::to_vec).collect(),
            labels: d.labels.clone(),
        }
    }
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&DatasetFile::from(data))?;
    fs::write(path, text).map_err(|e| IoError::file(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let file: DatasetFile = serde_json::from_str(&text)
        .map_err(|e| IoError::format(path.display().to_string(), "json", e.to_string()))?;
    if let Some((i, p)) = file.points.iter().enumerate().find(|(_, p)| p.len() != file.dim) {
        return Err(IoError::format(
            path.display().to_string(),
            format!("points[{i}]"),
            format!("expected {} values, found {}", file.dim, p.len()),
        ));
    }
    Ok(Dataset::new(file.dim, file.classes, file.points.concat(), file.labels)?)
}

/// The training (`train = true`) or test split stored in `dir`: the MNIST
/// IDX pair if present, otherwise `train.json` / `test.json`.
pub fn load_split(dir: impl AsRef<Path>, train: bool) -> Result<Dataset> {
    let dir = dir.as_ref();
    let (images, labels) = idx::mnist_paths(dir, train);
    if images.exists() {
        return idx::load_idx(images, labels);
    }
    let json = dir.join(if train { "train.json" } else { "test.json" });
    if json.exists() {
        return load_dataset(json);
    }
    Err(IoError::file(
        dir,
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "no {} split: expected {} or {}",
                if train { "training" } else { "test" },
                images.display(),
                json.display()
            ),
        ),
    ))
}
