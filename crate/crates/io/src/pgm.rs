//! Binary PGM (P5) export of learned components.

use std::fs;
use std::path::{Path, PathBuf};

use cbc_core::Model;

use crate::error::{IoError, Result};

/// `round(255 * v)` with halves rounded up, after clamping to `[0, 1]`.
pub fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

/// `P5\n<w> <h>\n255\n` followed by the raw bytes.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_byte(v)));
    out
}

/// Rescales `values` linearly onto `[0, 1]`; constant input maps to 0.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// Writes `component_<k>.pgm` for every component and, for subspace
/// components, `component_<k>_basis_<j>.pgm` per basis column. Returns the
/// written paths.
pub fn export_components(model: &Model, out_dir: &Path, side: usize) -> Result<Vec<PathBuf>> {
    let cs = &model.components;
    if side == 0 || side * side != cs.dim {
        return Err(cbc_core::Error::Input(format!(
            "components of dimension {} are not {side}x{side} images",
            cs.dim
        ))
        .into());
    }
    fs::create_dir_all(out_dir).map_err(|e| IoError::file(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, values: &[f64]| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, encode_pgm(side, side, values)).map_err(|e| IoError::file(&path, e))?;
        written.push(path);
        Ok(())
    };
    let (n, r) = (cs.dim, cs.rank);
    for k in 0..cs.count {
        write(format!("component_{k}.pgm"), cs.translation(k))?;
        let basis = cs.basis(k);
        for j in 0..r {
            let column: Vec<f64> = (0..n).map(|i| basis[i * r + j]).collect();
            write(format!("component_{k}_basis_{j}.pgm"), &min_max_normalize(&column))?;
        }
    }
    Ok(written)
}
