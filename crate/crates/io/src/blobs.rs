//! Gaussian blobs in the unit square.

use cbc_core::rng::{self, normal};
use cbc_core::{Dataset, Result};

/// Center of class `c` out of `n_classes`: evenly spaced on a circle of
/// radius 0.35 around `(0.5, 0.5)`.
pub fn blob_center(c: usize, n_classes: usize) -> [f64; 2] {
    let angle = std::f64::consts::TAU * c as f64 / n_classes as f64;
    [0.5 + 0.35 * angle.cos(), 0.5 + 0.35 * angle.sin()]
}

/// `per_class` points per class drawn from isotropic normals with standard
/// deviation `spread` around [`blob_center`], clipped to `[0, 1]`. Classes
/// are interleaved in sample order.
pub fn make_blobs(n_classes: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_classes == 0 || per_class == 0 {
        return Err(cbc_core::Error::Input("blob counts must be positive".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(cbc_core::Error::Input(format!("blob spread {spread} must be >= 0")));
    }
    let mut rng = rng::seeded(seed);
    let mut points = Vec::with_capacity(2 * n_classes * per_class);
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for _ in 0..per_class {
        for c in 0..n_classes {
            for m in blob_center(c, n_classes) {
                points.push((m + spread * normal(&mut rng)).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    Dataset::new(2, n_classes, points, labels)
}
