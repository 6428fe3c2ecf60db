#![allow(dead_code)]

use cbc_core::{rng, Dataset};
use rand::Rng;

/// Gaussian blobs in the unit square with centers on a circle around the
/// middle, labels interleaved.
pub fn blobs(classes: usize, per_class: usize, spread: f64, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * classes {
        let c = i % classes;
        let angle = std::f64::consts::TAU * c as f64 / classes as f64;
        let center = [0.5 + 0.35 * angle.cos(), 0.5 + 0.35 * angle.sin()];
        for m in center {
            points.push((m + spread * rng::normal(&mut r)).clamp(0.0, 1.0));
        }
        labels.push(c);
    }
    Dataset::new(2, classes, points, labels).unwrap()
}

pub fn unit_direction<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng::normal(r)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}
