use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::geometry::{self, DistanceKind, SubspaceRef};
use crate::math;

/// Whether all components share one temperature or each owns its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemperatureMode {
    Shared,
    PerComponent,
}

/// `K` learned components (points or affine subspaces) with their
/// temperatures.
///
/// Translations are stored `K x n` row-major and bases `K x n x r`, each
/// component's basis row-major `n x r`. Temperatures hold either one shared
/// value or one value per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub kind: DistanceKind,
    pub dim: usize,
    pub count: usize,
    pub rank: usize,
    pub translations: Vec<f64>,
    pub bases: Vec<f64>,
    pub temperatures: Vec<f64>,
}

/// Per-sample intermediate values of the detection kernel.
///
/// `squared[k]` is the squared distance of component `k`, `distances[k]` its
/// square root and `detections[k] = exp(-D_k / sigma_k)` where `D_k` is the
/// squared or plain distance depending on the kind.
#[derive(Debug, Clone, Default)]
pub struct Detection {
    pub squared: Vec<f64>,
    pub distances: Vec<f64>,
    pub detections: Vec<f64>,
    pub(crate) theta: Vec<f64>,
}

impl Detection {
    pub fn new(cs: &ComponentSet) -> Self {
        Self {
            squared: vec![0.0; cs.count],
            distances: vec![0.0; cs.count],
            detections: vec![0.0; cs.count],
            theta: vec![0.0; cs.count * cs.rank],
        }
    }

    /// The exponent `D_k` fed into the kernel.
    #[inline]
    pub fn exponent(&self, kind: DistanceKind, k: usize) -> f64 {
        if kind.is_squared() {
            self.squared[k]
        } else {
            self.distances[k]
        }
    }
}

impl ComponentSet {
    pub fn temperature_mode(&self) -> TemperatureMode {
        if self.temperatures.len() == 1 && self.count != 1 {
            TemperatureMode::Shared
        } else {
            TemperatureMode::PerComponent
        }
    }

    #[inline]
    pub fn temperature(&self, k: usize) -> f64 {
        if self.temperatures.len() == 1 {
            self.temperatures[0]
        } else {
            self.temperatures[k]
        }
    }

    pub fn sigma_min(&self) -> f64 {
        self.temperatures.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the smallest temperature (lowest index on ties).
    pub(crate) fn sigma_min_index(&self) -> usize {
        math::argmin(&self.temperatures).unwrap_or(0)
    }

    pub fn translation(&self, k: usize) -> &[f64] {
        &self.translations[k * self.dim..(k + 1) * self.dim]
    }

    pub fn basis(&self, k: usize) -> &[f64] {
        let len = self.dim * self.rank;
        &self.bases[k * len..(k + 1) * len]
    }

    pub fn subspace(&self, k: usize) -> SubspaceRef<'_> {
        SubspaceRef {
            translation: self.translation(k),
            basis: self.basis(k),
            rank: self.rank,
        }
    }

    /// Sets every temperature to `sigma`, keeping the current mode.
    pub fn set_temperature(&mut self, sigma: f64) {
        self.temperatures.iter_mut().for_each(|t| *t = sigma);
    }

    /// Checks every structural and numerical invariant.
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.count == 0 {
            return Err(Error::Input("a component set needs at least one component".into()));
        }
        if self.dim == 0 {
            return Err(Error::Input("input dimension must be positive".into()));
        }
        if !self.kind.uses_subspaces() && self.rank != 0 {
            return Err(Error::Input(format!(
                "{} components are points, got subspace rank {}",
                self.kind.name(),
                self.rank
            )));
        }
        if self.rank >= self.dim {
            return Err(Error::Input(format!(
                "subspace rank {} must be below the input dimension {}",
                self.rank, self.dim
            )));
        }
        check_len("translations", self.count * self.dim, self.translations.len())?;
        check_len("bases", self.count * self.dim * self.rank, self.bases.len())?;
        if self.temperatures.len() != 1 && self.temperatures.len() != self.count {
            return Err(Error::Dimension {
                what: "temperatures",
                expected: self.count,
                got: self.temperatures.len(),
            });
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Input(format!("temperatures must be positive, got {t}")));
        }
        if self.translations.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite component entry".into()));
        }
        for k in 0..self.count {
            let defect = geometry::orthonormality_defect(self.basis(k), self.dim, self.rank);
            if !(defect <= geometry::ORTHONORMAL_TOL) {
                return Err(Error::Precondition(format!(
                    "basis of component {k} is not orthonormal: ||W^T W - I||_F = {defect:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Squared distance of `x` to component `k`, writing the subspace
    /// coordinates `W^T (x - w)` into `theta`.
    ///
    /// Tangent kinds evaluate the quadratic form `||v||^2 - ||W^T v||^2`,
    /// which equals the squared residual norm for an orthonormal basis.
    #[inline]
    pub(crate) fn squared_distance_to(&self, k: usize, x: &[f64], theta: &mut [f64]) -> f64 {
        let w = self.translation(k);
        if self.rank == 0 {
            let mut acc = [0.0f64; 4];
            let chunks = x.len() / 4;
            for c in 0..chunks {
                let j = 4 * c;
                for l in 0..4 {
                    let d = x[j + l] - w[j + l];
                    acc[l] += d * d;
                }
            }
            let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            for j in 4 * chunks..x.len() {
                let d = x[j] - w[j];
                s += d * d;
            }
            return s;
        }
        let r = self.rank;
        theta.iter_mut().for_each(|t| *t = 0.0);
        let mut vv = 0.0;
        for ((xi, wi), row) in x.iter().zip(w).zip(self.basis(k).chunks_exact(r)) {
            let v = xi - wi;
            vv += v * v;
            if v != 0.0 {
                math::axpy(v, row, theta);
            }
        }
        let tt = math::norm_sq(theta);
        let mut q = vv - tt;
        if let DistanceKind::ConstrainedTangent { gamma } = self.kind {
            let excess = (math::sqrt(tt) - gamma).max(0.0);
            q += excess * excess;
        }
        q.max(0.0)
    }

    /// Fills `det` with distances and detection probabilities for `x`.
    pub fn detect_into(&self, x: &[f64], det: &mut Detection) -> Result<()> {
        check_len("input", self.dim, x.len())?;
        let r = self.rank;
        for k in 0..self.count {
            let theta = &mut det.theta[k * r..(k + 1) * r];
            let q = self.squared_distance_to(k, x, theta);
            if !q.is_finite() {
                return Err(Error::Numerical(format!("non-finite distance to component {k}")));
            }
            let dist = math::sqrt(q);
            det.squared[k] = q;
            det.distances[k] = dist;
            let e = if self.kind.is_squared() { q } else { dist };
            det.detections[k] = math::exp(-e / self.temperature(k));
        }
        Ok(())
    }

    /// Non-squared distances of `x` to every component.
    pub fn distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut det = Detection::new(self);
        self.detect_into(x, &mut det)?;
        Ok(det.distances)
    }

    /// Back-propagates `g_squared[k] = dL/d(squared distance k)` into the
    /// translation and basis gradients and, optionally, the input gradient.
    pub(crate) fn backward_squared(
        &self,
        x: &[f64],
        det: &Detection,
        g_squared: &[f64],
        mut grad_translations: Option<&mut [f64]>,
        mut grad_bases: Option<&mut [f64]>,
        mut grad_input: Option<&mut [f64]>,
        h: &mut [f64],
    ) {
        let n = self.dim;
        let r = self.rank;
        for k in 0..self.count {
            let g = g_squared[k];
            if g == 0.0 {
                continue;
            }
            let w = self.translation(k);
            if r == 0 {
                // dq/dv = 2 v, v = x - w
                if let Some(gt) = grad_translations.as_deref_mut() {
                    let gt = &mut gt[k * n..(k + 1) * n];
                    for ((o, xi), wi) in gt.iter_mut().zip(x).zip(w) {
                        *o -= 2.0 * g * (xi - wi);
                    }
                }
                if let Some(gx) = grad_input.as_deref_mut() {
                    for ((o, xi), wi) in gx.iter_mut().zip(x).zip(w) {
                        *o += 2.0 * g * (xi - wi);
                    }
                }
                continue;
            }
            let theta = &det.theta[k * r..(k + 1) * r];
            // h = dq/dtheta
            let mut coef = -2.0;
            if let DistanceKind::ConstrainedTangent { gamma } = self.kind {
                let t = math::norm(theta);
                if t > gamma {
                    coef += 2.0 * (t - gamma) / t;
                }
            }
            for (hi, ti) in h.iter_mut().zip(theta) {
                *hi = coef * ti;
            }
            let basis = self.basis(k);
            let mut gb = grad_bases
                .as_deref_mut()
                .map(|gb| &mut gb[k * n * r..(k + 1) * n * r]);
            let mut gt = grad_translations
                .as_deref_mut()
                .map(|gt| &mut gt[k * n..(k + 1) * n]);
            for i in 0..n {
                let v = x[i] - w[i];
                let row = &basis[i * r..(i + 1) * r];
                let gv = g * (2.0 * v + math::dot(row, h));
                if let Some(gt) = gt.as_deref_mut() {
                    gt[i] -= gv;
                }
                if let Some(gx) = grad_input.as_deref_mut() {
                    gx[i] += gv;
                }
                if let Some(gb) = gb.as_deref_mut() {
                    if v != 0.0 {
                        math::axpy(g * v, h, &mut gb[i * r..(i + 1) * r]);
                    }
                }
            }
        }
    }
}

/// Detection probabilities `exp(-dist_k / sigma_k)` of `x` for every component.
pub fn detect(x: &[f64], cs: &ComponentSet) -> Result<Vec<f64>> {
    let mut det = Detection::new(cs);
    cs.detect_into(x, &mut det)?;
    Ok(det.detections)
}

/// Temperature that maps `mean + std` of the pairwise distances of `data`
/// (rows of length `dim`) to the detection probability `p0`.
///
/// Distances follow `kind`: squared kinds use squared Euclidean distances,
/// all others the plain Euclidean distance between the data points.
pub fn init_temperature(data: &[f64], dim: usize, kind: DistanceKind, p0: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Input(format!("p0 must lie in (0, 1), got {p0}")));
    }
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::Input("data length is not a multiple of the dimension".into()));
    }
    let rows: Vec<&[f64]> = data.chunks_exact(dim).collect();
    if rows.len() < 2 {
        return Err(Error::Input("at least two data points are required".into()));
    }
    // Welford over all pairs.
    let mut count = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let sq: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = if kind.is_squared() { sq } else { math::sqrt(sq) };
            count += 1.0;
            let delta = d - mean;
            mean += delta / count;
            m2 += delta * (d - mean);
        }
    }
    let std = math::sqrt(m2 / count);
    temperature_from_stats(mean, std, p0)
}

/// `sigma = -(mean + std) / ln(p0)`.
pub fn temperature_from_stats(mean: f64, std: f64, p0: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Input(format!("p0 must lie in (0, 1), got {p0}")));
    }
    let sigma = -(mean + std) / math::ln(p0);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Numerical(format!(
            "degenerate distance statistics (mean {mean}, std {std}) give temperature {sigma}"
        )));
    }
    Ok(sigma)
}
