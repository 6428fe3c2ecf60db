//! Distances between points and learned affine subspaces.
//!
//! Points are plain `&[f64]` slices. A basis of an `r`-dimensional subspace in
//! `R^n` is stored row-major as an `n x r` matrix, so row `i` holds the `i`-th
//! coordinate of every basis vector.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math;

/// Tolerance on `||W^T W - I||_F` accepted as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Which dissimilarity a component set uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceKind {
    Euclidean,
    SquaredEuclidean,
    Tangent,
    SquaredTangent,
    /// Tangent distance restricted to a ball of radius `gamma` around the
    /// translation inside the subspace.
    ConstrainedTangent { gamma: f64 },
}

impl DistanceKind {
    /// `true` when the detection kernel uses the squared distance.
    pub fn is_squared(self) -> bool {
        matches!(self, Self::SquaredEuclidean | Self::SquaredTangent)
    }

    /// `true` when components are affine subspaces rather than points.
    pub fn uses_subspaces(self) -> bool {
        matches!(
            self,
            Self::Tangent | Self::SquaredTangent | Self::ConstrainedTangent { .. }
        )
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Self::ConstrainedTangent { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::Input(format!("constrained tangent radius must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::SquaredEuclidean => "squared_euclidean",
            Self::Tangent => "tangent",
            Self::SquaredTangent => "squared_tangent",
            Self::ConstrainedTangent { .. } => "constrained_tangent",
        }
    }
}

/// Borrowed view of an affine subspace `{ w + W theta }`.
#[derive(Debug, Clone, Copy)]
pub struct SubspaceRef<'a> {
    pub translation: &'a [f64],
    /// `n x r` row-major.
    pub basis: &'a [f64],
    pub rank: usize,
}

/// Owned affine subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    pub translation: Vec<f64>,
    pub basis: Vec<f64>,
    pub rank: usize,
}

impl AffineSubspace {
    /// Builds a subspace and checks the orthonormality invariant.
    pub fn new(translation: Vec<f64>, basis: Vec<f64>, rank: usize) -> Result<Self> {
        let s = Self {
            translation,
            basis,
            rank,
        };
        s.as_ref().validate()?;
        Ok(s)
    }

    /// Degenerate subspace that behaves like a plain point.
    pub fn point(translation: Vec<f64>) -> Self {
        Self {
            translation,
            basis: Vec::new(),
            rank: 0,
        }
    }

    pub fn as_ref(&self) -> SubspaceRef<'_> {
        SubspaceRef {
            translation: &self.translation,
            basis: &self.basis,
            rank: self.rank,
        }
    }
}

impl<'a> SubspaceRef<'a> {
    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        check_len("subspace basis", n * self.rank, self.basis.len())?;
        if self.rank >= n && n > 0 {
            return Err(Error::Precondition(format!(
                "subspace rank {} must be smaller than the ambient dimension {n}",
                self.rank
            )));
        }
        let dev = orthonormality_defect(self.basis, n, self.rank);
        if dev > ORTHONORMAL_TOL {
            return Err(Error::Precondition(format!(
                "basis is not orthonormal: ||W^T W - I||_F = {dev:.3e}"
            )));
        }
        Ok(())
    }

    /// `W^T v`
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.rank];
        basis_transpose_mul(self.basis, self.rank, v, &mut theta);
        theta
    }
}

/// `out = W^T v` for a row-major `n x r` basis.
#[inline]
pub(crate) fn basis_transpose_mul(basis: &[f64], rank: usize, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    if rank == 0 {
        return;
    }
    for (row, &vi) in basis.chunks_exact(rank).zip(v) {
        if vi != 0.0 {
            math::axpy(vi, row, out);
        }
    }
}

/// `out = W theta` for a row-major `n x r` basis.
#[inline]
pub(crate) fn basis_mul(basis: &[f64], rank: usize, theta: &[f64], out: &mut [f64]) {
    if rank == 0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    for (o, row) in out.iter_mut().zip(basis.chunks_exact(rank)) {
        *o = math::dot(row, theta);
    }
}

/// `||W^T W - I||_F` of an `n x r` row-major matrix.
pub fn orthonormality_defect(basis: &[f64], n: usize, rank: usize) -> f64 {
    let mut total = 0.0;
    for a in 0..rank {
        for b in a..rank {
            let mut s = 0.0;
            for i in 0..n {
                s += basis[i * rank + a] * basis[i * rank + b];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            let e = (s - target) * (s - target);
            total += if a == b { e } else { 2.0 * e };
        }
    }
    math::sqrt(total)
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("point", x.len(), y.len())?;
    Ok(math::sqrt(
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
    ))
}

/// Best approximating element `w + W W^T (x - w)` of `s` for `x`.
pub fn project_onto_subspace(x: &[f64], s: SubspaceRef<'_>) -> Result<Vec<f64>> {
    check_len("point", s.dim(), x.len())?;
    s.validate()?;
    Ok(project_unchecked(x, s))
}

fn project_unchecked(x: &[f64], s: SubspaceRef<'_>) -> Vec<f64> {
    let diff: Vec<f64> = x.iter().zip(s.translation).map(|(a, w)| a - w).collect();
    let theta = s.coefficients(&diff);
    let mut out = vec![0.0; x.len()];
    basis_mul(s.basis, s.rank, &theta, &mut out);
    for (o, w) in out.iter_mut().zip(s.translation) {
        *o += w;
    }
    out
}

/// Minimal Euclidean distance between `x` and the affine subspace `s`,
/// `||(I - W W^T)(x - w)||`.
pub fn tangent_distance(x: &[f64], s: SubspaceRef<'_>) -> Result<f64> {
    let p = project_onto_subspace(x, s)?;
    euclidean_distance(x, &p)
}

/// Tangent distance where the subspace coordinates are confined to a ball of
/// radius `gamma`.
pub fn constrained_tangent_distance(x: &[f64], s: SubspaceRef<'_>, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Input(format!("radius must be positive, got {gamma}")));
    }
    let p = project_onto_subspace(x, s)?;
    let residual = euclidean_distance(x, &p)?;
    let shift = euclidean_distance(s.translation, &p)?;
    let excess = (shift - gamma).max(0.0);
    Ok(math::sqrt(residual * residual + excess * excess))
}

/// Orthonormalizes the columns of an `n x r` row-major matrix in place using
/// modified Gram-Schmidt with one re-orthogonalization pass. The result spans
/// the same column space and keeps the orientation of every column.
pub fn orthonormalize_basis(m: &mut [f64], n: usize, rank: usize) -> Result<()> {
    check_len("basis", n * rank, m.len())?;
    let mut col = vec![0.0; n];
    for j in 0..rank {
        for i in 0..n {
            col[i] = m[i * rank + j];
        }
        let original = math::norm(&col);
        if !(original.is_finite()) || original == 0.0 {
            return Err(Error::Numerical(format!(
                "basis column {j} has norm {original}; cannot orthonormalize"
            )));
        }
        for _pass in 0..2 {
            for k in 0..j {
                let mut proj = 0.0;
                for i in 0..n {
                    proj += m[i * rank + k] * col[i];
                }
                for i in 0..n {
                    col[i] -= proj * m[i * rank + k];
                }
            }
        }
        let remaining = math::norm(&col);
        if remaining <= 1e-10 * original {
            return Err(Error::Numerical(format!(
                "basis is rank deficient: column {j} keeps {remaining:.3e} of norm {original:.3e} \
                 after removing the span of earlier columns"
            )));
        }
        for i in 0..n {
            m[i * rank + j] = col[i] / remaining;
        }
    }
    Ok(())
}
