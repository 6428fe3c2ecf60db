use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};

/// `N` points of dimension `n` stored row-major, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub classes: usize,
    pub points: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, checking shapes, labels and that every value lies
    /// in `[0, 1]`.
    pub fn new(dim: usize, classes: usize, points: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let ds = Self {
            dim,
            classes,
            points,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Input("dataset dimension must be positive".into()));
        }
        check_len("dataset points", self.labels.len() * self.dim, self.points.len())?;
        if let Some((i, l)) = self.labels.iter().enumerate().find(|(_, l)| **l >= self.classes) {
            return Err(Error::Input(format!("label {l} of sample {i} >= {} classes", self.classes)));
        }
        if let Some(i) = self.points.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input(format!(
                "value {} of sample {} outside [0, 1]",
                self.points[i],
                i / self.dim
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            points.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            classes: self.classes,
            points,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dim: self.dim,
            classes: self.classes,
            points: self.points[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validation() {
        assert!(Dataset::new(2, 2, vec![0.0, 1.0, 0.5, 0.5], vec![0, 1]).is_ok());
        assert!(Dataset::new(2, 2, vec![0.0, 1.1, 0.5, 0.5], vec![0, 1]).is_err());
        assert!(Dataset::new(2, 2, vec![0.0, 1.0, 0.5, 0.5], vec![0, 2]).is_err());
        assert!(Dataset::new(2, 2, vec![0.0, 1.0, 0.5], vec![0, 1]).is_err());
    }

    #[test]
    fn select_and_head() {
        let ds = Dataset::new(1, 3, vec![0.1, 0.2, 0.3], vec![0, 1, 2]).unwrap();
        let s = ds.select(&[2, 0]);
        assert_eq!(s.points, vec![0.3, 0.1]);
        assert_eq!(s.labels, vec![2, 0]);
        assert_eq!(ds.head(5).len(), 3);
    }
}
