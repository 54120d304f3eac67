//! Flat parameter-space vectors.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A flat vector in parameter space: a gradient, a momentum buffer, or a
/// noise sample. The dimension is the length of the backing storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradVector {
    values: Vec<f64>,
}

impl GradVector {
    pub fn new(values: Vec<f64>) -> Self {
        GradVector { values }
    }

    pub fn zeros(dim: usize) -> Self {
        GradVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Returns an error unless every entry is finite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// Euclidean (l2) norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &GradVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> GradVector {
        GradVector {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &GradVector, c: f64) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn add(&mut self, other: &GradVector) {
        self.add_scaled(other, 1.0);
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &GradVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for GradVector {
    fn from(values: Vec<f64>) -> Self {
        GradVector::new(values)
    }
}
