//! Kernel ridge regression on a precomputed kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub bag_ids: Vec<String>,
    pub config_digest: [u8; 32],
    /// Predictions are clamped to this range when set.
    pub clip: Option<(f64, f64)>,
}

/// Solves `(K + λI) β = y`.
pub fn krr_train(gram: &GramMatrix, targets: &[f64], lambda: f64) -> Result<KrrModel> {
    let n = gram.len();
    if targets.len() != n {
        return Err(Error::InvalidArgument(format!("{} targets for {n} bags", targets.len())));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let mut a = DMatrix::from_row_slice(n, n, gram.values());
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let y = DVector::from_column_slice(targets);
    let beta = a
        .clone()
        .cholesky()
        .map(|c| c.solve(&y))
        .or_else(|| a.clone().lu().solve(&y))
        .ok_or_else(|| singular(lambda))?;
    let residual = (&a * &beta - &y).norm();
    if !residual.is_finite() || residual > 1e-8 * y.norm().max(f64::MIN_POSITIVE) {
        return Err(singular(lambda));
    }
    Ok(KrrModel {
        beta: beta.iter().copied().collect(),
        lambda,
        bag_ids: gram.ids().to_vec(),
        config_digest: *gram.config_digest(),
        clip: None,
    })
}

fn singular(lambda: f64) -> Error {
    Error::Singular(format!(
        "K + λI is singular or ill-conditioned at λ = {lambda}; use lambda > 0"
    ))
}

impl KrrModel {
    pub fn with_clip(mut self, low: f64, high: f64) -> Self {
        self.clip = Some((low, high));
        self
    }

    /// Σ β_i k(X_i, X), clamped when a clip range is set.
    pub fn predict(&self, cross: &[f64]) -> Result<f64> {
        Ok(match self.clip {
            Some((lo, hi)) => self.predict_raw(cross)?.clamp(lo, hi),
            None => self.predict_raw(cross)?,
        })
    }

    pub fn predict_raw(&self, cross: &[f64]) -> Result<f64> {
        if cross.len() != self.beta.len() {
            return Err(Error::InvalidArgument(format!(
                "kernel row has {} entries, model has {} training bags",
                cross.len(),
                self.beta.len()
            )));
        }
        Ok(self.beta.iter().zip(cross).map(|(b, k)| b * k).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_targets() {
        let g = GramMatrix::from_values(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let y = [0.2, 0.5, 0.9];
        let m = krr_train(&g, &y, 0.0).unwrap();
        assert_eq!(m.beta, y.to_vec());
        for i in 0..3 {
            assert!((m.predict(g.row(i)).unwrap() - y[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_hand_solution() {
        // [[1.1, 0.5], [0.5, 1.1]] β = [1, 0]
        // det = 1.21 − 0.25 = 0.96; β = [1.1, −0.5] / 0.96
        let g = GramMatrix::from_values(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let m = krr_train(&g, &[1.0, 0.0], 0.1).unwrap();
        assert!((m.beta[0] - 1.1 / 0.96).abs() < 1e-14);
        assert!((m.beta[1] + 0.5 / 0.96).abs() < 1e-14);
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let g = GramMatrix::from_values(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let m = krr_train(&g, &[0.7, 0.4], 1e9).unwrap();
        assert!(m.predict_raw(g.row(0)).unwrap().abs() < 1e-8);
    }

    #[test]
    fn singular_without_ridge() {
        let g = GramMatrix::from_values(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let err = krr_train(&g, &[1.0, 0.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(err.to_string().contains("lambda > 0"));
    }

    #[test]
    fn clipping() {
        let g = GramMatrix::from_values(1, vec![1.0]).unwrap();
        let m = krr_train(&g, &[0.8], 0.0).unwrap().with_clip(0.0, 1.0);
        assert_eq!(m.predict(&[2.0]).unwrap(), 1.0);
        assert_eq!(m.predict(&[-1.0]).unwrap(), 0.0);
    }
}
