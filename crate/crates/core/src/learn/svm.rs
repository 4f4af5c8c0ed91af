//! Binary C-SVM on a precomputed kernel, trained by SMO.
//!
//! Working pairs are chosen by maximal KKT violation; the two-variable
//! update and the bias rule follow the usual LIBSVM formulation:
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K_ij
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

/// Default KKT stopping tolerance.
pub const DEFAULT_TOL: f64 = 1e-3;

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Dual variables α_i.
    pub alpha: Vec<f64>,
    /// Training labels, ±1.
    pub labels: Vec<i8>,
    pub bias: f64,
    pub c: f64,
    pub bag_ids: Vec<String>,
    pub config_digest: [u8; 32],
    pub iterations: usize,
}

impl SvmModel {
    /// Dual coefficients α_i y_i, aligned with the training bags.
    pub fn coefficients(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| a * y as f64)
            .collect()
    }

    /// Dual objective Σα − ½ αᵀQα (to be maximized).
    pub fn dual_objective(&self, gram: &GramMatrix) -> f64 {
        dual_objective(gram, &self.labels, &self.alpha)
    }

    /// Decision value and label for one query bag. `cross` holds the kernel
    /// values against every training bag, in training order. Score 0 maps to
    /// +1.
    pub fn predict(&self, cross: &[f64]) -> Result<(f64, i8)> {
        if cross.len() != self.alpha.len() {
            return Err(Error::InvalidArgument(format!(
                "kernel row has {} entries, model has {} training bags",
                cross.len(),
                self.alpha.len()
            )));
        }
        let mut score = self.bias;
        for ((a, &y), k) in self.alpha.iter().zip(&self.labels).zip(cross) {
            if *a != 0.0 {
                score += a * y as f64 * k;
            }
        }
        Ok((score, if score >= 0.0 { 1 } else { -1 }))
    }

    /// Largest KKT violation `m(α) − M(α)` at the stored solution.
    pub fn kkt_gap(&self, gram: &GramMatrix) -> f64 {
        let grad = gradient(gram, &self.labels, &self.alpha);
        let (up, low) = extremes(&self.labels, &self.alpha, &grad, self.c);
        up.map_or(0.0, |u| u.1) - low.map_or(0.0, |l| l.1)
    }
}

pub fn dual_objective(gram: &GramMatrix, labels: &[i8], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * (labels[i] * labels[j]) as f64 * gram.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn gradient(gram: &GramMatrix, labels: &[i8], alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    (0..n)
        .map(|t| {
            let mut g = -1.0;
            for s in 0..n {
                g += (labels[t] * labels[s]) as f64 * gram.get(t, s) * alpha[s];
            }
            g
        })
        .collect()
}

#[inline]
fn in_up(y: i8, a: f64, c: f64) -> bool {
    (y > 0 && a < c) || (y < 0 && a > 0.0)
}

#[inline]
fn in_low(y: i8, a: f64, c: f64) -> bool {
    (y > 0 && a > 0.0) || (y < 0 && a < c)
}

/// (argmax over I_up of −y G, argmin over I_low of −y G), first index wins ties.
fn extremes(labels: &[i8], alpha: &[f64], grad: &[f64], c: f64) -> (Option<(usize, f64)>, Option<(usize, f64)>) {
    let mut up: Option<(usize, f64)> = None;
    let mut low: Option<(usize, f64)> = None;
    for t in 0..alpha.len() {
        let v = -(labels[t] as f64) * grad[t];
        if in_up(labels[t], alpha[t], c) && up.is_none_or(|(_, m)| v > m) {
            up = Some((t, v));
        }
        if in_low(labels[t], alpha[t], c) && low.is_none_or(|(_, m)| v < m) {
            low = Some((t, v));
        }
    }
    (up, low)
}

/// Trains a binary SVM. `labels` must be ±1 and contain both classes.
pub fn svm_train(gram: &GramMatrix, labels: &[i8], c: f64, tol: f64) -> Result<SvmModel> {
    let n = gram.len();
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a {n}×{n} gram matrix",
            labels.len()
        )));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::InvalidArgument(format!("binary labels must be ±1, got {bad}")));
    }
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(Error::InvalidArgument("training set holds a single class".into()));
    }
    if let Some(i) = (0..n).find(|&i| !gram.get(i, i).is_finite() || gram.get(i, i) < 0.0) {
        return Err(Error::Solver(format!(
            "gram diagonal entry {i} is {}; matrix is not PSD",
            gram.get(i, i)
        )));
    }

    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);
    let mut iter = 0;

    while iter < max_iter {
        let (up, low) = extremes(labels, &alpha, &grad, c);
        let (Some((i, gmax)), Some((j, gmin))) = (up, low) else { break };
        if gmax - gmin < tol {
            break;
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kii = gram.get(i, i);
        let kjj = gram.get(j, j);
        let kij = gram.get(i, j);
        if labels[i] != labels[j] {
            let mut quad = kii + kjj - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kii + kjj - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * gram.get(t, i) * di + y[j] * gram.get(t, j) * dj);
        }
    }
    if iter == max_iter {
        log::warn!("SMO stopped after {max_iter} iterations without meeting tolerance {tol}");
    }

    let bias = -rho(labels, &alpha, &grad, c);
    Ok(SvmModel {
        alpha,
        labels: labels.to_vec(),
        bias,
        c,
        bag_ids: gram.ids().to_vec(),
        config_digest: *gram.config_digest(),
        iterations: iter,
    })
}

fn rho(labels: &[i8], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut free_sum = 0.0;
    for t in 0..alpha.len() {
        let yg = labels[t] as f64 * grad[t];
        if alpha[t] >= c {
            if labels[t] < 0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if labels[t] > 0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
