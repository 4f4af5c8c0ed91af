//! Reference solver for the SVM dual, independent of the library's SMO.

use migraph::kernel::GramMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Gaussian Gram matrix of `n` random points in the plane.
pub fn random_gram(rng: &mut ChaCha8Rng, n: usize) -> GramMatrix {
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
    let gamma = rng.gen_range(0.5..5.0);
    let mut v = Vec::with_capacity(n * n);
    for a in &pts {
        for b in &pts {
            v.push((-gamma * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))).exp());
        }
    }
    GramMatrix::from_values(n, v).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    let mut y: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    for s in y.iter_mut().skip(2) {
        if rng.gen_bool(0.3) {
            *s = -*s;
        }
    }
    y.shuffle(rng);
    y
}

pub fn objective(k: &GramMatrix, y: &[i8], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * (y[i] * y[j]) as f64 * k.get(i, j);
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto {0 ≤ α ≤ C, yᵀα = 0}, by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[i8], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - mu * yi as f64).clamp(0.0, c))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, &yi)| ai * yi as f64).sum::<f64>();
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on the SVM dual.
pub fn reference_dual(k: &GramMatrix, y: &[i8], c: f64) -> f64 {
    let n = y.len();
    let q = |i: usize, j: usize| (y[i] * y[j]) as f64 * k.get(i, j);
    let lipschitz = (0..n).map(|i| (0..n).map(|j| q(i, j).abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..60_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q(i, j) * z[j]).sum::<f64>()).collect();
        let moved: Vec<f64> = z.iter().zip(&grad).map(|(zi, g)| zi + step * g).collect();
        let next = project(&moved, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
    }
    objective(k, y, &a)
}
