//! Shared fixtures and brute-force reference implementations.
//!
//! The reference kernels below work on plain `Vec<Vec<f64>>` bags and are
//! written directly from the kernel definitions, without touching the
//! library's graph, affinity or kernel code.

#![allow(dead_code)]

pub mod qp;

use std::path::{Path, PathBuf};

use migraph::model::{AttributeSchema, Bag, Dataset, Label};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rows_of(bag: &Bag) -> Rows {
    bag.instances().map(|x| x.continuous.to_vec()).collect()
}

/// Random bag of 1..=max_n instances in [0, 1]^d; with probability 1/4 one
/// instance is duplicated.
pub fn random_rows(rng: &mut ChaCha8Rng, max_n: usize, d: usize) -> Rows {
    let n = rng.gen_range(1..=max_n);
    let mut rows: Rows = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    if n >= 2 && rng.gen_bool(0.25) {
        rows[n - 1] = rows[0].clone();
    }
    rows
}

pub fn random_bag(rng: &mut ChaCha8Rng, id: &str, max_n: usize, d: usize) -> Bag {
    let label = Label::Binary(if rng.gen_bool(0.5) { 1 } else { -1 });
    Bag::from_rows(id, label, random_rows(rng, max_n, d)).unwrap()
}

pub fn random_bags(rng: &mut ChaCha8Rng, count: usize, max_n: usize, d: usize) -> Vec<Bag> {
    (0..count).map(|i| random_bag(rng, &format!("b{i}"), max_n, d)).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

// ---------- MI-Kernel ----------

pub fn set_raw(x: &Rows, y: &Rows, gamma: f64) -> f64 {
    let mut s = 0.0;
    for a in x {
        for b in y {
            s += (-gamma * sq(a, b)).exp();
        }
    }
    s
}

pub fn oracle_k_mi(x: &Rows, y: &Rows, gamma: f64) -> f64 {
    set_raw(x, y, gamma) / (set_raw(x, x, gamma) * set_raw(y, y, gamma)).sqrt()
}

// ---------- MIGraph ----------

/// Edge features `[d_u, p_u, d_v, p_v]` of the ε-graph of `x`.
pub fn oracle_edge_features(x: &Rows, factor: f64) -> Vec<[f64; 4]> {
    let n = x.len();
    if n < 2 {
        return Vec::new();
    }
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for u in 0..n {
        for v in u + 1..n {
            let d = sq(&x[u], &x[v]).sqrt();
            total += d;
            pairs.push((u, v, d));
        }
    }
    let eps = factor * total / pairs.len() as f64;
    let kept: Vec<(usize, usize, f64)> = pairs.into_iter().filter(|p| p.2 < eps).collect();
    if kept.is_empty() {
        return Vec::new();
    }
    let max_raw = kept
        .iter()
        .filter(|p| p.2 > 0.0)
        .map(|p| 1.0 / p.2)
        .fold(0.0, f64::max);
    let raw: Vec<f64> = kept
        .iter()
        .map(|p| if p.2 > 0.0 { 1.0 / p.2 } else { max_raw })
        .collect();
    let top = raw.iter().copied().fold(0.0, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    let w: Vec<f64> = raw.iter().map(|r| if top > 0.0 && *r > 0.0 { r / top } else { 1.0 }).collect();
    let m = kept.len() as f64;
    let mut degree = vec![0.0; n];
    let mut incident = vec![0.0; n];
    for (k, &(u, v, _)) in kept.iter().enumerate() {
        degree[u] += 1.0;
        degree[v] += 1.0;
        incident[u] += w[k];
        incident[v] += w[k];
    }
    kept.iter()
        .enumerate()
        .map(|(k, &(u, v, _))| [degree[u] / m, w[k] / incident[u], degree[v] / m, w[k] / incident[v]])
        .collect()
}

pub fn graph_raw(x: &Rows, ex: &[[f64; 4]], y: &Rows, ey: &[[f64; 4]], gamma: f64, gamma_edge: f64) -> f64 {
    let mut edges = 0.0;
    for a in ex {
        for b in ey {
            edges += (-gamma_edge * sq(a, b)).exp();
        }
    }
    set_raw(x, y, gamma) + edges
}

pub fn oracle_k_graph(x: &Rows, y: &Rows, gamma: f64, gamma_edge: f64, factor: f64) -> f64 {
    let ex = oracle_edge_features(x, factor);
    let ey = oracle_edge_features(y, factor);
    graph_raw(x, &ex, y, &ey, gamma, gamma_edge)
        / (graph_raw(x, &ex, x, &ex, gamma, gamma_edge) * graph_raw(y, &ey, y, &ey, gamma, gamma_edge)).sqrt()
}

// ---------- miGraph ----------

/// Instance weights `1 / row sum` of the thresholded affinity matrix.
pub fn oracle_weights(x: &Rows, gamma: f64) -> Vec<f64> {
    let n = x.len();
    let dist = |a: usize, b: usize| (2.0 - 2.0 * (-gamma * sq(&x[a], &x[b])).exp()).max(0.0).sqrt();
    let mut total = 0.0;
    let mut count = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            total += dist(a, b);
            count += 1.0;
        }
    }
    let delta = if count > 0.0 { total / count } else { 0.0 };
    (0..n)
        .map(|a| {
            let links = (0..n).filter(|&b| b == a || dist(a, b) < delta).count();
            1.0 / links as f64
        })
        .collect()
}

pub fn clique_raw(x: &Rows, wx: &[f64], y: &Rows, wy: &[f64], gamma: f64) -> f64 {
    let mut s = 0.0;
    for (a, xa) in x.iter().enumerate() {
        for (b, yb) in y.iter().enumerate() {
            s += wx[a] * wy[b] * (-gamma * sq(xa, yb)).exp();
        }
    }
    s / (wx.iter().sum::<f64>() * wy.iter().sum::<f64>())
}

pub fn oracle_k_g(x: &Rows, y: &Rows, gamma: f64) -> f64 {
    let wx = oracle_weights(x, gamma);
    let wy = oracle_weights(y, gamma);
    clique_raw(x, &wx, y, &wy, gamma) / (clique_raw(x, &wx, x, &wx, gamma) * clique_raw(y, &wy, y, &wy, gamma)).sqrt()
}

// ---------- datasets ----------

/// Two well-separated Gaussian-ish clusters of bags.
pub fn separable_dataset(rng: &mut ChaCha8Rng, per_class: usize, d: usize) -> Dataset {
    let mut bags = Vec::new();
    for i in 0..2 * per_class {
        let positive = i % 2 == 0;
        let centre = if positive { 0.8 } else { 0.2 };
        let n = rng.gen_range(2..=4);
        let rows: Rows = (0..n)
            .map(|_| (0..d).map(|_| centre + 0.05 * (rng.gen::<f64>() - 0.5)).collect())
            .collect();
        let label = Label::Binary(if positive { 1 } else { -1 });
        bags.push(Bag::from_rows(format!("bag{i}"), label, rows).unwrap());
    }
    Dataset::new(AttributeSchema::continuous(d), bags)
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
