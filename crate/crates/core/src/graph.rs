//! Per-bag structures: ε-graphs with edge features, and binary affinity
//! matrices with instance weights.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::distance::InstanceMetric;
use crate::error::{Error, Result};
use crate::model::{Bag, InstanceRef};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// ε-graph of one bag. Nodes are the bag's instances; edges satisfy `u < v`
/// and are kept in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagGraph {
    pub bag_id: String,
    pub n_nodes: usize,
    pub epsilon: f64,
    pub edges: Vec<Edge>,
}

impl BagGraph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Builds the graph from a full `n × n` distance matrix (row-major).
    ///
    /// ε is `epsilon_factor` times the mean distance over distinct pairs.
    /// Pairs closer than ε are joined; edge weights are reciprocal distances
    /// scaled by the largest reciprocal in the bag, and coincident instances
    /// share that largest weight.
    pub fn from_distances(bag_id: impl Into<String>, n: usize, dist: &[f64], epsilon_factor: f64) -> Self {
        assert_eq!(dist.len(), n * n, "distance matrix must be n × n");
        let bag_id = bag_id.into();
        if n < 2 {
            return Self {
                bag_id,
                n_nodes: n,
                epsilon: 0.0,
                edges: Vec::new(),
            };
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let mut total = 0.0;
        for u in 0..n {
            for v in u + 1..n {
                total += dist[u * n + v];
            }
        }
        let epsilon = epsilon_factor * total / pairs;

        let mut edges = Vec::new();
        let mut max_raw: f64 = 0.0;
        for u in 0..n {
            for v in u + 1..n {
                let d = dist[u * n + v];
                if d < epsilon {
                    if d > 0.0 {
                        max_raw = max_raw.max(1.0 / d);
                    }
                    edges.push(Edge { u, v, weight: d });
                }
            }
        }
        for e in &mut edges {
            e.weight = if e.weight > 0.0 && max_raw > 0.0 {
                (1.0 / e.weight) / max_raw
            } else {
                1.0
            };
        }
        Self {
            bag_id,
            n_nodes: n,
            epsilon,
            edges,
        }
    }

    /// Writes one `u v weight` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.u, e.v, e.weight)?;
        }
        Ok(())
    }
}

/// Builds the ε-graph of `bag` under an arbitrary distance function.
pub fn build_epsilon_graph<F>(bag: &Bag, epsilon_factor: f64, metric: F) -> BagGraph
where
    F: Fn(InstanceRef<'_>, InstanceRef<'_>) -> f64,
{
    let dist = pairwise(bag, metric);
    BagGraph::from_distances(bag.id(), bag.len(), &dist, epsilon_factor)
}

fn pairwise<F>(bag: &Bag, f: F) -> Vec<f64>
where
    F: Fn(InstanceRef<'_>, InstanceRef<'_>) -> f64,
{
    let n = bag.len();
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in u + 1..n {
            let d = f(bag.instance(u), bag.instance(v));
            out[u * n + v] = d;
            out[v * n + u] = d;
        }
    }
    out
}

/// Edge descriptor `[d_u, p_u, d_v, p_v]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeature {
    pub d_u: f64,
    pub p_u: f64,
    pub d_v: f64,
    pub p_v: f64,
}

impl EdgeFeature {
    pub fn to_array(self) -> [f64; 4] {
        [self.d_u, self.p_u, self.d_v, self.p_v]
    }
}

/// Edge features aligned with `graph.edges`: endpoint degrees divided by
/// the edge count, and each endpoint's share of its incident weight.
pub fn edge_features(graph: &BagGraph) -> Vec<EdgeFeature> {
    let m = graph.n_edges();
    if m == 0 {
        return Vec::new();
    }
    let mut degree = vec![0usize; graph.n_nodes];
    let mut incident = vec![0.0f64; graph.n_nodes];
    for e in &graph.edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
        incident[e.u] += e.weight;
        incident[e.v] += e.weight;
    }
    let m = m as f64;
    graph
        .edges
        .iter()
        .map(|e| EdgeFeature {
            d_u: degree[e.u] as f64 / m,
            p_u: e.weight / incident[e.u],
            d_v: degree[e.v] as f64 / m,
            p_v: e.weight / incident[e.v],
        })
        .collect()
}

/// How within-bag distances are measured before thresholding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityDistance {
    /// `sqrt(2 − 2·exp(−γ‖a−b‖²))`, the distance induced by the Gaussian kernel.
    #[default]
    RbfInduced,
    /// Plain squared distance; γ plays no role.
    SquaredEuclidean,
}

impl AffinityDistance {
    /// Maps a squared instance distance to the thresholded distance.
    #[inline]
    pub fn apply(self, sq_dist: f64, gamma: f64) -> f64 {
        match self {
            AffinityDistance::RbfInduced => (2.0 - 2.0 * (-gamma * sq_dist).exp()).max(0.0).sqrt(),
            AffinityDistance::SquaredEuclidean => sq_dist,
        }
    }
}

/// Binary affinity matrix of a bag with the derived instance weights
/// `W_a = 1 / Σ_u w_au`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityStructure {
    pub bag_id: String,
    n: usize,
    matrix: Vec<bool>,
    delta: f64,
    weights: Vec<f64>,
}

impl AffinityStructure {
    /// Thresholds a full `n × n` distance matrix at δ = mean distance over
    /// distinct pairs, using strict `<`. The diagonal is always set.
    pub fn from_distances(bag_id: impl Into<String>, n: usize, dist: &[f64]) -> Self {
        assert_eq!(dist.len(), n * n, "distance matrix must be n × n");
        let delta = if n < 2 {
            0.0
        } else {
            let mut total = 0.0;
            for a in 0..n {
                for u in a + 1..n {
                    total += dist[a * n + u];
                }
            }
            total / (n * (n - 1) / 2) as f64
        };
        let mut matrix = vec![false; n * n];
        for a in 0..n {
            matrix[a * n + a] = true;
            for u in a + 1..n {
                let linked = dist[a * n + u] < delta;
                matrix[a * n + u] = linked;
                matrix[u * n + a] = linked;
            }
        }
        Self::assemble(bag_id.into(), n, matrix, delta)
    }

    /// Wraps an explicit 0/1 matrix. It must be symmetric with a unit diagonal.
    pub fn from_matrix(bag_id: impl Into<String>, n: usize, matrix: Vec<bool>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "affinity matrix has {} entries, expected {}",
                matrix.len(),
                n * n
            )));
        }
        for a in 0..n {
            if !matrix[a * n + a] {
                return Err(Error::InvalidArgument(format!("diagonal entry {a} is not set")));
            }
            for u in a + 1..n {
                if matrix[a * n + u] != matrix[u * n + a] {
                    return Err(Error::InvalidArgument(format!(
                        "affinity matrix is not symmetric at ({a}, {u})"
                    )));
                }
            }
        }
        Ok(Self::assemble(bag_id.into(), n, matrix, f64::NAN))
    }

    fn assemble(bag_id: String, n: usize, matrix: Vec<bool>, delta: f64) -> Self {
        let weights = (0..n)
            .map(|a| {
                let row_sum = matrix[a * n..(a + 1) * n].iter().filter(|&&w| w).count();
                1.0 / row_sum as f64
            })
            .collect();
        Self {
            bag_id,
            n,
            matrix,
            delta,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Threshold used; NaN for structures built from an explicit matrix.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn linked(&self, a: usize, u: usize) -> bool {
        self.matrix[a * self.n + u]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Builds the affinity structure of `bag`. `gamma` only matters for
/// [`AffinityDistance::RbfInduced`].
pub fn build_affinity(bag: &Bag, gamma: f64, mode: AffinityDistance, metric: &InstanceMetric) -> AffinityStructure {
    let dist = pairwise(bag, |x, y| mode.apply(metric.sq_dist(x, y), gamma));
    AffinityStructure::from_distances(bag.id(), bag.len(), &dist)
}
