//! Bag kernels.
//!
//! Three families share one Gaussian base kernel:
//!
//! * **MI-Kernel** ([`KernelKind::SetKernel`]): sum of the base kernel over
//!   all cross-bag instance pairs.
//! * **MIGraph** ([`KernelKind::EpsilonGraph`]): MI-Kernel node term plus an
//!   edge term summed over all pairs of ε-graph edges, each edge described by
//!   [`EdgeFeature`].
//! * **miGraph** ([`KernelKind::CliqueWeighted`]): instance pairs weighted by
//!   the reciprocal affinity-row sums of both bags, divided by the product of
//!   the weight totals.
//!
//! Each family can be normalized to `k(X,Y) / sqrt(k(X,X) k(Y,Y))`.
//!
//! The per-pair functions here are the reference path. Gram assembly goes
//! through [`batch`], which evaluates a whole grid of widths in one sweep.

pub mod batch;
pub mod gram;

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distance::{sq_euclidean, InstanceMetric};
use crate::error::{Error, Result};
use crate::graph::{build_affinity, build_epsilon_graph, edge_features, AffinityDistance, AffinityStructure, BagGraph, EdgeFeature};
use crate::model::{Bag, InstanceRef};

pub use batch::{gram, gram_cross, gram_with, mean_sq_edge_distance, mean_sq_instance_distance, GramBatch, GramGrid};
pub use gram::{CrossGram, GramMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// MIGraph: explicit ε-graph node + edge kernel.
    #[serde(rename = "MIGraph")]
    EpsilonGraph,
    /// miGraph: affinity-weighted (soft clique) kernel.
    #[serde(rename = "miGraph")]
    CliqueWeighted,
    /// MI-Kernel baseline.
    #[serde(rename = "MI-Kernel")]
    SetKernel,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::EpsilonGraph, KernelKind::CliqueWeighted, KernelKind::SetKernel];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::EpsilonGraph => "MIGraph",
            KernelKind::CliqueWeighted => "miGraph",
            KernelKind::SetKernel => "MI-Kernel",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    /// Accepts the canonical names exactly, plus the lowercase CLI aliases
    /// `migraph` (miGraph), `mikernel`/`mi-kernel` (MI-Kernel) and
    /// `epsgraph`/`migraph-explicit` (MIGraph).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MIGraph" | "epsgraph" | "migraph-explicit" => Ok(KernelKind::EpsilonGraph),
            "miGraph" | "migraph" => Ok(KernelKind::CliqueWeighted),
            "MI-Kernel" | "mikernel" | "mi-kernel" => Ok(KernelKind::SetKernel),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel {other:?}; expected MIGraph, miGraph or MI-Kernel"
            ))),
        }
    }
}

/// Affinity-matrix settings for miGraph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityConfig {
    pub distance: AffinityDistance,
    /// Width used inside the induced distance; `None` couples it to
    /// `gamma_node`.
    pub gamma: Option<f64>,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            distance: AffinityDistance::RbfInduced,
            gamma: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeFlags {
    pub set: bool,
    pub graph: bool,
    pub clique: bool,
}

impl Default for NormalizeFlags {
    fn default() -> Self {
        Self {
            set: true,
            graph: true,
            clique: true,
        }
    }
}

impl NormalizeFlags {
    pub fn for_kind(&self, kind: KernelKind) -> bool {
        match kind {
            KernelKind::EpsilonGraph => self.graph,
            KernelKind::CliqueWeighted => self.clique,
            KernelKind::SetKernel => self.set,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub gamma_node: f64,
    pub gamma_edge: f64,
    pub epsilon_factor: f64,
    pub affinity: AffinityConfig,
    pub normalize: NormalizeFlags,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            gamma_node: 1.0,
            gamma_edge: 1.0,
            epsilon_factor: 1.0,
            affinity: AffinityConfig::default(),
            normalize: NormalizeFlags::default(),
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_node", self.gamma_node),
            ("gamma_edge", self.gamma_edge),
            ("epsilon_factor", self.epsilon_factor),
            ("affinity gamma", self.affinity.gamma.unwrap_or(1.0)),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn affinity_gamma(&self) -> f64 {
        self.affinity.gamma.unwrap_or(self.gamma_node)
    }

    /// Stable SHA-256 over the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }
}

/// Gaussian kernel on continuous attributes: `exp(−γ‖x−y‖²)`.
#[inline]
pub fn k_node(x: InstanceRef<'_>, y: InstanceRef<'_>, gamma: f64) -> f64 {
    (-gamma * sq_euclidean(x.continuous, y.continuous)).exp()
}

/// Gaussian kernel on 4-dimensional edge features.
#[inline]
pub fn k_edge(e1: &EdgeFeature, e2: &EdgeFeature, gamma_edge: f64) -> f64 {
    (-gamma_edge * sq_euclidean(&e1.to_array(), &e2.to_array())).exp()
}

pub trait InstanceKernel {
    fn eval(&self, x: InstanceRef<'_>, y: InstanceRef<'_>) -> f64;
}

pub trait EdgeKernel {
    fn eval(&self, a: &EdgeFeature, b: &EdgeFeature) -> f64;
}

/// Gaussian kernel over an [`InstanceMetric`]; with categorical attributes
/// the mixed squared distance stands in for the squared norm.
#[derive(Clone, Debug)]
pub struct Rbf<'m> {
    pub gamma: f64,
    pub metric: &'m InstanceMetric,
}

impl InstanceKernel for Rbf<'_> {
    #[inline]
    fn eval(&self, x: InstanceRef<'_>, y: InstanceRef<'_>) -> f64 {
        (-self.gamma * self.metric.sq_dist(x, y)).exp()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EdgeRbf {
    pub gamma: f64,
}

impl EdgeKernel for EdgeRbf {
    #[inline]
    fn eval(&self, a: &EdgeFeature, b: &EdgeFeature) -> f64 {
        k_edge(a, b, self.gamma)
    }
}

/// Wraps a base kernel and counts its evaluations.
#[derive(Debug, Default)]
pub struct Counting<K> {
    pub inner: K,
    count: Cell<u64>,
}

impl<K> Counting<K> {
    pub fn new(inner: K) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }

    pub fn reset(&self) {
        self.count.set(0);
    }
}

impl<K: InstanceKernel> InstanceKernel for Counting<K> {
    fn eval(&self, x: InstanceRef<'_>, y: InstanceRef<'_>) -> f64 {
        self.count.set(self.count.get() + 1);
        self.inner.eval(x, y)
    }
}

impl<K: EdgeKernel> EdgeKernel for Counting<K> {
    fn eval(&self, a: &EdgeFeature, b: &EdgeFeature) -> f64 {
        self.count.set(self.count.get() + 1);
        self.inner.eval(a, b)
    }
}

#[inline]
fn normalized(cross: f64, self_i: f64, self_j: f64) -> f64 {
    cross / (self_i.sqrt() * self_j.sqrt())
}

/// Un-normalized MI-Kernel: Σ_a Σ_b k(x_ia, x_jb).
pub fn set_kernel_raw<K: InstanceKernel + ?Sized>(kernel: &K, xi: &Bag, xj: &Bag) -> f64 {
    let mut s = 0.0;
    for x in xi.instances() {
        for y in xj.instances() {
            s += kernel.eval(x, y);
        }
    }
    s
}

/// MI-Kernel with a Gaussian base kernel on continuous attributes.
pub fn k_mi(xi: &Bag, xj: &Bag, gamma: f64, normalize: bool) -> f64 {
    k_mi_with(&Rbf { gamma, metric: &InstanceMetric::euclidean() }, xi, xj, normalize)
}

pub fn k_mi_with<K: InstanceKernel + ?Sized>(kernel: &K, xi: &Bag, xj: &Bag, normalize: bool) -> f64 {
    let cross = set_kernel_raw(kernel, xi, xj);
    if normalize {
        normalized(cross, set_kernel_raw(kernel, xi, xi), set_kernel_raw(kernel, xj, xj))
    } else {
        cross
    }
}

/// A bag together with its ε-graph and edge features.
#[derive(Clone, Debug)]
pub struct GraphBag<'a> {
    pub bag: &'a Bag,
    pub graph: BagGraph,
    pub features: Vec<EdgeFeature>,
}

impl<'a> GraphBag<'a> {
    pub fn build(bag: &'a Bag, epsilon_factor: f64, metric: &InstanceMetric) -> Self {
        let graph = build_epsilon_graph(bag, epsilon_factor, |x, y| metric.dist(x, y));
        let features = edge_features(&graph);
        Self { bag, graph, features }
    }
}

/// Un-normalized MIGraph kernel: node term plus edge term.
pub fn graph_kernel_raw<N, E>(node: &N, edge: &E, gi: &GraphBag<'_>, gj: &GraphBag<'_>) -> f64
where
    N: InstanceKernel + ?Sized,
    E: EdgeKernel + ?Sized,
{
    let mut edge_sum = 0.0;
    for a in &gi.features {
        for b in &gj.features {
            edge_sum += edge.eval(a, b);
        }
    }
    set_kernel_raw(node, gi.bag, gj.bag) + edge_sum
}

/// MIGraph kernel, normalized when `config.normalize.graph` is set.
pub fn k_graph(gi: &GraphBag<'_>, gj: &GraphBag<'_>, config: &KernelConfig, metric: &InstanceMetric) -> f64 {
    let node = Rbf { gamma: config.gamma_node, metric };
    let edge = EdgeRbf { gamma: config.gamma_edge };
    let cross = graph_kernel_raw(&node, &edge, gi, gj);
    if config.normalize.graph {
        normalized(
            cross,
            graph_kernel_raw(&node, &edge, gi, gi),
            graph_kernel_raw(&node, &edge, gj, gj),
        )
    } else {
        cross
    }
}

/// A bag together with its affinity structure.
#[derive(Clone, Debug)]
pub struct AffinityBag<'a> {
    pub bag: &'a Bag,
    pub affinity: AffinityStructure,
}

impl<'a> AffinityBag<'a> {
    pub fn build(bag: &'a Bag, gamma: f64, distance: AffinityDistance, metric: &InstanceMetric) -> Self {
        Self {
            bag,
            affinity: build_affinity(bag, gamma, distance, metric),
        }
    }
}

/// Un-normalized miGraph kernel:
/// Σ_a Σ_b W_ia W_jb k(x_ia, x_jb) / (Σ_a W_ia · Σ_b W_jb).
pub fn clique_kernel_raw<K: InstanceKernel + ?Sized>(kernel: &K, ai: &AffinityBag<'_>, aj: &AffinityBag<'_>) -> f64 {
    let wi = ai.affinity.weights();
    let wj = aj.affinity.weights();
    let mut s = 0.0;
    for (a, x) in ai.bag.instances().enumerate() {
        let mut row = 0.0;
        for (b, y) in aj.bag.instances().enumerate() {
            row += wj[b] * kernel.eval(x, y);
        }
        s += wi[a] * row;
    }
    s / (ai.affinity.weight_sum() * aj.affinity.weight_sum())
}

/// miGraph kernel with a Gaussian base kernel of width `gamma`.
pub fn k_g(ai: &AffinityBag<'_>, aj: &AffinityBag<'_>, gamma: f64, normalize: bool, metric: &InstanceMetric) -> f64 {
    k_g_with(&Rbf { gamma, metric }, ai, aj, normalize)
}

pub fn k_g_with<K: InstanceKernel + ?Sized>(kernel: &K, ai: &AffinityBag<'_>, aj: &AffinityBag<'_>, normalize: bool) -> f64 {
    let cross = clique_kernel_raw(kernel, ai, aj);
    if normalize {
        normalized(cross, clique_kernel_raw(kernel, ai, ai), clique_kernel_raw(kernel, aj, aj))
    } else {
        cross
    }
}

/// Evaluates one kernel family between two bags, building the per-bag
/// structures on the fly. Convenient for one-off queries; use [`gram`] for
/// many bags.
pub fn bag_kernel(kind: KernelKind, xi: &Bag, xj: &Bag, config: &KernelConfig, metric: &InstanceMetric) -> f64 {
    match kind {
        KernelKind::SetKernel => k_mi_with(
            &Rbf { gamma: config.gamma_node, metric },
            xi,
            xj,
            config.normalize.set,
        ),
        KernelKind::EpsilonGraph => {
            let gi = GraphBag::build(xi, config.epsilon_factor, metric);
            let gj = GraphBag::build(xj, config.epsilon_factor, metric);
            k_graph(&gi, &gj, config, metric)
        }
        KernelKind::CliqueWeighted => {
            let g = config.affinity_gamma();
            let ai = AffinityBag::build(xi, g, config.affinity.distance, metric);
            let aj = AffinityBag::build(xj, g, config.affinity.distance, metric);
            k_g(&ai, &aj, config.gamma_node, config.normalize.clique, metric)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, Label};

    fn bag(id: &str, rows: Vec<Vec<f64>>) -> Bag {
        Bag::from_rows(id, Label::Binary(1), rows).unwrap()
    }

    #[test]
    fn node_kernel_values() {
        let x = Instance::continuous(vec![0.0, 0.0]);
        let y = Instance::continuous(vec![1.0, 0.0]);
        let z = Instance::continuous(vec![1.0, 1.0]);
        assert_eq!(k_node(x.as_ref(), x.as_ref(), 3.0), 1.0);
        assert!((k_node(x.as_ref(), y.as_ref(), 1.0) - 0.367879).abs() < 1e-6);
        assert!((k_node(x.as_ref(), z.as_ref(), 0.5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn edge_kernel_values() {
        let a = EdgeFeature { d_u: 1.0, p_u: 1.0, d_v: 1.0, p_v: 1.0 };
        let b = EdgeFeature { d_u: 0.0, ..a };
        assert_eq!(k_edge(&a, &a, 2.0), 1.0);
        assert!((k_edge(&a, &b, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(k_edge(&a, &b, 0.3), k_edge(&b, &a, 0.3));
    }

    #[test]
    fn self_kernels_are_one() {
        let m = InstanceMetric::euclidean();
        let x = bag("x", vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.4, 0.4]]);
        let cfg = KernelConfig { gamma_node: 0.7, gamma_edge: 2.0, ..Default::default() };
        for kind in KernelKind::ALL {
            assert!((bag_kernel(kind, &x, &x, &cfg, &m) - 1.0).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn single_instance_bags_reduce_to_base_kernel() {
        let m = InstanceMetric::euclidean();
        let x = bag("x", vec![vec![0.1, 0.2]]);
        let y = bag("y", vec![vec![0.7, 0.1]]);
        let cfg = KernelConfig { gamma_node: 1.3, ..Default::default() };
        let base = k_node(x.instance(0), y.instance(0), 1.3);
        for kind in KernelKind::ALL {
            assert!((bag_kernel(kind, &x, &y, &cfg, &m) - base).abs() < 1e-14, "{kind}");
        }
        assert!((k_mi(&x, &y, 1.3, false) - base).abs() < 1e-15);
    }

    #[test]
    fn kernel_names_round_trip() {
        for kind in KernelKind::ALL {
            assert_eq!(kind.name().parse::<KernelKind>().unwrap(), kind);
        }
        assert_eq!("migraph".parse::<KernelKind>().unwrap(), KernelKind::CliqueWeighted);
        assert_eq!("mikernel".parse::<KernelKind>().unwrap(), KernelKind::SetKernel);
        assert!("rbf".parse::<KernelKind>().is_err());
    }

    #[test]
    fn config_validation_and_digest() {
        let cfg = KernelConfig::default();
        assert!(cfg.validate().is_ok());
        assert!(KernelConfig { gamma_edge: 0.0, ..cfg }.validate().is_err());
        assert_eq!(cfg.digest(), KernelConfig::default().digest());
        assert_ne!(cfg.digest(), KernelConfig { gamma_node: 2.0, ..cfg }.digest());
    }
}
