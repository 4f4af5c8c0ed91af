//! Gram assembly over a grid of kernel widths.
//!
//! One sweep over all instance pairs (and, for MIGraph, all edge pairs)
//! accumulates the raw kernel sums for every width in the grid at once, so
//! squared distances are computed once per pair regardless of grid size.
//! When consecutive widths double, the Gaussian values are obtained by
//! repeated squaring from a single `exp`.
//!
//! Rows of the upper triangle are distributed with [`map_indexed`]; every
//! entry is produced by one fixed sequential loop, so the result does not
//! depend on the schedule.

use crate::distance::InstanceMetric;
use crate::error::{Error, Result};
use crate::graph::{edge_features, AffinityStructure, BagGraph, EdgeFeature};
use crate::model::Bag;
use crate::parallel::{map_indexed, Execution};

use super::{CrossGram, GramMatrix, KernelConfig, KernelKind};

/// Bags prepared for Gram assembly.
pub struct GramBatch<'a> {
    bags: Vec<&'a Bag>,
    metric: &'a InstanceMetric,
    exec: Execution,
    within: Vec<Vec<f64>>,
    graphs: Option<(f64, Vec<Vec<EdgeFeature>>)>,
}

impl<'a> GramBatch<'a> {
    pub fn new(bags: Vec<&'a Bag>, metric: &'a InstanceMetric, exec: Execution) -> Self {
        let within = map_indexed(exec, bags.len(), |i| within_sq_distances(bags[i], metric));
        Self {
            bags,
            metric,
            exec,
            within,
            graphs: None,
        }
    }

    /// Builds every bag's ε-graph once for the given factor.
    pub fn with_graphs(mut self, epsilon_factor: f64) -> Self {
        let features = self.build_graphs(epsilon_factor);
        self.graphs = Some((epsilon_factor, features));
        self
    }

    fn build_graphs(&self, epsilon_factor: f64) -> Vec<Vec<EdgeFeature>> {
        map_indexed(self.exec, self.bags.len(), |i| {
            let dist: Vec<f64> = self.within[i].iter().map(|d| d.sqrt()).collect();
            let graph = BagGraph::from_distances(self.bags[i].id(), self.bags[i].len(), &dist, epsilon_factor);
            edge_features(&graph)
        })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Edge features of bag `i`, if graphs were built.
    pub fn edge_features(&self, i: usize) -> Option<&[EdgeFeature]> {
        self.graphs.as_ref().map(|(_, f)| f[i].as_slice())
    }

    /// Affinity structure of bag `i` under `config`.
    pub fn affinity(&self, i: usize, config: &KernelConfig) -> AffinityStructure {
        self.affinity_with(i, config.affinity_gamma(), config)
    }

    fn affinity_with(&self, i: usize, gamma: f64, config: &KernelConfig) -> AffinityStructure {
        let mode = config.affinity.distance;
        let dist: Vec<f64> = self.within[i].iter().map(|&d2| mode.apply(d2, gamma)).collect();
        AffinityStructure::from_distances(self.bags[i].id(), self.bags[i].len(), &dist)
    }

    /// Raw sums for every width in `gammas` (node/instance widths) and
    /// `gamma_edges` (MIGraph edge widths; ignored for the other kinds).
    pub fn compute(&self, kind: KernelKind, base: &KernelConfig, gammas: &[f64], gamma_edges: &[f64]) -> Result<GramGrid> {
        if gammas.is_empty() {
            return Err(Error::InvalidArgument("empty gamma grid".into()));
        }
        for &g in gammas.iter().chain(gamma_edges) {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidArgument(format!("kernel width must be positive, got {g}")));
            }
        }
        base.validate()?;
        let nb = self.bags.len();
        let ids: Vec<String> = self.bags.iter().map(|b| b.id().to_owned()).collect();

        let (node, edge, gamma_edges) = match kind {
            KernelKind::SetKernel => (self.node_sums(gammas, None), Vec::new(), vec![base.gamma_edge]),
            KernelKind::CliqueWeighted => {
                // weights[g][bag][instance]
                let weights: Vec<Vec<Vec<f64>>> = gammas
                    .iter()
                    .map(|&g| {
                        let ag = base.affinity.gamma.unwrap_or(g);
                        map_indexed(self.exec, nb, |i| self.affinity_with(i, ag, base).weights().to_vec())
                    })
                    .collect();
                let mut sums = self.node_sums(gammas, Some(&weights));
                for (g, m) in sums.iter_mut().enumerate() {
                    let totals: Vec<f64> = weights[g].iter().map(|w| w.iter().sum()).collect();
                    for i in 0..nb {
                        for j in 0..nb {
                            m[i * nb + j] /= totals[i] * totals[j];
                        }
                    }
                }
                (sums, Vec::new(), vec![base.gamma_edge])
            }
            KernelKind::EpsilonGraph => {
                if gamma_edges.is_empty() {
                    return Err(Error::InvalidArgument("empty gamma_edge grid".into()));
                }
                let built;
                let features = match &self.graphs {
                    Some((f, feats)) if *f == base.epsilon_factor => feats,
                    _ => {
                        built = self.build_graphs(base.epsilon_factor);
                        &built
                    }
                };
                (
                    self.node_sums(gammas, None),
                    edge_sums(features, gamma_edges, self.exec),
                    gamma_edges.to_vec(),
                )
            }
        };

        Ok(GramGrid {
            kind,
            base: *base,
            gammas: gammas.to_vec(),
            gamma_edges,
            ids,
            node,
            edge,
        })
    }

    /// Per width: plain sums Σ_a Σ_b k, or weighted sums Σ_a Σ_b W_a W_b k
    /// when `weights` is given. Returned as full `n × n` row-major matrices.
    fn node_sums(&self, gammas: &[f64], weights: Option<&Vec<Vec<Vec<f64>>>>) -> Vec<Vec<f64>> {
        let nb = self.bags.len();
        let ng = gammas.len();
        let chain = ExpChain::new(gammas);
        let rows = map_indexed(self.exec, nb, |i| {
            let bi = self.bags[i];
            let mut out = vec![0.0; (nb - i) * ng];
            let mut e = vec![0.0; ng];
            let mut acc = vec![0.0; ng];
            let mut row_acc = vec![0.0; ng];
            for j in i..nb {
                let bj = self.bags[j];
                acc.iter_mut().for_each(|v| *v = 0.0);
                for (a, x) in bi.instances().enumerate() {
                    row_acc.iter_mut().for_each(|v| *v = 0.0);
                    for (b, y) in bj.instances().enumerate() {
                        chain.fill(self.metric.sq_dist(x, y), &mut e);
                        match weights {
                            None => {
                                for g in 0..ng {
                                    row_acc[g] += e[g];
                                }
                            }
                            Some(w) => {
                                for g in 0..ng {
                                    row_acc[g] += w[g][j][b] * e[g];
                                }
                            }
                        }
                    }
                    match weights {
                        None => {
                            for g in 0..ng {
                                acc[g] += row_acc[g];
                            }
                        }
                        Some(w) => {
                            for g in 0..ng {
                                acc[g] += w[g][i][a] * row_acc[g];
                            }
                        }
                    }
                }
                out[(j - i) * ng..(j - i + 1) * ng].copy_from_slice(&acc);
            }
            out
        });
        unpack_upper(rows, nb, ng)
    }
}

fn within_sq_distances(bag: &Bag, metric: &InstanceMetric) -> Vec<f64> {
    let n = bag.len();
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in u + 1..n {
            let d = metric.sq_dist(bag.instance(u), bag.instance(v));
            out[u * n + v] = d;
            out[v * n + u] = d;
        }
    }
    out
}

fn edge_sums(features: &[Vec<EdgeFeature>], gammas: &[f64], exec: Execution) -> Vec<Vec<f64>> {
    let nb = features.len();
    let ng = gammas.len();
    let chain = ExpChain::new(gammas);
    let arrays: Vec<Vec<[f64; 4]>> = features
        .iter()
        .map(|f| f.iter().map(|e| e.to_array()).collect())
        .collect();
    let rows = map_indexed(exec, nb, |i| {
        let mut out = vec![0.0; (nb - i) * ng];
        let mut e = vec![0.0; ng];
        for j in i..nb {
            let acc = &mut out[(j - i) * ng..(j - i + 1) * ng];
            for a in &arrays[i] {
                for b in &arrays[j] {
                    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2) + (a[3] - b[3]).powi(2);
                    chain.fill(d2, &mut e);
                    for g in 0..ng {
                        acc[g] += e[g];
                    }
                }
            }
        }
        out
    });
    unpack_upper(rows, nb, ng)
}

fn unpack_upper(rows: Vec<Vec<f64>>, nb: usize, ng: usize) -> Vec<Vec<f64>> {
    let mut mats = vec![vec![0.0; nb * nb]; ng];
    for (i, row) in rows.into_iter().enumerate() {
        for j in i..nb {
            for (g, m) in mats.iter_mut().enumerate() {
                let v = row[(j - i) * ng + g];
                m[i * nb + j] = v;
                m[j * nb + i] = v;
            }
        }
    }
    mats
}

/// Evaluates `exp(−γ_g d²)` for every width. Doubling grids use one `exp`
/// followed by squaring.
struct ExpChain<'g> {
    gammas: &'g [f64],
    doubling: bool,
}

impl<'g> ExpChain<'g> {
    fn new(gammas: &'g [f64]) -> Self {
        let doubling = gammas.len() > 1 && gammas.windows(2).all(|w| w[1] == 2.0 * w[0]);
        Self { gammas, doubling }
    }

    #[inline]
    fn fill(&self, d2: f64, out: &mut [f64]) {
        if self.doubling {
            let mut v = (-self.gammas[0] * d2).exp();
            out[0] = v;
            for slot in &mut out[1..] {
                v *= v;
                *slot = v;
            }
        } else {
            for (slot, &g) in out.iter_mut().zip(self.gammas) {
                *slot = (-g * d2).exp();
            }
        }
    }
}

/// Raw kernel sums for a grid of widths; [`GramGrid::gram`] assembles any
/// single grid point.
#[derive(Clone, Debug)]
pub struct GramGrid {
    pub kind: KernelKind,
    pub base: KernelConfig,
    pub gammas: Vec<f64>,
    pub gamma_edges: Vec<f64>,
    ids: Vec<String>,
    node: Vec<Vec<f64>>,
    edge: Vec<Vec<f64>>,
}

impl GramGrid {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Config corresponding to grid point `(g, e)`.
    pub fn config_for(&self, g: usize, e: usize) -> KernelConfig {
        let mut cfg = self.base;
        cfg.gamma_node = self.gammas[g];
        if self.kind == KernelKind::EpsilonGraph {
            cfg.gamma_edge = self.gamma_edges[e];
        }
        cfg
    }

    /// Gram matrix at grid point `(g, e)`; `e` is ignored unless the kernel
    /// is MIGraph.
    pub fn gram(&self, g: usize, e: usize) -> GramMatrix {
        let n = self.ids.len();
        let mut raw = self.node[g].clone();
        if self.kind == KernelKind::EpsilonGraph {
            for (r, x) in raw.iter_mut().zip(&self.edge[e]) {
                *r += x;
            }
        }
        if self.base.normalize.for_kind(self.kind) {
            let diag: Vec<f64> = (0..n).map(|i| raw[i * n + i].sqrt()).collect();
            for i in 0..n {
                for j in 0..n {
                    raw[i * n + j] /= diag[i] * diag[j];
                }
            }
        }
        let cfg = self.config_for(g, e);
        GramMatrix::new(raw, self.ids.clone(), self.kind.name(), cfg.digest()).expect("square by construction")
    }
}

/// Gram matrix of `bags` under one kernel configuration.
pub fn gram(bags: &[Bag], kind: KernelKind, config: &KernelConfig, metric: &InstanceMetric) -> Result<GramMatrix> {
    gram_with(bags, kind, config, metric, Execution::default())
}

pub fn gram_with(
    bags: &[Bag],
    kind: KernelKind,
    config: &KernelConfig,
    metric: &InstanceMetric,
    exec: Execution,
) -> Result<GramMatrix> {
    let batch = GramBatch::new(bags.iter().collect(), metric, exec);
    let grid = batch.compute(kind, config, &[config.gamma_node], &[config.gamma_edge])?;
    Ok(grid.gram(0, 0))
}

/// Kernel values between `test` bags (rows) and `train` bags (columns).
/// Normalization uses each bag's own self-kernel.
pub fn gram_cross(
    train: &[Bag],
    test: &[Bag],
    kind: KernelKind,
    config: &KernelConfig,
    metric: &InstanceMetric,
) -> Result<CrossGram> {
    let all: Vec<&Bag> = train.iter().chain(test).collect();
    let batch = GramBatch::new(all, metric, Execution::default());
    let full = batch
        .compute(kind, config, &[config.gamma_node], &[config.gamma_edge])?
        .gram(0, 0);
    let rows: Vec<usize> = (train.len()..train.len() + test.len()).collect();
    let cols: Vec<usize> = (0..train.len()).collect();
    Ok(full.cross(&rows, &cols))
}

/// Mean squared distance over all distinct pairs of the pooled instances.
pub fn mean_sq_instance_distance(bags: &[&Bag], metric: &InstanceMetric) -> f64 {
    let n: usize = bags.iter().map(|b| b.len()).sum();
    if n < 2 {
        return 0.0;
    }
    let d = bags.iter().find(|b| !b.is_empty()).map_or(0, |b| b.n_continuous());
    let mut mean = vec![0.0; d];
    for x in bags.iter().flat_map(|b| b.instances()) {
        for (m, v) in mean.iter_mut().zip(x.continuous) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scatter = 0.0;
    for x in bags.iter().flat_map(|b| b.instances()) {
        for (m, v) in mean.iter().zip(x.continuous) {
            scatter += (v - m) * (v - m);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    // Σ_{pairs} ‖x−y‖² = n · Σ‖x−μ‖²
    let mut total = n as f64 * scatter;

    if let Some(table) = metric.vdm_table() {
        let slots = bags.iter().find(|b| !b.is_empty()).map_or(0, |b| b.n_categorical());
        for slot in 0..slots {
            let mut counts: Vec<(u32, u64)> = Vec::new();
            for x in bags.iter().flat_map(|b| b.instances()) {
                let z = x.categorical[slot];
                match counts.iter_mut().find(|(s, _)| *s == z) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((z, 1)),
                }
            }
            for (p, &(z1, c1)) in counts.iter().enumerate() {
                for &(z2, c2) in &counts[p + 1..] {
                    total += (c1 * c2) as f64 * crate::distance::vdm(z1, z2, slot, table);
                }
            }
        }
    }
    total / pairs
}

/// Mean squared distance over all distinct pairs of pooled edge features.
pub fn mean_sq_edge_distance(features: &[&[EdgeFeature]]) -> f64 {
    let n: usize = features.iter().map(|f| f.len()).sum();
    if n < 2 {
        return 0.0;
    }
    let mut mean = [0.0; 4];
    for e in features.iter().flat_map(|f| f.iter()) {
        for (m, v) in mean.iter_mut().zip(e.to_array()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let scatter: f64 = features
        .iter()
        .flat_map(|f| f.iter())
        .map(|e| e.to_array().iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum();
    n as f64 * scatter / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::bag_kernel;
    use crate::model::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bags(seed: u64, count: usize) -> Vec<Bag> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let n = rng.gen_range(1..=6);
                let rows = (0..n).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
                Bag::from_rows(format!("b{i}"), Label::Binary(1), rows).unwrap()
            })
            .collect()
    }

    #[test]
    fn batch_matches_pairwise_reference() {
        let bags = random_bags(3, 8);
        let m = InstanceMetric::euclidean();
        let cfg = KernelConfig { gamma_node: 1.7, gamma_edge: 0.6, ..Default::default() };
        for kind in KernelKind::ALL {
            let g = gram(&bags, kind, &cfg, &m).unwrap();
            for i in 0..bags.len() {
                for j in 0..bags.len() {
                    let r = bag_kernel(kind, &bags[i], &bags[j], &cfg, &m);
                    assert!((g.get(i, j) - r).abs() < 1e-12, "{kind} ({i},{j}): {} vs {r}", g.get(i, j));
                }
            }
        }
    }

    #[test]
    fn doubling_grid_matches_single_width() {
        let bags = random_bags(5, 6);
        let m = InstanceMetric::euclidean();
        let base = KernelConfig { gamma_edge: 2.0, ..Default::default() };
        let gammas: Vec<f64> = (-4..=4).map(|k| 0.3 * 2f64.powi(k)).collect();
        let batch = GramBatch::new(bags.iter().collect(), &m, Execution::Sequential).with_graphs(1.0);
        for kind in KernelKind::ALL {
            let grid = batch.compute(kind, &base, &gammas, &[0.5, 2.0]).unwrap();
            for (g, &gamma) in gammas.iter().enumerate() {
                let cfg = KernelConfig { gamma_node: gamma, gamma_edge: 2.0, ..base };
                let single = gram(&bags, kind, &cfg, &m).unwrap();
                let multi = grid.gram(g, 1);
                for (a, b) in multi.values().iter().zip(single.values()) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert_eq!(multi.config_digest(), single.config_digest());
            }
        }
    }

    #[test]
    fn execution_modes_agree_exactly() {
        let bags = random_bags(9, 12);
        let m = InstanceMetric::euclidean();
        let cfg = KernelConfig::default();
        for kind in KernelKind::ALL {
            let a = gram_with(&bags, kind, &cfg, &m, Execution::Parallel).unwrap();
            let b = gram_with(&bags, kind, &cfg, &m, Execution::Sequential).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn closed_form_mean_sq_distance() {
        let bags = random_bags(11, 5);
        let refs: Vec<&Bag> = bags.iter().collect();
        let pooled: Vec<_> = bags.iter().flat_map(|b| b.instances()).collect();
        let mut total = 0.0;
        let mut pairs = 0usize;
        for a in 0..pooled.len() {
            for b in a + 1..pooled.len() {
                total += crate::distance::sq_euclidean(pooled[a].continuous, pooled[b].continuous);
                pairs += 1;
            }
        }
        let m = mean_sq_instance_distance(&refs, &InstanceMetric::euclidean());
        assert!((m - total / pairs as f64).abs() < 1e-12);
    }
}
