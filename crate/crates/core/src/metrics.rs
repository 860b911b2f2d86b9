//! Analysis quantities tying graph structure to gradient flow: walk-set
//! frontiers, Gradient-Resistance (GR), average output-neuron parameter
//! usage (AOPU), BFS spanning trees and the ideal-tree ASPL lower bound.

use std::collections::VecDeque;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{aspl, is_bipartite, is_connected, GraphError, RegularGraph, Topology};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("gradient resistance is infinite: the graph is bipartite")]
    InfiniteGr,
    #[error("lower bound needs degree k >= 3, got {0}")]
    UnsupportedDegree(usize),
    #[error("lower bound needs more nodes than the degree (n={n}, k={k})")]
    InvalidN { n: usize, k: usize },
    #[error("node {node} out of range for {n} nodes")]
    InvalidNode { node: usize, n: usize },
    #[error("need at least 2 layers and a positive group size")]
    InvalidShape,
    #[error(transparent)]
    Graph(GraphError),
}

impl From<GraphError> for MetricsError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Disconnected => MetricsError::Disconnected,
            other => MetricsError::Graph(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check_node<G: Topology + ?Sized>(g: &G, node: usize) -> Result<()> {
    if node >= g.order() {
        return Err(MetricsError::InvalidNode { node, n: g.order() });
    }
    Ok(())
}

/// Nodes reachable from `source` by walks of exactly `r` edges, per round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkFrontier {
    pub source: usize,
    pub by_round: Vec<Vec<bool>>,
}

impl WalkFrontier {
    pub fn new<G: Topology + ?Sized>(g: &G, source: usize, rounds: usize) -> Self {
        let mut current = vec![false; g.order()];
        current[source] = true;
        let mut by_round = vec![current];
        for _ in 0..rounds {
            let next = step(g, by_round.last().unwrap());
            by_round.push(next);
        }
        Self { source, by_round }
    }

    pub fn members(&self, round: usize) -> Vec<usize> {
        self.by_round[round].iter().enumerate().filter_map(|(v, &m)| m.then_some(v)).collect()
    }
}

fn step<G: Topology + ?Sized>(g: &G, set: &[bool]) -> Vec<bool> {
    let mut next = vec![false; set.len()];
    for (u, _) in set.iter().enumerate().filter(|(_, &m)| m) {
        for &v in g.neighbors(u) {
            next[v] = true;
        }
    }
    next
}

/// Smallest round `R >= 1` at which walks of exactly `R` edges from `a`
/// reach every node.
pub fn gr_node<G: Topology + ?Sized>(g: &G, a: usize) -> Result<usize> {
    check_node(g, a)?;
    if is_bipartite(g)? {
        return Err(MetricsError::InfiniteGr);
    }
    let mut set = vec![false; g.order()];
    set[a] = true;
    let mut round = 0;
    loop {
        set = step(g, &set);
        round += 1;
        if set.iter().all(|&m| m) {
            return Ok(round);
        }
        // Connected and non-bipartite guarantees coverage within 2n rounds.
        debug_assert!(round <= 2 * g.order());
    }
}

/// Mean of [`gr_node`] over all nodes.
pub fn gr_graph<G: Topology + ?Sized>(g: &G) -> Result<f64> {
    let total = (0..g.order()).map(|a| gr_node(g, a)).sum::<Result<usize>>()?;
    Ok(total as f64 / g.order() as f64)
}

/// Parameters whose gradient can be nonzero for output group `j` of an
/// `layers`-layer network with `group_size` units per group.
///
/// The backward walk set at depth `d` names the layer-`(L-1-d)` groups the
/// output depends on; each such group pulls from `deg` input blocks of
/// `s*s` weights.
pub fn output_usage<G: Topology + ?Sized>(g: &G, layers: usize, group_size: usize, j: usize) -> Result<u64> {
    if layers < 2 || group_size == 0 {
        return Err(MetricsError::InvalidShape);
    }
    check_node(g, j)?;
    let block = (group_size * group_size) as u64;
    let mut set = vec![false; g.order()];
    set[j] = true;
    let mut total = 0u64;
    for depth in 0..layers - 1 {
        if depth > 0 {
            set = step(g, &set);
        }
        let degree_sum: usize = set.iter().enumerate().filter(|(_, &m)| m).map(|(v, _)| g.degree(v)).sum();
        total += degree_sum as u64 * block;
    }
    Ok(total)
}

/// Sum of [`output_usage`] over every output group.
pub fn aopu_total<G: Topology + ?Sized>(g: &G, layers: usize, group_size: usize) -> Result<u64> {
    if !is_connected(g) {
        return Err(MetricsError::Disconnected);
    }
    (0..g.order()).map(|j| output_usage(g, layers, group_size, j)).sum()
}

/// Average output-neuron parameter usage: mean of [`output_usage`] over
/// output groups. Biases are not counted.
pub fn aopu<G: Topology + ?Sized>(g: &G, layers: usize, group_size: usize) -> Result<f64> {
    Ok(aopu_total(g, layers, group_size)? as f64 / g.order() as f64)
}

/// Breadth-first spanning tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bfsst {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
}

impl Bfsst {
    pub fn depth_sum(&self) -> usize {
        self.depth.iter().sum()
    }

    /// Mean depth over non-root nodes: this root's share of the ASPL.
    pub fn mean_depth(&self) -> f64 {
        self.depth_sum() as f64 / (self.depth.len() - 1) as f64
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Node count per depth, starting with the root layer.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.max_depth() + 1];
        for &d in &self.depth {
            sizes[d] += 1;
        }
        sizes
    }
}

pub fn bfsst<G: Topology + ?Sized>(g: &G, root: usize) -> Result<Bfsst> {
    check_node(g, root)?;
    let n = g.order();
    let mut parent = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    if depth.contains(&usize::MAX) {
        return Err(MetricsError::Disconnected);
    }
    Ok(Bfsst { root, parent, depth })
}

pub fn eccentricity<G: Topology + ?Sized>(g: &G, v: usize) -> Result<usize> {
    Ok(bfsst(g, v)?.max_depth())
}

/// Count of completely filled layers in the ideal BFS tree of an
/// `n`-node `k`-regular graph: the floor of
/// `ln((n-1)(k-2)/k + 1) / ln(k-1)`.
///
/// Evaluated as the largest `t` with `k((k-1)^t - 1)/(k-2) <= n-1`, the same
/// inequality in integers.
pub fn theta(n: usize, k: usize) -> Result<u32> {
    if k < 3 {
        return Err(MetricsError::UnsupportedDegree(k));
    }
    if n <= k {
        return Err(MetricsError::InvalidN { n, k });
    }
    let budget = (n - 1) as u128;
    let (mut t, mut filled, mut layer) = (0u32, 0u128, k as u128);
    while filled + layer <= budget {
        filled += layer;
        layer *= (k - 1) as u128;
        t += 1;
    }
    Ok(t)
}

/// Ideal-tree lower bound on the ASPL of any `k`-regular graph on `n` nodes:
/// layers `1..=theta` filled with `k(k-1)^(i-1)` nodes, the rest at depth
/// `theta+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LowerBound {
    pub n: usize,
    pub k: usize,
    pub theta: u32,
    /// Depth sum of the ideal tree; the bound is `depth_sum / (n-1)`.
    pub depth_sum: u64,
}

impl LowerBound {
    pub fn value(&self) -> f64 {
        self.depth_sum as f64 / (self.n - 1) as f64
    }
}

pub fn lower_bound_aspl(n: usize, k: usize) -> Result<LowerBound> {
    let th = theta(n, k)?;
    let mut depth_sum = 0u64;
    let mut placed = 0u64;
    let mut layer = k as u64;
    for i in 1..=th as u64 {
        depth_sum += i * layer;
        placed += layer;
        layer *= (k - 1) as u64;
    }
    let rest = (n as u64 - 1)
        .checked_sub(placed)
        .ok_or(MetricsError::InvalidN { n, k })?;
    depth_sum += (th as u64 + 1) * rest;
    Ok(LowerBound { n, k, theta: th, depth_sum })
}

/// GR with an explicit infinite sentinel; serializes as a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GrValue {
    Finite(f64),
    Infinite,
}

impl GrValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            GrValue::Finite(v) => Some(v),
            GrValue::Infinite => None,
        }
    }
}

impl Serialize for GrValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GrValue::Finite(v) => s.serialize_f64(*v),
            GrValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for GrValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(GrValue::Finite(v)),
            Raw::Str(s) if s == "inf" => Ok(GrValue::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub k: usize,
    pub aspl: f64,
    pub gr: GrValue,
    pub aopu: f64,
    /// `None` when the bound is undefined (k < 3).
    pub lower_bound: Option<f64>,
    pub theta: Option<u32>,
}

pub fn metrics_report(g: &RegularGraph, layers: usize, group_size: usize) -> Result<MetricsReport> {
    let aspl = aspl(g)?;
    let gr = match gr_graph(g) {
        Ok(v) => GrValue::Finite(v),
        Err(MetricsError::InfiniteGr) => GrValue::Infinite,
        Err(e) => return Err(e),
    };
    let aopu = aopu(g, layers, group_size)?;
    let bound = lower_bound_aspl(g.n(), g.k()).ok();
    Ok(MetricsReport {
        n: g.n(),
        k: g.k(),
        aspl,
        gr,
        aopu,
        lower_bound: bound.map(|b| b.value()),
        theta: bound.map(|b| b.theta),
    })
}
