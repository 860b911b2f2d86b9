//! Simple undirected regular graphs: generation, validation, connectivity,
//! bipartiteness and average shortest path length.
//!
//! Node ids are 0-based. Edges are stored as `(u, v)` with `u < v` (or `u == v`
//! for the self-loop entries [`AdjacencyGraph`] allows), sorted
//! lexicographically.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default restart budget for [`random_regular`].
pub const DEFAULT_RETRY_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("ring lattice requires an even degree, got k={0}")]
    OddDegree(usize),
    #[error("degree k={k} must be smaller than node count n={n}")]
    DegreeTooLarge { n: usize, k: usize },
    #[error("no simple {k}-regular graph on {n} nodes exists")]
    InfeasibleDegree { n: usize, k: usize },
    #[error("random regular generation gave up after {0} attempts")]
    RetryExhausted(usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("invalid graph: {0}")]
    InvariantViolation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Read-only neighborhood access shared by every graph flavor in the crate.
pub trait Topology {
    fn order(&self) -> usize;
    /// Sorted neighbor ids of `v`. A self-loop shows up as `v` itself.
    fn neighbors(&self, v: usize) -> &[usize];

    fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }
}

/// An undirected graph without parallel edges. Self-loops are allowed so the
/// dense mapping (complete graph with self-loops) can be expressed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(GraphError::InvariantViolation("node count must be positive".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::InvariantViolation(format!(
                    "edge ({u},{v}) references a node outside 0..{n}"
                )));
            }
            let e = (u.min(v), u.max(v));
            if !set.insert(e) {
                return Err(GraphError::InvariantViolation(format!(
                    "duplicate edge ({},{})",
                    e.0, e.1
                )));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            if u != v {
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { n, edges, adjacency })
    }

    /// Complete graph with a self-loop on every node: the unpruned network.
    pub fn complete_with_self_loops(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u..n).map(move |v| (u, v)));
        Self::from_edges(n, edges).expect("complete graph is well formed")
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_self_loops(&self) -> bool {
        self.edges.iter().any(|&(u, v)| u == v)
    }

    /// The common degree if every node has the same one.
    pub fn uniform_degree(&self) -> Option<usize> {
        let d = self.adjacency.first()?.len();
        self.adjacency.iter().all(|a| a.len() == d).then_some(d)
    }
}

impl Topology for AdjacencyGraph {
    fn order(&self) -> usize {
        self.n
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }
}

/// Initializer selection for graph construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    RingLattice,
    RandomRegular,
    FromFile,
}

/// A simple undirected `k`-regular graph on `n` nodes. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegularGraph {
    k: usize,
    inner: AdjacencyGraph,
}

impl RegularGraph {
    /// Validates every invariant: no self-loops, no parallel edges, all
    /// degrees equal to `k`, `k < n`.
    pub fn new(n: usize, k: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if k == 0 {
            return Err(GraphError::InvariantViolation("degree must be positive".into()));
        }
        if k >= n {
            return Err(GraphError::DegreeTooLarge { n, k });
        }
        if !(n * k).is_multiple_of(2) {
            return Err(GraphError::InfeasibleDegree { n, k });
        }
        let inner = AdjacencyGraph::from_edges(n, edges)?;
        if let Some(&(u, _)) = inner.edges.iter().find(|&&(u, v)| u == v) {
            return Err(GraphError::InvariantViolation(format!("self-loop on node {u}")));
        }
        if let Some((v, a)) = inner.adjacency.iter().enumerate().find(|(_, a)| a.len() != k) {
            return Err(GraphError::InvariantViolation(format!(
                "node {v} has degree {}, expected {k}",
                a.len()
            )));
        }
        debug_assert_eq!(inner.edges.len(), n * k / 2);
        Ok(Self { k, inner })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.inner.edges
    }

    pub fn as_adjacency(&self) -> &AdjacencyGraph {
        &self.inner
    }

    /// Keep ratio `k / n` of the induced pruning mask.
    pub fn density(&self) -> f64 {
        self.k as f64 / self.n() as f64
    }

    /// `(degree, count)` pairs, ascending by degree.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for v in 0..self.n() {
            *hist.entry(self.degree(v)).or_insert(0) += 1;
        }
        hist.into_iter().collect()
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(GraphError::InvariantViolation("relabeling is not a permutation".into()));
        }
        Self::new(n, self.k, self.edges().iter().map(|&(u, v)| (perm[u], perm[v])))
    }
}

impl Topology for RegularGraph {
    fn order(&self) -> usize {
        self.inner.n
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.inner.adjacency[v]
    }
}

/// Circulant graph joining each node to its `k/2` nearest neighbors on either
/// side of a ring.
pub fn ring_lattice(n: usize, k: usize) -> Result<RegularGraph> {
    if !k.is_multiple_of(2) {
        return Err(GraphError::OddDegree(k));
    }
    if k == 0 {
        return Err(GraphError::InvariantViolation("degree must be positive".into()));
    }
    if k >= n {
        return Err(GraphError::DegreeTooLarge { n, k });
    }
    let edges = (0..n).flat_map(|u| (1..=k / 2).map(move |d| (u, (u + d) % n)));
    RegularGraph::new(n, k, edges)
}

pub fn random_regular(n: usize, k: usize, seed: u64) -> Result<RegularGraph> {
    random_regular_with_cap(n, k, seed, DEFAULT_RETRY_CAP)
}

/// Random simple `k`-regular graph from the pairing model.
///
/// Stubs are shuffled and paired; pairs that would form a self-loop or a
/// parallel edge are returned to the pool and re-paired. When no admissible
/// pair is left among the remaining stubs the attempt is discarded and the
/// whole pairing restarts; `cap` bounds the number of attempts.
pub fn random_regular_with_cap(n: usize, k: usize, seed: u64, cap: usize) -> Result<RegularGraph> {
    if k == 0 || k >= n || !(n * k).is_multiple_of(2) {
        return Err(GraphError::InfeasibleDegree { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cap {
        if let Some(edges) = try_pairing(n, k, &mut rng) {
            return RegularGraph::new(n, k, edges);
        }
    }
    Err(GraphError::RetryExhausted(cap))
}

fn try_pairing(n: usize, k: usize, rng: &mut impl Rng) -> Option<BTreeSet<(usize, usize)>> {
    let mut edges = BTreeSet::new();
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    while !stubs.is_empty() {
        stubs.shuffle(rng);
        let mut leftover = Vec::new();
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u != v && !edges.contains(&(u, v)) {
                edges.insert((u, v));
            } else {
                leftover.extend_from_slice(pair);
            }
        }
        if !leftover.is_empty() && !has_admissible_pair(&leftover, &edges) {
            return None;
        }
        stubs = leftover;
    }
    Some(edges)
}

fn has_admissible_pair(stubs: &[usize], edges: &BTreeSet<(usize, usize)>) -> bool {
    let nodes: BTreeSet<usize> = stubs.iter().copied().collect();
    let nodes: Vec<usize> = nodes.into_iter().collect();
    nodes
        .iter()
        .enumerate()
        .any(|(i, &u)| nodes[i + 1..].iter().any(|&v| !edges.contains(&(u, v))))
}

/// BFS distances from `source`; `None` marks unreachable nodes.
pub fn bfs_distances<G: Topology + ?Sized>(g: &G, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.order()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap() + 1;
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(d);
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn is_connected<G: Topology + ?Sized>(g: &G) -> bool {
    g.order() > 0 && bfs_distances(g, 0).iter().all(Option::is_some)
}

/// Two-coloring test by BFS. Fails on disconnected input.
pub fn is_bipartite<G: Topology + ?Sized>(g: &G) -> Result<bool> {
    let dist = bfs_distances(g, 0);
    if dist.iter().any(Option::is_none) {
        return Err(GraphError::Disconnected);
    }
    let color = |v: usize| dist[v].unwrap() % 2;
    Ok((0..g.order()).all(|u| g.neighbors(u).iter().all(|&v| color(u) != color(v))))
}

/// Sum of shortest-path lengths over ordered node pairs, kept as an exact
/// integer ratio so comparisons never depend on float rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PathLengthSum {
    pub total: u64,
    pub pairs: u64,
}

impl PathLengthSum {
    pub fn value(&self) -> f64 {
        self.total as f64 / self.pairs as f64
    }
}

/// Adjacency as one bitset row per node. Backs the all-pairs BFS sweep and
/// the mutable working graph used by the search.
#[derive(Clone, Debug)]
pub(crate) struct BitAdjacency {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl BitAdjacency {
    pub(crate) fn from_topology<G: Topology + ?Sized>(g: &G) -> Self {
        let n = g.order();
        let words = n.div_ceil(64);
        let mut adj = Self { n, words, rows: vec![0; n * words] };
        for u in 0..n {
            for &v in g.neighbors(u) {
                adj.rows[u * words + v / 64] |= 1 << (v % 64);
            }
        }
        adj
    }

    fn row(&self, u: usize) -> &[u64] {
        &self.rows[u * self.words..(u + 1) * self.words]
    }

    pub(crate) fn contains(&self, u: usize, v: usize) -> bool {
        self.rows[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    pub(crate) fn set(&mut self, u: usize, v: usize, present: bool) {
        let (a, b) = (u * self.words + v / 64, v * self.words + u / 64);
        if present {
            self.rows[a] |= 1 << (v % 64);
            self.rows[b] |= 1 << (u % 64);
        } else {
            self.rows[a] &= !(1 << (v % 64));
            self.rows[b] &= !(1 << (u % 64));
        }
    }

    /// Total ordered-pair distance, or `None` if some pair is unreachable.
    pub(crate) fn distance_sum(&self) -> Option<PathLengthSum> {
        let n = self.n;
        let w = self.words;
        let mut visited = vec![0u64; w];
        let mut frontier = vec![0u64; w];
        let mut next = vec![0u64; w];
        let mut total = 0u64;
        for source in 0..n {
            visited.fill(0);
            frontier.fill(0);
            visited[source / 64] |= 1 << (source % 64);
            frontier[source / 64] |= 1 << (source % 64);
            let mut reached = 1usize;
            let mut depth = 0u64;
            while reached < n {
                depth += 1;
                next.fill(0);
                for (wi, &bits) in frontier.iter().enumerate() {
                    let mut bits = bits;
                    while bits != 0 {
                        let v = wi * 64 + bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        for (acc, &r) in next.iter_mut().zip(self.row(v)) {
                            *acc |= r;
                        }
                    }
                }
                let mut found = 0usize;
                for ((nx, vis), fr) in next.iter_mut().zip(visited.iter_mut()).zip(frontier.iter_mut()) {
                    *nx &= !*vis;
                    *vis |= *nx;
                    *fr = *nx;
                    found += nx.count_ones() as usize;
                }
                if found == 0 {
                    return None;
                }
                reached += found;
                total += depth * found as u64;
            }
        }
        Some(PathLengthSum { total, pairs: (n * (n - 1)) as u64 })
    }
}

/// Exact ordered-pair distance sum of a connected graph.
pub fn path_length_sum<G: Topology + ?Sized>(g: &G) -> Result<PathLengthSum> {
    if g.order() < 2 {
        return Err(GraphError::InvariantViolation("ASPL needs at least two nodes".into()));
    }
    BitAdjacency::from_topology(g).distance_sum().ok_or(GraphError::Disconnected)
}

/// Average shortest path length over all ordered pairs `u != v`.
pub fn aspl<G: Topology + ?Sized>(g: &G) -> Result<f64> {
    path_length_sum(g).map(|s| s.value())
}

/// Edge-list text: `n k` header, then one sorted `u v` line per edge.
pub fn format_graph(g: &RegularGraph) -> String {
    let mut out = format!("{} {}\n", g.n(), g.k());
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

pub fn parse_graph(text: &str) -> Result<RegularGraph> {
    let mut header = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            let tok = fields.next().ok_or_else(|| GraphError::Parse {
                line: lineno,
                msg: format!("missing {what}"),
            })?;
            tok.parse().map_err(|_| GraphError::Parse {
                line: lineno,
                msg: format!("invalid {what} {tok:?}"),
            })
        };
        let pair = if header.is_none() { (next("n")?, next("k")?) } else { (next("u")?, next("v")?) };
        if fields.next().is_some() {
            return Err(GraphError::Parse { line: lineno, msg: "expected two integers".into() });
        }
        match header {
            None => header = Some(pair),
            Some(_) => edges.push(pair),
        }
    }
    let (n, k) = header.ok_or(GraphError::Parse { line: 0, msg: "missing `n k` header".into() })?;
    let expected = n * k / 2;
    if edges.len() != expected {
        return Err(GraphError::InvariantViolation(format!(
            "{} edges listed, a {k}-regular graph on {n} nodes has {expected}",
            edges.len()
        )));
    }
    RegularGraph::new(n, k, edges)
}

pub fn write_graph(g: &RegularGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_graph(g))?;
    Ok(())
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<RegularGraph> {
    parse_graph(&fs::read_to_string(path)?)
}
