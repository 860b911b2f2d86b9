//! Greedy ASPL minimization over k-regular graphs by degree-preserving edge
//! swaps.
//!
//! Each attempt draws two distinct edges `(i,j)`, `(p,q)` and proposes
//! replacing them with `(i,p)`, `(j,q)`. Proposals that would touch fewer than
//! four nodes or create a parallel edge are rejected outright. Otherwise the
//! swap is applied, dropped again if it disconnects the graph, and kept iff
//! the ASPL did not increase. Every attempt consumes budget.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{is_connected, BitAdjacency, GraphError, PathLengthSum, RegularGraph};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("initial graph is disconnected")]
    Disconnected,
    #[error("graph has {0} edges, a swap needs at least 2")]
    DegenerateGraph(usize),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory cannot be replayed: {0}")]
    IncompleteTrajectory(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    /// Total swap attempts, rejected ones included.
    pub attempts: usize,
    pub seed: u64,
    /// Record every `record_every`-th attempt in the trajectory.
    pub record_every: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { attempts: 10_000, seed: 0, record_every: 1 }
    }
}

impl SearchConfig {
    pub fn new(attempts: usize, seed: u64) -> Self {
        Self { attempts, seed, ..Self::default() }
    }

    fn validate(&self) -> Result<(), SearchError> {
        if self.attempts == 0 {
            return Err(SearchError::InvalidConfig("attempt budget must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(SearchError::InvalidConfig("record stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    /// The two edges do not span four distinct nodes.
    SharedNode,
    /// `(i,p)` or `(j,q)` is already an edge.
    ParallelEdge,
}

/// A degree-preserving rewiring `(i,j),(p,q) -> (i,p),(j,q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Swap {
    pub i: usize,
    pub j: usize,
    pub p: usize,
    pub q: usize,
}

impl Swap {
    pub fn removed(&self) -> [(usize, usize); 2] {
        [ordered(self.i, self.j), ordered(self.p, self.q)]
    }

    pub fn added(&self) -> [(usize, usize); 2] {
        [ordered(self.i, self.p), ordered(self.j, self.q)]
    }

    /// Applies the swap to an immutable graph, returning the rewired copy.
    pub fn apply(&self, g: &RegularGraph) -> Result<RegularGraph, GraphError> {
        let removed = self.removed();
        let edges = g
            .edges()
            .iter()
            .copied()
            .filter(|e| !removed.contains(e))
            .chain(self.added());
        RegularGraph::new(g.n(), g.k(), edges)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proposal {
    Candidate(Swap),
    Reject(RejectReason),
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

fn screen(swap: Swap, has_edge: impl Fn(usize, usize) -> bool) -> Proposal {
    let Swap { i, j, p, q } = swap;
    if i == p || i == q || j == p || j == q || i == j || p == q {
        return Proposal::Reject(RejectReason::SharedNode);
    }
    if has_edge(i, p) || has_edge(j, q) {
        return Proposal::Reject(RejectReason::ParallelEdge);
    }
    Proposal::Candidate(swap)
}

/// Screens the rewiring of two given oriented edges of `g`.
pub fn swap_for_edges(g: &RegularGraph, first: (usize, usize), second: (usize, usize)) -> Proposal {
    use crate::graph::Topology;
    let swap = Swap { i: first.0, j: first.1, p: second.0, q: second.1 };
    screen(swap, |u, v| g.has_edge(u, v))
}

fn draw_edges<R: Rng>(edge_count: usize, rng: &mut R) -> (usize, usize, bool, bool) {
    let a = rng.random_range(0..edge_count);
    let mut b = rng.random_range(0..edge_count - 1);
    if b >= a {
        b += 1;
    }
    (a, b, rng.random(), rng.random())
}

fn orient((u, v): (usize, usize), flip: bool) -> (usize, usize) {
    if flip {
        (v, u)
    } else {
        (u, v)
    }
}

/// Draws two distinct edges uniformly, each with a random orientation, and
/// screens the resulting swap.
pub fn propose_swap<R: Rng>(g: &RegularGraph, rng: &mut R) -> Proposal {
    let edges = g.edges();
    if edges.len() < 2 {
        return Proposal::Reject(RejectReason::SharedNode);
    }
    let (a, b, fa, fb) = draw_edges(edges.len(), rng);
    swap_for_edges(g, orient(edges[a], fa), orient(edges[b], fb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    /// 1-based attempt number.
    pub attempt: usize,
    pub accepted: bool,
    /// ASPL of the live graph after this attempt.
    pub aspl: f64,
    /// Ordered-pair distance total behind `aspl`.
    pub distance_total: u64,
    pub swap: Option<Swap>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTrajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Stride the rows were recorded with.
    pub record_every: usize,
}

/// A graph reached during the search.
#[derive(Clone, Debug)]
pub struct Snapshot {
    /// Attempt after which this state was live; 0 for the initial graph.
    pub attempt: usize,
    pub graph: RegularGraph,
}

impl SearchTrajectory {
    pub fn accepted_count(&self) -> usize {
        self.rows.iter().filter(|r| r.accepted).count()
    }

    /// Rebuilds every accepted state from the initial graph, starting with
    /// `g0` itself. Requires a trajectory recorded with stride 1.
    pub fn replay(&self, g0: &RegularGraph) -> Result<Vec<Snapshot>, SearchError> {
        if self.record_every != 1 {
            return Err(SearchError::IncompleteTrajectory(format!(
                "recorded with stride {}",
                self.record_every
            )));
        }
        let mut states = vec![Snapshot { attempt: 0, graph: g0.clone() }];
        for row in self.rows.iter().filter(|r| r.accepted) {
            let swap = row.swap.ok_or_else(|| {
                SearchError::IncompleteTrajectory(format!("accepted attempt {} has no swap", row.attempt))
            })?;
            let next = swap.apply(&states.last().unwrap().graph)?;
            states.push(Snapshot { attempt: row.attempt, graph: next });
        }
        Ok(states)
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub graph: RegularGraph,
    pub trajectory: SearchTrajectory,
    pub initial: PathLengthSum,
    pub last: PathLengthSum,
}

impl SearchOutcome {
    pub fn initial_aspl(&self) -> f64 {
        self.initial.value()
    }

    pub fn final_aspl(&self) -> f64 {
        self.last.value()
    }
}

/// Runs exactly `cfg.attempts` swap attempts from `g0`.
pub fn minimize_aspl(g0: &RegularGraph, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    if g0.edges().len() < 2 {
        return Err(SearchError::DegenerateGraph(g0.edges().len()));
    }
    if !is_connected(g0) {
        return Err(SearchError::Disconnected);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = g0.edges().to_vec();
    let mut adj = BitAdjacency::from_topology(g0);
    let initial = adj.distance_sum().ok_or(SearchError::Disconnected)?;
    let mut current = initial;
    let mut trajectory = SearchTrajectory { rows: Vec::new(), record_every: cfg.record_every };

    for attempt in 1..=cfg.attempts {
        let (a, b, fa, fb) = draw_edges(edges.len(), &mut rng);
        let first = orient(edges[a], fa);
        let second = orient(edges[b], fb);
        let proposal = screen(
            Swap { i: first.0, j: first.1, p: second.0, q: second.1 },
            |u, v| adj.contains(u, v),
        );

        let (accepted, swap) = match proposal {
            Proposal::Reject(_) => (false, None),
            Proposal::Candidate(swap) => {
                let [old_a, old_b] = swap.removed();
                let [new_a, new_b] = swap.added();
                adj.set(old_a.0, old_a.1, false);
                adj.set(old_b.0, old_b.1, false);
                adj.set(new_a.0, new_a.1, true);
                adj.set(new_b.0, new_b.1, true);
                // Same pair count on both sides, so totals compare exactly.
                match adj.distance_sum() {
                    Some(next) if next.total <= current.total => {
                        edges[a] = new_a;
                        edges[b] = new_b;
                        current = next;
                        (true, Some(swap))
                    }
                    _ => {
                        adj.set(new_a.0, new_a.1, false);
                        adj.set(new_b.0, new_b.1, false);
                        adj.set(old_a.0, old_a.1, true);
                        adj.set(old_b.0, old_b.1, true);
                        (false, Some(swap))
                    }
                }
            }
        };

        if attempt % cfg.record_every == 0 {
            trajectory.rows.push(TrajectoryRow {
                attempt,
                accepted,
                aspl: current.value(),
                distance_total: current.total,
                swap,
            });
        }
    }

    let graph = RegularGraph::new(g0.n(), g0.k(), edges)?;
    Ok(SearchOutcome { graph, trajectory, initial, last: current })
}

/// CSV with header `attempt,accepted,aspl`; ASPL to 6 decimals.
pub fn write_trajectory_to<W: Write>(t: &SearchTrajectory, out: W) -> Result<(), SearchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["attempt", "accepted", "aspl"])?;
    for row in &t.rows {
        w.write_record([row.attempt.to_string(), row.accepted.to_string(), format!("{:.6}", row.aspl)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(t: &SearchTrajectory, path: impl AsRef<Path>) -> Result<(), SearchError> {
    let file = std::fs::File::create(path)?;
    write_trajectory_to(t, std::io::BufWriter::new(file))
}
