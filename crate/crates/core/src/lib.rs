//! Pruning masks synthesized from graph topology.
//!
//! A `k`-regular graph on `n` nodes defines which weight blocks of every
//! prunable layer survive (keep ratio `k/n`). The crate searches such graphs
//! for low average shortest path length, maps them onto layer masks, measures
//! how gradients spread through the induced network, and executes the
//! resulting regular block sparsity with dense kernels.
//!
//! - [`graph`]: regular graph construction, I/O, connectivity and ASPL
//! - [`search`]: degree-preserving edge-swap ASPL minimization
//! - [`metrics`]: Gradient-Resistance, AOPU, BFS trees, ASPL lower bound
//! - [`mask`]: layer partitions, block masks, reduction accounting
//! - [`engine`]: gather-dense block-sparse products and benchmarking
//! - [`nn`]: masked MLP with analytic backprop (gradient-reach oracle)

pub mod engine;
pub mod graph;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod search;

pub use graph::{AdjacencyGraph, GraphError, RegularGraph, Topology};
pub use mask::{LayerSpec, MaskSet, ModelSpec};
pub use search::{minimize_aspl, SearchConfig};
