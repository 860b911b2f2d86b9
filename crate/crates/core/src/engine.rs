//! Gather-dense execution of regular block-sparse layers.
//!
//! A layer whose mask comes from a `k`-regular graph has exactly `k` input
//! groups per output group. Packing those `k` blocks into one dense
//! `(k*s_in) x s_out` matrix per output group turns the sparse product into
//! `n` small dense products over gathered input slices, doing `k/n` of the
//! dense work.
//!
//! Conventions: weights are `out_width x in_width`, inputs are row batches,
//! and a layer computes `y = x * W^T`.

use std::time::Instant;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ring_lattice, random_regular, AdjacencyGraph, GraphError, Topology};
use crate::mask::{partition, MaskError, Partition};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("nonzero weight at ({row},{col}) lies in a pruned block")]
    NonconformingSparsity { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("graph is not regular")]
    IrregularGraph,
    #[error("regular and masked products disagree (relative deviation {0:e})")]
    OracleMismatch(f64),
    #[error("invalid benchmark parameters: {0}")]
    InvalidBench(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Input groups gathered for each output group, in sorted neighbor order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatherPlan {
    pub k: usize,
    pub inputs: Vec<Vec<usize>>,
}

impl GatherPlan {
    pub fn new<G: Topology + ?Sized>(g: &G) -> Result<Self> {
        let inputs: Vec<Vec<usize>> = (0..g.order()).map(|v| g.neighbors(v).to_vec()).collect();
        let k = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|i| i.len() != k) {
            return Err(EngineError::IrregularGraph);
        }
        Ok(Self { k, inputs })
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }
}

/// Packed surviving weights: for output group `j`, a `(k*s_in) x s_out`
/// matrix whose `t`-th row band is the transposed block from input group
/// `plan.inputs[j][t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub n: usize,
    pub k: usize,
    pub s_in: usize,
    pub s_out: usize,
    pub packed: Vec<Array2<f64>>,
}

impl BlockWeights {
    /// Block `t` of output group `j` in `s_out x s_in` orientation.
    pub fn block(&self, j: usize, t: usize) -> ArrayView2<'_, f64> {
        self.packed[j].slice(s![t * self.s_in..(t + 1) * self.s_in, ..]).reversed_axes()
    }

    pub fn in_width(&self) -> usize {
        self.n * self.s_in
    }

    pub fn out_width(&self) -> usize {
        self.n * self.s_out
    }
}

fn uniform_size(p: &Partition) -> Result<usize> {
    let sizes = p.sizes();
    if sizes.iter().any(|&s| s != sizes[0]) {
        return Err(EngineError::ShapeMismatch(format!("group sizes {sizes:?} are not uniform")));
    }
    Ok(sizes[0])
}

/// Packs a masked dense weight matrix. Any nonzero outside an allowed block is
/// an error.
pub fn encode(w: &Array2<f64>, plan: &GatherPlan, in_part: &Partition, out_part: &Partition) -> Result<BlockWeights> {
    let n = plan.n();
    if in_part.groups() != n || out_part.groups() != n || w.dim() != (out_part.width, in_part.width) {
        return Err(EngineError::ShapeMismatch(format!(
            "weights {:?} with {}x{} groups for a {n}-node plan",
            w.dim(),
            out_part.groups(),
            in_part.groups()
        )));
    }
    let s_in = uniform_size(in_part)?;
    let s_out = uniform_size(out_part)?;
    for ((row, col), &v) in w.indexed_iter() {
        if v != 0.0 && plan.inputs[row / s_out].binary_search(&(col / s_in)).is_err() {
            return Err(EngineError::NonconformingSparsity { row, col });
        }
    }
    let packed = plan
        .inputs
        .iter()
        .enumerate()
        .map(|(j, inputs)| {
            let mut p = Array2::zeros((plan.k * s_in, s_out));
            for (t, &i) in inputs.iter().enumerate() {
                let block = w.slice(s![j * s_out..(j + 1) * s_out, i * s_in..(i + 1) * s_in]);
                p.slice_mut(s![t * s_in..(t + 1) * s_in, ..]).assign(&block.t());
            }
            p
        })
        .collect();
    Ok(BlockWeights { n, k: plan.k, s_in, s_out, packed })
}

/// Restores the dense `out_width x in_width` matrix.
pub fn decode(bw: &BlockWeights, plan: &GatherPlan) -> Array2<f64> {
    let mut w = Array2::zeros((bw.out_width(), bw.in_width()));
    for (j, inputs) in plan.inputs.iter().enumerate() {
        for (t, &i) in inputs.iter().enumerate() {
            w.slice_mut(s![j * bw.s_out..(j + 1) * bw.s_out, i * bw.s_in..(i + 1) * bw.s_in])
                .assign(&bw.block(j, t));
        }
    }
    w
}

/// Gather-dense product; returns the output and the multiply-adds executed.
pub fn regular_matmul_counted(bw: &BlockWeights, plan: &GatherPlan, x: &Array2<f64>) -> Result<(Array2<f64>, u64)> {
    if x.ncols() != bw.in_width() || plan.n() != bw.n || plan.k != bw.k {
        return Err(EngineError::ShapeMismatch(format!(
            "input width {} for a layer of width {}",
            x.ncols(),
            bw.in_width()
        )));
    }
    let batch = x.nrows();
    let mut y = Array2::zeros((batch, bw.out_width()));
    let mut gathered = Array2::zeros((batch, bw.k * bw.s_in));
    let mut macs = 0u64;
    for (j, inputs) in plan.inputs.iter().enumerate() {
        for (t, &i) in inputs.iter().enumerate() {
            gathered
                .slice_mut(s![.., t * bw.s_in..(t + 1) * bw.s_in])
                .assign(&x.slice(s![.., i * bw.s_in..(i + 1) * bw.s_in]));
        }
        let mut out = y.slice_mut(s![.., j * bw.s_out..(j + 1) * bw.s_out]);
        general_mat_mul(1.0, &gathered, &bw.packed[j], 0.0, &mut out);
        macs += (batch * bw.k * bw.s_in * bw.s_out) as u64;
    }
    Ok((y, macs))
}

pub fn regular_matmul(bw: &BlockWeights, plan: &GatherPlan, x: &Array2<f64>) -> Result<Array2<f64>> {
    regular_matmul_counted(bw, plan, x).map(|(y, _)| y)
}

/// Masked dense reference: `x * (W .* mask)^T`, full dense work.
pub fn naive_masked_matmul_counted(w: &Array2<f64>, mask: &Array2<f64>, x: &Array2<f64>) -> Result<(Array2<f64>, u64)> {
    if w.dim() != mask.dim() || x.ncols() != w.ncols() {
        return Err(EngineError::ShapeMismatch(format!(
            "weights {:?}, mask {:?}, input {:?}",
            w.dim(),
            mask.dim(),
            x.dim()
        )));
    }
    let masked = w * mask;
    let y = x.dot(&masked.t());
    Ok((y, (x.nrows() * w.nrows() * w.ncols()) as u64))
}

pub fn naive_masked_matmul(w: &Array2<f64>, mask: &Array2<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
    naive_masked_matmul_counted(w, mask, x).map(|(y, _)| y)
}

/// Row-parallel variants used by the benchmark's threaded mode.
fn par_rows<F>(x: &Array2<f64>, out_width: usize, f: F) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> Array2<f64> + Sync,
{
    let chunk = x.nrows().div_ceil(rayon::current_num_threads()).max(1);
    let parts: Vec<Array2<f64>> = x
        .axis_chunks_iter(Axis(0), chunk)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|xc| f(&xc.to_owned()))
        .collect();
    let mut y = Array2::zeros((x.nrows(), out_width));
    for (mut yc, part) in y.axis_chunks_iter_mut(Axis(0), chunk).zip(&parts) {
        yc.assign(part);
    }
    y
}

/// Largest absolute deviation, relative to the reference's largest magnitude.
pub fn relative_deviation(a: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    Zip::from(a).and(reference).for_each(|x, y| worst = worst.max((x - y).abs()));
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// 0/1 mask of a regular graph's blocks for uniform group sizes.
pub fn block_mask<G: Topology + ?Sized>(g: &G, s_in: usize, s_out: usize) -> Array2<f64> {
    let n = g.order();
    Array2::from_shape_fn((n * s_out, n * s_in), |(r, c)| f64::from(u8::from(g.has_edge(r / s_out, c / s_in))))
}

/// Random weights that are zero outside the allowed blocks.
pub fn random_masked_weights<R: Rng>(mask: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    mask.mapv(|m| if m == 0.0 { 0.0 } else { rng.random_range(-1.0..1.0) })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchConfig {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub batch: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Use the complete graph with self-loops (`k` is forced to `n`).
    pub dense: bool,
    /// Run batch rows in parallel for both kernels.
    pub parallel: bool,
    /// Compare both kernels before timing.
    pub self_check: bool,
}

impl BenchConfig {
    pub fn new(n: usize, k: usize, s: usize, batch: usize, repeats: usize) -> Self {
        Self { n, k, s, batch, repeats, seed: 0, dense: false, parallel: false, self_check: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub batch: usize,
    pub t_naive_ms: f64,
    pub t_regular_ms: f64,
    pub flops_ratio: f64,
    pub threads: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

fn time_ms(repeats: usize, mut f: impl FnMut()) -> f64 {
    f();
    let samples = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(samples)
}

/// Times the masked dense product against the gather-dense product on one
/// random layer. Times are medians over `repeats` after one warmup run.
pub fn bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let BenchConfig { n, s, batch, repeats, .. } = *cfg;
    if n == 0 || s == 0 || batch == 0 || repeats == 0 || (!cfg.dense && cfg.k == 0) {
        return Err(EngineError::InvalidBench("all sizes and repeats must be positive".into()));
    }
    let graph: AdjacencyGraph = if cfg.dense {
        AdjacencyGraph::complete_with_self_loops(n)
    } else if cfg.k.is_multiple_of(2) {
        ring_lattice(n, cfg.k)?.as_adjacency().clone()
    } else {
        random_regular(n, cfg.k, cfg.seed)?.as_adjacency().clone()
    };
    let plan = GatherPlan::new(&graph)?;
    let k = plan.k;
    let part = partition(n * s, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mask = block_mask(&graph, s, s);
    let w = random_masked_weights(&mask, &mut rng);
    let x = Array2::from_shape_fn((batch, n * s), |_| rng.random_range(-1.0..1.0));
    let bw = encode(&w, &plan, &part, &part)?;

    if cfg.self_check {
        let reference = naive_masked_matmul(&w, &mask, &x)?;
        let got = regular_matmul(&bw, &plan, &x)?;
        let dev = relative_deviation(&got, &reference);
        if dev > 1e-6 {
            return Err(EngineError::OracleMismatch(dev));
        }
    }

    let width = n * s;
    let (t_naive, t_regular, threads) = if cfg.parallel {
        let naive = time_ms(repeats, || {
            std::hint::black_box(par_rows(&x, width, |xc| naive_masked_matmul(&w, &mask, xc).unwrap()));
        });
        let regular = time_ms(repeats, || {
            std::hint::black_box(par_rows(&x, width, |xc| regular_matmul(&bw, &plan, xc).unwrap()));
        });
        (naive, regular, rayon::current_num_threads())
    } else {
        let naive = time_ms(repeats, || {
            std::hint::black_box(naive_masked_matmul(&w, &mask, &x).unwrap());
        });
        let regular = time_ms(repeats, || {
            std::hint::black_box(regular_matmul(&bw, &plan, &x).unwrap());
        });
        (naive, regular, 1)
    };
    Ok(BenchReport {
        n,
        k,
        s,
        batch,
        t_naive_ms: t_naive,
        t_regular_ms: t_regular,
        flops_ratio: k as f64 / n as f64,
        threads,
    })
}
