//! C ABI over `topoprune`.
//!
//! Graphs cross the boundary as opaque `TpGraph` handles owned by the caller
//! and released with `tp_graph_free`. Every fallible call returns a
//! `TpStatus`; on failure `tp_last_error` describes the most recent error on
//! the calling thread. Strings returned through out-parameters are owned by
//! the caller and released with `tp_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use topoprune::engine::EngineError;
use topoprune::graph::{self, GraphError, RegularGraph};
use topoprune::mask::{self, bundled, MaskError, ModelSpec};
use topoprune::metrics::{self, MetricsError};
use topoprune::search::{self, SearchConfig, SearchError};

/// Status codes; numeric values are stable.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    /// An argument is out of range or malformed.
    InvalidArgument = 1,
    /// The input violates a model invariant (disconnected, infeasible, ...).
    Validation = 2,
    Io = 3,
    NullPointer = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// Opaque graph handle.
pub struct TpGraph {
    inner: RegularGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(TpStatus, String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let status = match e {
            GraphError::Io(_) => TpStatus::Io,
            _ => TpStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Graph(g) => g.into(),
            SearchError::InvalidConfig(_) => Failure(TpStatus::InvalidArgument, e.to_string()),
            SearchError::Io(_) | SearchError::Csv(_) => Failure(TpStatus::Io, e.to_string()),
            _ => Failure(TpStatus::Validation, e.to_string()),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Graph(g) => g.into(),
            MetricsError::InvalidShape | MetricsError::InvalidNode { .. } => {
                Failure(TpStatus::InvalidArgument, e.to_string())
            }
            _ => Failure(TpStatus::Validation, e.to_string()),
        }
    }
}

impl From<MaskError> for Failure {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::Graph(g) => g.into(),
            MaskError::Io(_) => Failure(TpStatus::Io, e.to_string()),
            _ => Failure(TpStatus::Validation, e.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure(TpStatus::Validation, e.to_string())
    }
}

/// Runs `f` behind a panic guard and records any failure.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TpStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn graph_ref<'a>(g: *const TpGraph) -> Result<&'a RegularGraph, Failure> {
    g.as_ref().map(|h| &h.inner).ok_or_else(|| null("graph handle"))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure(TpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_graph(out: *mut *mut TpGraph, g: RegularGraph) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    out.write(Box::into_raw(Box::new(TpGraph { inner: g })));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output string"));
    }
    let c = CString::new(s).map_err(|_| Failure(TpStatus::Internal, "string contains NUL".into()))?;
    out.write(c.into_raw());
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Ring lattice on `n` nodes with even degree `k`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_ring(n: usize, k: usize, out: *mut *mut TpGraph) -> TpStatus {
    guard(|| put_graph(out, graph::ring_lattice(n, k)?))
}

/// Uniformly random simple `k`-regular graph.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_random(n: usize, k: usize, seed: u64, out: *mut *mut TpGraph) -> TpStatus {
    guard(|| put_graph(out, graph::random_regular(n, k, seed)?))
}

/// Builds a graph from `edge_count` pairs laid out as `[u0, v0, u1, v1, ...]`.
///
/// # Safety
/// `edges` must point to `2 * edge_count` readable values; `out` must be
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_from_edges(
    n: usize,
    k: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut TpGraph,
) -> TpStatus {
    guard(|| {
        if edges.is_null() && edge_count > 0 {
            return Err(null("edge array"));
        }
        let flat = if edge_count == 0 { &[][..] } else { std::slice::from_raw_parts(edges, 2 * edge_count) };
        let g = RegularGraph::new(n, k, flat.chunks_exact(2).map(|p| (p[0], p[1])))?;
        put_graph(out, g)
    })
}

/// Reads an edge-list file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_read(path: *const c_char, out: *mut *mut TpGraph) -> TpStatus {
    guard(|| put_graph(out, graph::read_graph(text(path, "path")?)?))
}

/// Writes an edge-list file.
///
/// # Safety
/// `g` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_write(g: *const TpGraph, path: *const c_char) -> TpStatus {
    guard(|| Ok(graph::write_graph(graph_ref(g)?, text(path, "path")?)?))
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_free(g: *mut TpGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_nodes(g: *const TpGraph) -> usize {
    g.as_ref().map_or(0, |h| h.inner.n())
}

/// Degree, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_degree(g: *const TpGraph) -> usize {
    g.as_ref().map_or(0, |h| h.inner.k())
}

/// Copies the sorted edge list into `edges` as `[u0, v0, ...]`. Pass a null
/// buffer to query the edge count only.
///
/// # Safety
/// `edges` must be null or hold `2 * capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_edges(
    g: *const TpGraph,
    edges: *mut usize,
    capacity: usize,
    edge_count: *mut usize,
) -> TpStatus {
    guard(|| {
        let list = graph_ref(g)?.edges();
        put(edge_count, list.len(), "edge count")?;
        if edges.is_null() {
            return Ok(());
        }
        if capacity < list.len() {
            return Err(Failure(TpStatus::InvalidArgument, format!("buffer holds {capacity} edges, need {}", list.len())));
        }
        for (i, &(u, v)) in list.iter().enumerate() {
            edges.add(2 * i).write(u);
            edges.add(2 * i + 1).write(v);
        }
        Ok(())
    })
}

/// Average shortest path length over ordered pairs.
///
/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_aspl(g: *const TpGraph, out: *mut f64) -> TpStatus {
    guard(|| put(out, graph::aspl(graph_ref(g)?)?, "output"))
}

/// Runs `attempts` edge-swap attempts and returns the optimized graph as a new
/// handle. `accepted` may be null.
///
/// # Safety
/// `g` must be a live handle; `out` writable; `accepted` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_search(
    g: *const TpGraph,
    attempts: usize,
    seed: u64,
    out: *mut *mut TpGraph,
    accepted: *mut usize,
) -> TpStatus {
    guard(|| {
        let outcome = search::minimize_aspl(graph_ref(g)?, &SearchConfig::new(attempts, seed))?;
        if !accepted.is_null() {
            accepted.write(outcome.trajectory.accepted_count());
        }
        put_graph(out, outcome.graph)
    })
}

/// Mean gradient resistance over all nodes.
///
/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_gr(g: *const TpGraph, out: *mut f64) -> TpStatus {
    guard(|| put(out, metrics::gr_graph(graph_ref(g)?)?, "output"))
}

/// Average output-neuron parameter usage for an `layers`-layer MLP with
/// `group_size` units per group.
///
/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_aopu(g: *const TpGraph, layers: usize, group_size: usize, out: *mut f64) -> TpStatus {
    guard(|| put(out, metrics::aopu(graph_ref(g)?, layers, group_size)?, "output"))
}

/// ASPL lower bound of an `n`-node `k`-regular graph.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_lower_bound(n: usize, k: usize, out: *mut f64) -> TpStatus {
    guard(|| put(out, metrics::lower_bound_aspl(n, k)?.value(), "output"))
}

/// Number of completely filled layers in the ideal `k`-ary BFS tree.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_theta(n: usize, k: usize, out: *mut u32) -> TpStatus {
    guard(|| put(out, metrics::theta(n, k)?, "output"))
}

/// Metrics report (n, k, aspl, gr, aopu, lower_bound, theta) as JSON.
///
/// # Safety
/// `g` must be a live handle and `out` writable; free the result with
/// `tp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn tp_graph_metrics_json(
    g: *const TpGraph,
    layers: usize,
    group_size: usize,
    out: *mut *mut c_char,
) -> TpStatus {
    guard(|| {
        let report = metrics::metrics_report(graph_ref(g)?, layers, group_size)?;
        put_string(out, serde_json::to_string(&report).expect("report serializes"))
    })
}

/// Parameter and FLOP reductions of mapping `g` onto a model, as JSON.
/// `model` is a bundled name (`vgg16`, `resnet18`) or a model-spec JSON
/// document. With `dense` set the unpruned mapping is used.
///
/// # Safety
/// `g` must be a live handle, `model` NUL-terminated and `out` writable; free
/// the result with `tp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn tp_mask_reduction_json(
    g: *const TpGraph,
    model: *const c_char,
    dense: bool,
    out: *mut *mut c_char,
) -> TpStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let name = text(model, "model")?;
        let spec = match bundled::by_name(name) {
            Some(m) => m,
            None => ModelSpec::from_json(name)?,
        };
        let masks = if dense { mask::dense_masks(g.n(), &spec)? } else { mask::model_masks(g, &spec)? };
        let stats = mask::model_reduction(&masks, &spec)?;
        put_string(out, serde_json::to_string(&stats).expect("stats serialize"))
    })
}

/// Times the gather-dense kernel against the masked dense product and
/// returns the benchmark report as JSON. With `check` set, both kernels are
/// compared first.
///
/// # Safety
/// `out` must be writable; free the result with `tp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn tp_bench_json(
    n: usize,
    k: usize,
    group_size: usize,
    batch: usize,
    repeats: usize,
    check: bool,
    out: *mut *mut c_char,
) -> TpStatus {
    guard(|| {
        let cfg = topoprune::engine::BenchConfig {
            self_check: check,
            ..topoprune::engine::BenchConfig::new(n, k, group_size, batch, repeats)
        };
        let report = topoprune::engine::bench(&cfg).map_err(|e| match e {
            EngineError::InvalidBench(_) => Failure(TpStatus::InvalidArgument, e.to_string()),
            other => other.into(),
        })?;
        put_string(out, serde_json::to_string(&report).expect("report serializes"))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
