#ifndef TOPOPRUNE_H
#define TOPOPRUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; numeric values are stable.
 */
typedef enum TpStatus {
  TP_STATUS_OK = 0,
  /**
   * An argument is out of range or malformed.
   */
  TP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The input violates a model invariant (disconnected, infeasible, ...).
   */
  TP_STATUS_VALIDATION = 2,
  TP_STATUS_IO = 3,
  TP_STATUS_NULL_POINTER = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  TP_STATUS_INTERNAL = 5,
} TpStatus;

/**
 * Opaque graph handle.
 */
typedef struct TpGraph TpGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tp_version(void);

/**
 * Ring lattice on `n` nodes with even degree `k`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TpStatus tp_graph_ring(size_t n, size_t k, struct TpGraph **out);

/**
 * Uniformly random simple `k`-regular graph.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TpStatus tp_graph_random(size_t n, size_t k, uint64_t seed, struct TpGraph **out);

/**
 * Builds a graph from `edge_count` pairs laid out as `[u0, v0, u1, v1, ...]`.
 *
 * # Safety
 * `edges` must point to `2 * edge_count` readable values; `out` must be
 * valid for writing one pointer.
 */
enum TpStatus tp_graph_from_edges(size_t n,
                                  size_t k,
                                  const size_t *edges,
                                  size_t edge_count,
                                  struct TpGraph **out);

/**
 * Reads an edge-list file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writing.
 */
enum TpStatus tp_graph_read(const char *path, struct TpGraph **out);

/**
 * Writes an edge-list file.
 *
 * # Safety
 * `g` must be a live handle and `path` a NUL-terminated string.
 */
enum TpStatus tp_graph_write(const struct TpGraph *g, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `g` must come from this library and not be used afterwards.
 */
void tp_graph_free(struct TpGraph *g);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t tp_graph_nodes(const struct TpGraph *g);

/**
 * Degree, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t tp_graph_degree(const struct TpGraph *g);

/**
 * Copies the sorted edge list into `edges` as `[u0, v0, ...]`. Pass a null
 * buffer to query the edge count only.
 *
 * # Safety
 * `edges` must be null or hold `2 * capacity` writable values.
 */
enum TpStatus tp_graph_edges(const struct TpGraph *g,
                             size_t *edges,
                             size_t capacity,
                             size_t *edge_count);

/**
 * Average shortest path length over ordered pairs.
 *
 * # Safety
 * `g` must be a live handle and `out` writable.
 */
enum TpStatus tp_graph_aspl(const struct TpGraph *g, double *out);

/**
 * Runs `attempts` edge-swap attempts and returns the optimized graph as a new
 * handle. `accepted` may be null.
 *
 * # Safety
 * `g` must be a live handle; `out` writable; `accepted` null or writable.
 */
enum TpStatus tp_graph_search(const struct TpGraph *g,
                              size_t attempts,
                              uint64_t seed,
                              struct TpGraph **out,
                              size_t *accepted);

/**
 * Mean gradient resistance over all nodes.
 *
 * # Safety
 * `g` must be a live handle and `out` writable.
 */
enum TpStatus tp_graph_gr(const struct TpGraph *g, double *out);

/**
 * Average output-neuron parameter usage for an `layers`-layer MLP with
 * `group_size` units per group.
 *
 * # Safety
 * `g` must be a live handle and `out` writable.
 */
enum TpStatus tp_graph_aopu(const struct TpGraph *g, size_t layers, size_t group_size, double *out);

/**
 * ASPL lower bound of an `n`-node `k`-regular graph.
 *
 * # Safety
 * `out` must be writable.
 */
enum TpStatus tp_lower_bound(size_t n, size_t k, double *out);

/**
 * Number of completely filled layers in the ideal `k`-ary BFS tree.
 *
 * # Safety
 * `out` must be writable.
 */
enum TpStatus tp_theta(size_t n, size_t k, uint32_t *out);

/**
 * Metrics report (n, k, aspl, gr, aopu, lower_bound, theta) as JSON.
 *
 * # Safety
 * `g` must be a live handle and `out` writable; free the result with
 * `tp_string_free`.
 */
enum TpStatus tp_graph_metrics_json(const struct TpGraph *g,
                                    size_t layers,
                                    size_t group_size,
                                    char **out);

/**
 * Parameter and FLOP reductions of mapping `g` onto a model, as JSON.
 * `model` is a bundled name (`vgg16`, `resnet18`) or a model-spec JSON
 * document. With `dense` set the unpruned mapping is used.
 *
 * # Safety
 * `g` must be a live handle, `model` NUL-terminated and `out` writable; free
 * the result with `tp_string_free`.
 */
enum TpStatus tp_mask_reduction_json(const struct TpGraph *g,
                                     const char *model,
                                     bool dense,
                                     char **out);

/**
 * Times the gather-dense kernel against the masked dense product and
 * returns the benchmark report as JSON. With `check` set, both kernels are
 * compared first.
 *
 * # Safety
 * `out` must be writable; free the result with `tp_string_free`.
 */
enum TpStatus tp_bench_json(size_t n,
                            size_t k,
                            size_t group_size,
                            size_t batch,
                            size_t repeats,
                            bool check,
                            char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void tp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOPRUNE_H */
