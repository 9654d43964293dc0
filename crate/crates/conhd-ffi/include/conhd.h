#ifndef CONHD_H
#define CONHD_H

/* Generated by cbindgen from the conhd-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConhdMethod {
  CONHD_METHOD_GD = 0,
  CONHD_METHOD_ADMM = 1,
} ConhdMethod;

typedef enum ConhdRegularizer {
  CONHD_REGULARIZER_CE = 0,
  CONHD_REGULARIZER_TV2 = 1,
  CONHD_REGULARIZER_LEC2 = 2,
} ConhdRegularizer;

/**
 * Status code of every fallible call.
 */
typedef enum ConhdStatus {
  CONHD_STATUS_OK = 0,
  CONHD_STATUS_NULL_POINTER = 1,
  CONHD_STATUS_INVALID_ARGUMENT = 2,
  CONHD_STATUS_IO_ERROR = 3,
  CONHD_STATUS_STRUCTURE_ERROR = 4,
  CONHD_STATUS_NUMERIC_ERROR = 5,
} ConhdStatus;

/**
 * Opaque hypergraph handle.
 */
typedef struct ConhdHypergraph ConhdHypergraph;

/**
 * Options for one classical diffusion run.
 */
typedef struct ConhdDiffusionOptions {
  enum ConhdMethod method;
  enum ConhdRegularizer edge_reg;
  enum ConhdRegularizer node_reg;
  /**
   * GD step size.
   */
  double alpha;
  /**
   * ADMM scale factor.
   */
  double rho;
  double lambda;
  double gamma;
  uint64_t steps;
} ConhdDiffusionOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *conhd_last_error(void);

/**
 * Crate version as a static string.
 */
const char *conhd_version(void);

/**
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to a handle slot.
 */
enum ConhdStatus conhd_hypergraph_load(const char *path, struct ConhdHypergraph **out);

/**
 * Generate a random hypergraph with edge sizes uniform in
 * `[size_min, size_max]`; reproducible for a fixed seed.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum ConhdStatus conhd_hypergraph_random(uintptr_t nodes,
                                         uintptr_t edges,
                                         uintptr_t size_min,
                                         uintptr_t size_max,
                                         uint64_t seed,
                                         struct ConhdHypergraph **out);

/**
 * Release a handle; a null pointer is a no-op.
 *
 * # Safety
 * `h` must be a handle returned by this library and not yet freed.
 */
void conhd_hypergraph_free(struct ConhdHypergraph *h);

/**
 * # Safety
 * `h` must be a live handle; `path` a valid NUL-terminated string.
 */
enum ConhdStatus conhd_hypergraph_write(const struct ConhdHypergraph *h, const char *path);

/**
 * Node, edge and node-edge pair counts.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ConhdStatus conhd_hypergraph_counts(const struct ConhdHypergraph *h,
                                         uintptr_t *nodes,
                                         uintptr_t *edges,
                                         uintptr_t *pairs);

/**
 * Fill `pair_nodes[i]` / `pair_edges[i]` with the node and edge id of pair
 * `i` (the row order used by [`conhd_diffusion_run`]). Both buffers must
 * hold `len >= pair_count` entries.
 *
 * # Safety
 * The buffers must be valid for `len` writes.
 */
enum ConhdStatus conhd_pair_layout(const struct ConhdHypergraph *h,
                                   uintptr_t *pair_nodes,
                                   uintptr_t *pair_edges,
                                   uintptr_t len);

/**
 * Defaults: gradient descent with CE regularizers on both sides,
 * alpha = 0.01, rho = 1, lambda = gamma = 1, 100 steps.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ConhdStatus conhd_diffusion_options_default(struct ConhdDiffusionOptions *out);

/**
 * Run classical co-representation diffusion.
 *
 * `features` is the row-major `node_count x width` feature matrix; the
 * co-representations are initialized by broadcasting each node's features
 * to its pairs. The final `pair_count x width` matrix is written row-major
 * into `out_h` (see [`conhd_pair_layout`] for the row order).
 *
 * # Safety
 * `features` must hold `node_count * width` doubles and `out_h` must hold
 * `pair_count * width` doubles.
 */
enum ConhdStatus conhd_diffusion_run(const struct ConhdHypergraph *h,
                                     const double *features,
                                     uintptr_t width,
                                     const struct ConhdDiffusionOptions *options,
                                     double *out_h);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CONHD_H */
