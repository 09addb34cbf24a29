#ifndef MAGLEV_H
#define MAGLEV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum MaglevStatus {
  MAGLEV_STATUS_OK = 0,
  MAGLEV_STATUS_NULL_POINTER = 1,
  MAGLEV_STATUS_INVALID_PATH = 2,
  MAGLEV_STATUS_IO = 3,
  MAGLEV_STATUS_INVALID_DATA = 4,
  MAGLEV_STATUS_BUFFER_TOO_SMALL = 5,
  MAGLEV_STATUS_RUNTIME = 6,
  MAGLEV_STATUS_PANIC = 7,
} MaglevStatus;

// A loaded heterogeneous graph.
typedef struct MaglevGraph MaglevGraph;

// A loaded model checkpoint.
typedef struct MaglevModel MaglevModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *maglev_version(void);

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on this thread.
const char *maglev_last_error_message(void);

// Loads an `MGLV` graph file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MaglevStatus maglev_graph_load(const char *path, struct MaglevGraph **out);

// Number of nodes of one type (0 ego vision, 1 exo vision, 2 depth,
// 3 text), or of all types when `node_type` is negative.
//
// # Safety
// `graph` must come from [`maglev_graph_load`] and `out` be valid.
enum MaglevStatus maglev_graph_node_count(const struct MaglevGraph *graph,
                                          int32_t node_type,
                                          size_t *out);

// Total number of directed arcs.
//
// # Safety
// `graph` must come from [`maglev_graph_load`] and `out` be valid.
enum MaglevStatus maglev_graph_arc_count(const struct MaglevGraph *graph, size_t *out);

// Releases a graph. Null is ignored.
//
// # Safety
// `graph` must come from [`maglev_graph_load`] and not be used afterwards.
void maglev_graph_free(struct MaglevGraph *graph);

// Loads an `MGWT` checkpoint into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MaglevStatus maglev_model_load(const char *path, struct MaglevModel **out);

// Number of output classes.
//
// # Safety
// `model` must come from [`maglev_model_load`] and `out` be valid.
enum MaglevStatus maglev_model_num_classes(const struct MaglevModel *model, size_t *out);

// Class probabilities for the ego vision nodes of `graph`, row-major with
// one row per node in table order. Exocentric nodes are removed first.
//
// `*rows` receives the node count. When `capacity` is smaller than
// rows × classes nothing is written to `probs` and `BufferTooSmall` is
// returned, so a call with a null buffer and zero capacity queries the
// size.
//
// # Safety
// `model` and `graph` must be live handles, `rows` valid, and `probs`
// valid for `capacity` writes when non-null.
enum MaglevStatus maglev_model_predict(const struct MaglevModel *model,
                                       const struct MaglevGraph *graph,
                                       double *probs,
                                       size_t capacity,
                                       size_t *rows);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`maglev_model_load`] and not be used afterwards.
void maglev_model_free(struct MaglevModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGLEV_H */
