#ifndef EXPCON_H
#define EXPCON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of an FFI call. Values 1 to 4 match the command-line exit codes.
typedef enum ExpconStatus {
  EXPCON_STATUS_OK = 0,
  // Bad configuration or usage.
  EXPCON_STATUS_CONFIG = 1,
  // Unreadable or malformed input data, checkpoint or constraints.
  EXPCON_STATUS_DATA = 2,
  // Optimization failed or produced non-finite values.
  EXPCON_STATUS_OPTIMIZATION = 3,
  // Internal invariant violated.
  EXPCON_STATUS_INVARIANT = 4,
  // A required pointer argument was null.
  EXPCON_STATUS_NULL_POINTER = 5,
  // A string argument was not valid UTF-8.
  EXPCON_STATUS_INVALID_UTF8 = 6,
  // A Rust panic was caught at the boundary.
  EXPCON_STATUS_PANIC = 7,
} ExpconStatus;

// Opaque trained model. Create with `expcon_model_load`, release with
// `expcon_model_free`.
typedef struct ExpconModel ExpconModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a checkpoint written by `expcon train`.
//
// On success `*out` owns a new model; on failure it is set to null.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ExpconStatus expcon_model_load(const char *path, struct ExpconModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or come from `expcon_model_load`, and must not be
// used afterwards.
void expcon_model_free(struct ExpconModel *model);

// Number of labels, or 0 for a null model.
//
// # Safety
// `model` must be null or a live model.
uintptr_t expcon_model_num_labels(const struct ExpconModel *model);

// Name of label `index`, owned by the model; null when out of range.
//
// # Safety
// `model` must be null or a live model.
const char *expcon_model_label_name(const struct ExpconModel *model, uintptr_t index);

// Decodes every example in `input` and writes them with predicted labels
// to `output`, in the same format the command-line `label` produces.
//
// # Safety
// `model` must be a live model; `input` and `output` NUL-terminated strings.
enum ExpconStatus expcon_model_label_file(const struct ExpconModel *model,
                                          const char *input,
                                          const char *output);

// Scores the model on the labeled examples in `data`.
//
// # Safety
// `model` must be a live model, `data` a NUL-terminated string, and
// `accuracy` and `macro_f1` valid pointers.
enum ExpconStatus expcon_model_evaluate_file(const struct ExpconModel *model,
                                             const char *data,
                                             double *accuracy,
                                             double *macro_f1);

// Runs the command-line tool with `argv[0..argc]` and returns its exit
// code. A caught panic returns `EXPCON_STATUS_PANIC`.
//
// # Safety
// `argv` must hold `argc` NUL-terminated strings.
int expcon_cli_main(int argc, const char *const *argv);

// Message for the last failed call on this thread, or null. Valid until
// the next FFI call on the same thread.
const char *expcon_last_error(void);

// Library version as a static NUL-terminated string.
const char *expcon_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPCON_H */
