#ifndef EGGS_H
#define EGGS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EggsStatus {
  EGGS_STATUS_OK = 0,
  EGGS_STATUS_NULL_POINTER = 1,
  EGGS_STATUS_INVALID_ARGUMENT = 2,
  EGGS_STATUS_CONFIG = 3,
  EGGS_STATUS_PARSE = 4,
  EGGS_STATUS_MISSING_ARTIFACT = 5,
  EGGS_STATUS_IO = 6,
  EGGS_STATUS_METRIC = 7,
  // A Rust panic was caught at the boundary.
  EGGS_STATUS_INTERNAL = 8,
} EggsStatus;

// Messages and follower edges.
typedef struct EggsDataset EggsDataset;

// Binary message/hub factor graph.
typedef struct EggsFactorGraph EggsFactorGraph;

// Ground hinge-loss model together with the message priors it was built from.
typedef struct EggsHingeModel EggsHingeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `len` bytes, into `buf`. Returns the full message length in
// bytes (excluding the terminator); pass `buf = NULL` to query it.
size_t eggs_last_error_message(char *buf, size_t len);

// Static, NUL-terminated library version.
const char *eggs_version(void);

// Generates a synthetic dataset from a TOML generator config (`NULL` for defaults).
enum EggsStatus eggs_dataset_generate(const char *config_toml, struct EggsDataset **out);

// Loads line-delimited JSON messages and an optional follows file (`NULL` for none).
enum EggsStatus eggs_dataset_load(const char *messages_path,
                                  const char *follows_path,
                                  struct EggsDataset **out);

// Writes messages and, if `follows_path` is not `NULL`, follower edges.
enum EggsStatus eggs_dataset_save(const struct EggsDataset *dataset,
                                  const char *messages_path,
                                  const char *follows_path);

// Number of messages, and of those labeled spam.
enum EggsStatus eggs_dataset_counts(const struct EggsDataset *dataset,
                                    size_t *n_messages,
                                    size_t *n_spam);

void eggs_dataset_free(struct EggsDataset *dataset);

enum EggsStatus eggs_factor_graph_new(struct EggsFactorGraph **out);

// Adds a message variable with spam prior `prior`; its index goes to `index`.
enum EggsStatus eggs_factor_graph_add_message(struct EggsFactorGraph *graph,
                                              double prior,
                                              size_t *index);

// Adds a hub variable with a uniform unary potential.
enum EggsStatus eggs_factor_graph_add_hub(struct EggsFactorGraph *graph, size_t *index);

// Connects a message to a hub with agreement parameter `epsilon` in (0, 0.5).
enum EggsStatus eggs_factor_graph_connect(struct EggsFactorGraph *graph,
                                          size_t message,
                                          size_t hub,
                                          double epsilon);

enum EggsStatus eggs_factor_graph_sizes(const struct EggsFactorGraph *graph,
                                        size_t *n_variables,
                                        size_t *n_factors);

// Loopy BP spam marginals for every variable, in insertion order.
// Zero `max_iters`, `damping` or `tol` keep the library defaults.
enum EggsStatus eggs_factor_graph_bp(const struct EggsFactorGraph *graph,
                                     size_t max_iters,
                                     double damping,
                                     double tol,
                                     double *marginals,
                                     size_t len,
                                     bool *converged);

// Exact spam marginals by enumeration; small graphs only.
enum EggsStatus eggs_factor_graph_exact(const struct EggsFactorGraph *graph,
                                        double *marginals,
                                        size_t len);

void eggs_factor_graph_free(struct EggsFactorGraph *graph);

// Grounds the hinge-loss rules over `n_messages` priors and `n_groups`
// groups. Members of group `g` are `members[offsets[g] .. offsets[g + 1]]`
// (so `offsets` has `n_groups + 1` entries) and its relation is
// `relations[g]`. Prior rules take weights `w_negative` / `w_positive`,
// relational rules `w_relational`; `exponent` is 1 or 2.
enum EggsStatus eggs_hinge_model_new(const double *priors,
                                     size_t n_messages,
                                     const size_t *members,
                                     const size_t *offsets,
                                     const uint32_t *relations,
                                     size_t n_groups,
                                     double w_negative,
                                     double w_positive,
                                     double w_relational,
                                     uint8_t exponent,
                                     struct EggsHingeModel **out);

enum EggsStatus eggs_hinge_model_sizes(const struct EggsHingeModel *model,
                                       size_t *n_variables,
                                       size_t *n_hinges);

// MAP inference; writes one spam score per message (in prior order) and the
// objective value. Zero `tol` / `max_iter` keep the library defaults.
enum EggsStatus eggs_hinge_model_map(const struct EggsHingeModel *model,
                                     double tol,
                                     size_t max_iter,
                                     double *scores,
                                     size_t len,
                                     double *objective,
                                     bool *converged);

void eggs_hinge_model_free(struct EggsHingeModel *model);

// Average precision of `scores` against 0/1 `labels`.
enum EggsStatus eggs_aupr(const double *scores, const uint8_t *labels, size_t n, double *out);

// Area under the ROC curve, ties counted as one half.
enum EggsStatus eggs_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Runs every pipeline stage with the TOML config at `config_path` (`NULL`
// for defaults). A non-`NULL` `out_dir` overrides `paths.out`. Reports land
// in `<out>/report.txt` and `<out>/report.json`.
enum EggsStatus eggs_run_all(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EGGS_H */
