#ifndef CRNAS_H
#define CRNAS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CrnasStatus {
  CRNAS_STATUS_OK = 0,
  CRNAS_STATUS_NULL_POINTER = 1,
  // Bad configuration, dimension mismatch or contract violation.
  CRNAS_STATUS_INVALID_ARGUMENT = 2,
  // No strictly feasible interior, or the feasible set is a single point.
  CRNAS_STATUS_INFEASIBLE = 3,
  CRNAS_STATUS_DOMAIN = 4,
  CRNAS_STATUS_IO = 5,
  CRNAS_STATUS_PANIC = 6,
} CrnasStatus;

typedef enum CrnasMethod {
  CRNAS_METHOD_CRNAS = 0,
  CRNAS_METHOD_FOAS = 1,
} CrnasMethod;

typedef enum CrnasTermination {
  CRNAS_TERMINATION_STEP_BELOW_ETA = 0,
  CRNAS_TERMINATION_SMALL_GRADIENT = 1,
  CRNAS_TERMINATION_SMALL_STEP = 2,
  CRNAS_TERMINATION_MAX_ITERATIONS = 3,
  CRNAS_TERMINATION_REGULARIZATION_LIMIT = 4,
} CrnasTermination;

typedef struct CrnasDataset CrnasDataset;

typedef struct CrnasProgram CrnasProgram;

typedef struct CrnasReport CrnasReport;

// Objective callback.
//
// Writes the value at `x` (length `n`) to `*value`. When `gradient` is not
// null it receives `n` entries; when `hessian` is not null it receives
// `n*n` entries in column-major order. Return 0 on success; any other value
// marks `x` as outside the domain. Must be safe to call from several threads.
typedef int (*CrnasEvalFn)(void *user_data,
                           const double *x,
                           size_t n,
                           double *value,
                           double *gradient,
                           double *hessian);

// Plain-data mirror of the solver settings.
typedef struct CrnasSolverConfig {
  double alpha;
  double m0;
  double eta;
  double epsilon;
  size_t max_iter;
  bool adaptive;
  double m_min;
  double m_max;
  bool practical_stops;
} CrnasSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null after a success.
// Valid until the next call into the library from the same thread.
const char *crnas_last_error_message(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void crnas_string_free(char *s);

// Simulates dataset `index` of the stream seeded by `seed`.
// `model` is one of `phenopop`, `lbd`, `logistic`.
//
// # Safety
// `model` must be a NUL-terminated string; `out` must be writable.
enum CrnasStatus crnas_dataset_simulate(const char *model,
                                        size_t s,
                                        double x0,
                                        uint64_t seed,
                                        uint64_t index,
                                        struct CrnasDataset **out);

// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum CrnasStatus crnas_dataset_from_json(const char *json, struct CrnasDataset **out);

// Serializes a dataset; free the result with [`crnas_string_free`].
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum CrnasStatus crnas_dataset_to_json(const struct CrnasDataset *dataset, char **out);

// # Safety
// `dataset` must be null or a handle not yet freed.
void crnas_dataset_free(struct CrnasDataset *dataset);

// Builds the fitting program of a dataset with the standard parameter bounds.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum CrnasStatus crnas_program_from_dataset(const struct CrnasDataset *dataset,
                                            struct CrnasProgram **out);

// Builds `min f(θ) s.t. Aθ = b, θ > 0` over `n` coordinates.
//
// `a` holds `m*n` entries in row-major order and `b` holds `m`; both may be
// null when `m == 0`.
//
// # Safety
// Buffers must have the stated lengths; `user_data` must stay valid for the
// lifetime of the program.
enum CrnasStatus crnas_program_new(size_t n,
                                   size_t m,
                                   const double *a,
                                   const double *b,
                                   CrnasEvalFn eval,
                                   void *user_data,
                                   struct CrnasProgram **out);

// Number of cone coordinates.
//
// # Safety
// `program` must be a live handle or null (returns 0).
size_t crnas_program_dim(const struct CrnasProgram *program);

// Number of coordinates of the original parameter vector.
//
// # Safety
// `program` must be a live handle or null (returns 0).
size_t crnas_program_original_dim(const struct CrnasProgram *program);

// Writes a strictly interior feasible point into `theta` (length `n`).
//
// # Safety
// `program` must be live; `theta` must hold `n` doubles.
enum CrnasStatus crnas_program_interior_point(const struct CrnasProgram *program,
                                              uint64_t seed,
                                              double *theta,
                                              size_t n);

// Maps cone coordinates back to the original parameters.
//
// # Safety
// `theta` must hold `n` doubles and `x` must hold `original_dim` doubles.
enum CrnasStatus crnas_program_to_original(const struct CrnasProgram *program,
                                           const double *theta,
                                           size_t n,
                                           double *x,
                                           size_t original_dim);

// # Safety
// `program` must be null or a handle not yet freed.
void crnas_program_free(struct CrnasProgram *program);

struct CrnasSolverConfig crnas_solver_config_default(void);

// Runs the solver from `theta0` (length `n`). A null `config` uses defaults.
//
// # Safety
// `program` must be live; `theta0` must hold `n` doubles; `out` must be writable.
enum CrnasStatus crnas_solve(const struct CrnasProgram *program,
                             const double *theta0,
                             size_t n,
                             const struct CrnasSolverConfig *config,
                             enum CrnasMethod method,
                             struct CrnasReport **out);

// Final objective value, or NaN for a null handle.
//
// # Safety
// `report` must be a live handle or null.
double crnas_report_objective(const struct CrnasReport *report);

// # Safety
// `report` must be a live handle or null (returns 0).
size_t crnas_report_iterations(const struct CrnasReport *report);

// # Safety
// `report` must be a live handle or null (returns `MaxIterations`).
enum CrnasTermination crnas_report_termination(const struct CrnasReport *report);

// First-order stationarity measure at the final iterate, NaN for null.
//
// # Safety
// `report` must be a live handle or null.
double crnas_report_fosp(const struct CrnasReport *report);

// Smallest eigenvalue of the scaled reduced Hessian at the final iterate.
//
// # Safety
// `report` must be a live handle or null.
double crnas_report_sosp(const struct CrnasReport *report);

// Copies the final iterate into `theta` (length `n`).
//
// # Safety
// `report` must be live; `theta` must hold `n` doubles.
enum CrnasStatus crnas_report_theta(const struct CrnasReport *report, double *theta, size_t n);

// Full report as JSON; free the result with [`crnas_string_free`].
//
// # Safety
// `report` must be live; `out` must be writable.
enum CrnasStatus crnas_report_to_json(const struct CrnasReport *report, char **out);

// # Safety
// `report` must be null or a handle not yet freed.
void crnas_report_free(struct CrnasReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRNAS_H */
