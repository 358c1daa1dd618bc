#ifndef POISSON_WF_H
#define POISSON_WF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PwfStatus {
  PWF_STATUS_OK = 0,
  PWF_STATUS_NULL_POINTER = 1,
  PWF_STATUS_INVALID_ARGUMENT = 2,
  PWF_STATUS_SHAPE_MISMATCH = 3,
  /**
   * Degenerate data, e.g. a nonpositive Poisson rate or an all-zero ensemble.
   */
  PWF_STATUS_DEGENERATE = 4,
  PWF_STATUS_OUT_OF_RANGE = 5,
  /**
   * No reference signal is attached to the problem.
   */
  PWF_STATUS_UNAVAILABLE = 6,
  PWF_STATUS_PANIC = 7,
} PwfStatus;

typedef enum PwfModel {
  PWF_MODEL_POISSON = 0,
  PWF_MODEL_GAUSSIAN_LEAST_SQUARES = 1,
} PwfModel;

typedef enum PwfRule {
  /**
   * Fixed step `mu`.
   */
  PWF_RULE_CONSTANT = 0,
  /**
   * `min(1 - exp(-t / 330), 0.2)`
   */
  PWF_RULE_HEURISTIC = 1,
  PWF_RULE_FISHER_INFORMATION = 2,
} PwfRule;

/**
 * Measurements, backgrounds and observations, plus the true signal and a
 * starting point when the problem was generated.
 */
typedef struct PwfProblem PwfProblem;

typedef struct PwfTrace PwfTrace;

typedef struct PwfSolverOptions {
  enum PwfModel model;
  enum PwfRule rule;
  /**
   * Step for [`PwfRule::Constant`].
   */
  double mu;
  size_t max_iters;
  /**
   * Stop once the NRMSE reaches this value (needs a reference signal).
   */
  double nrmse_tol;
  size_t record_every;
  /**
   * The incremental solver uses step `iwf_mu_scale / n`.
   */
  double iwf_mu_scale;
} PwfSolverOptions;

typedef struct PwfIterRecord {
  size_t iter;
  /**
   * NaN when the problem has no reference signal.
   */
  double nrmse;
  double objective;
  double step;
} PwfIterRecord;

typedef struct PwfCurvatureConstants {
  double u;
  double l1;
  double l2;
  double phi1;
  double phi2;
  double psi;
  double varphi;
  double lcur_hat;
  double u_smo;
  bool in_region;
} PwfCurvatureConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *pwf_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *pwf_status_name(enum PwfStatus status);

struct PwfSolverOptions pwf_solver_options_default(void);

/**
 * Synthetic instance with `||x||^2 = 2`, calibrated Gaussian rows,
 * log-uniform backgrounds in `[alpha1, alpha2]` times the clean intensity,
 * scaled Poisson noise of level `eta` and a start at relative distance `rho`.
 * Equal `(seed, trial)` give the same instance as the command-line tool.
 */
enum PwfStatus pwf_problem_generate(size_t n,
                                    size_t m,
                                    double alpha1,
                                    double alpha2,
                                    double eta,
                                    double rho,
                                    uint64_t seed,
                                    uint64_t trial,
                                    struct PwfProblem **out);

/**
 * Problem from caller data: `rows` holds the `m` conjugated measurement
 * vectors row by row (`2mn` doubles), `background` and `observed` hold `m`
 * values each. No reference signal or start is attached.
 */
enum PwfStatus pwf_problem_from_data(size_t n,
                                     size_t m,
                                     const double *rows,
                                     const double *background,
                                     const double *observed,
                                     struct PwfProblem **out);

/**
 * Releases a problem; null is ignored.
 */
void pwf_problem_free(struct PwfProblem *problem);

enum PwfStatus pwf_problem_dims(const struct PwfProblem *problem, size_t *n, size_t *m);

/**
 * Copies the true signal (`2n` doubles). `Unavailable` for caller data.
 */
enum PwfStatus pwf_problem_signal(const struct PwfProblem *problem, double *out, size_t len);

/**
 * Copies the generated starting point (`2n` doubles).
 */
enum PwfStatus pwf_problem_start(const struct PwfProblem *problem, double *out, size_t len);

enum PwfStatus pwf_objective(const struct PwfProblem *problem,
                             enum PwfModel model,
                             const double *z,
                             size_t len,
                             double *value);

/**
 * Wirtinger gradient at `z`, written to `grad` (`2n` doubles each).
 */
enum PwfStatus pwf_gradient(const struct PwfProblem *problem,
                            enum PwfModel model,
                            const double *z,
                            size_t len,
                            double *grad,
                            size_t grad_len);

/**
 * `min over unit phases u of ||z u - x|| / ||x||` for two length-`n` vectors.
 */
enum PwfStatus pwf_nrmse(const double *x, const double *z, size_t n, double *value);

/**
 * Full-batch Wirtinger flow. A null `z0` uses the problem's own start.
 */
enum PwfStatus pwf_wf_solve(const struct PwfProblem *problem,
                            const struct PwfSolverOptions *options,
                            const double *z0,
                            size_t len,
                            struct PwfTrace **out);

/**
 * Incremental Wirtinger flow on the Poisson objective; `max_iters` counts
 * single-measurement steps and `seed` drives the index sampling.
 */
enum PwfStatus pwf_iwf_solve(const struct PwfProblem *problem,
                             const struct PwfSolverOptions *options,
                             const double *z0,
                             size_t len,
                             uint64_t seed,
                             struct PwfTrace **out);

void pwf_trace_free(struct PwfTrace *trace);

/**
 * Number of recorded iterations; 0 for a null trace.
 */
size_t pwf_trace_len(const struct PwfTrace *trace);

enum PwfStatus pwf_trace_record(const struct PwfTrace *trace,
                                size_t index,
                                struct PwfIterRecord *record);

enum PwfStatus pwf_trace_final_z(const struct PwfTrace *trace, double *out, size_t len);

/**
 * Whether the NRMSE tolerance was reached.
 */
bool pwf_trace_converged(const struct PwfTrace *trace);

enum PwfStatus pwf_smoothness_constant(double alpha1, double delta, double *value);

enum PwfStatus pwf_curvature_constants(double alpha1,
                                       double alpha2,
                                       double rho,
                                       double delta,
                                       struct PwfCurvatureConstants *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POISSON_WF_H */
