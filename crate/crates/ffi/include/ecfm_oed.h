#ifndef ECFM_OED_H
#define ECFM_OED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ECFM_CASE_PARAMETERIZED_BC 0

#define ECFM_CASE_PARAMETERIZED_SOURCE 1

#define ECFM_CASE_PARAMETERIZED_MATERIAL 2

#define ECFM_CASE_MISSPECIFIED_SOURCE 3

#define ECFM_CRITERION_FISHER 0

#define ECFM_CRITERION_ECFM 1

// Result of every fallible call.
enum EcfmStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  ECFM_STATUS_OK = 0,
  ECFM_STATUS_NULL_POINTER = 1,
  // Bad case or criterion code, mesh, prior, design or length.
  ECFM_STATUS_INVALID_ARGUMENT = 2,
  // A value outside the domain of a closed form, e.g. beta outside [0, 1].
  ECFM_STATUS_DOMAIN = 3,
  // Singular saddle system: coincident measurements or one on x = 0.
  ECFM_STATUS_DEGENERATE_DESIGN = 4,
  // Solver, eigenvalue or optimizer failure.
  ECFM_STATUS_NUMERICAL = 5,
  ECFM_STATUS_BUFFER_TOO_SMALL = 6,
  ECFM_STATUS_PANIC = 7,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum EcfmStatus EcfmStatus;
#else
typedef int32_t EcfmStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque finite element design problem for one model case.
typedef struct EcfmProblem EcfmProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Create a problem on a uniform mesh of `elements` elements with a uniform prior
// `[prior_lo, prior_hi]` on `eps` and `quadrature_nodes` Gauss-Legendre nodes.
//
// # Safety
// `out` must be null or point to writable storage for one pointer.
EcfmStatus ecfm_problem_new(int32_t case_code,
                            double k,
                            double b,
                            double p,
                            size_t elements,
                            double prior_lo,
                            double prior_hi,
                            size_t quadrature_nodes,
                            struct EcfmProblem **out);

// Release a problem. Null is ignored.
//
// # Safety
// `problem` must come from [`ecfm_problem_new`] and not be used afterwards.
void ecfm_problem_free(struct EcfmProblem *problem);

// Number of mesh nodes, including the Dirichlet node at x = 0.
//
// # Safety
// Pointers must be null or valid.
EcfmStatus ecfm_problem_node_count(const struct EcfmProblem *problem, size_t *out);

// Mesh node coordinates into `out[0..len]`.
//
// # Safety
// `out` must hold `len` doubles.
EcfmStatus ecfm_problem_nodes(const struct EcfmProblem *problem, double *out, size_t len);

// Nodal finite element solution of the model at `eps`.
//
// # Safety
// `out` must hold `len` doubles.
EcfmStatus ecfm_forward(const struct EcfmProblem *problem, double eps, double *out, size_t len);

// Constrained state at `eps` that matches `data` at `positions`. Writes the
// `count` constraint forces and half their squared norm.
//
// # Safety
// `positions`, `data` and `out_lambda` must hold `count` doubles.
EcfmStatus ecfm_solve_constrained(const struct EcfmProblem *problem,
                                  double eps,
                                  const double *positions,
                                  const double *data,
                                  size_t count,
                                  double *out_lambda,
                                  double *out_objective);

// Smallest eigenvalue of the prior-averaged criterion matrix at a design, and
// optionally its gradient with respect to the `count` positions. The ECFM criterion
// uses the prior-mean response as data.
//
// # Safety
// `positions` must hold `count` doubles; `out_gradient` must be null or hold `count`.
EcfmStatus ecfm_criterion(const struct EcfmProblem *problem,
                          int32_t criterion_code,
                          const double *positions,
                          size_t count,
                          double *out_value,
                          double *out_gradient);

// Maximize a criterion over `count` positions in `[h, 1]` from `starts` starting
// points. A single position uses the closed-form criterion, which is exact between
// mesh nodes; several positions use the finite element criterion.
//
// # Safety
// `out_positions` must hold `count` doubles.
EcfmStatus ecfm_optimize(const struct EcfmProblem *problem,
                         int32_t criterion_code,
                         size_t count,
                         size_t starts,
                         double *out_positions,
                         double *out_value);

// Closed-form constraint force of a single measurement at `beta` with exact data.
//
// # Safety
// `out` must be null or valid.
EcfmStatus ecfm_oracle_constraint_force(int32_t case_code,
                                        double k,
                                        double b,
                                        double p,
                                        double eps,
                                        double beta,
                                        double *out);

// Closed-form single-measurement criterion at `beta` under a uniform prior.
//
// # Safety
// `out` must be null or valid.
EcfmStatus ecfm_oracle_design_objective(int32_t case_code,
                                        double k,
                                        double b,
                                        double p,
                                        int32_t criterion_code,
                                        double prior_lo,
                                        double prior_hi,
                                        double beta,
                                        double *out);

// Copy the last error message of this thread, NUL-terminated, into `buf`.
// Returns the buffer size the message needs (0 when there is none); nothing is
// written when `buf` is null or `len` is smaller than that.
//
// # Safety
// `buf` must be null or hold `len` bytes.
size_t ecfm_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECFM_OED_H */
