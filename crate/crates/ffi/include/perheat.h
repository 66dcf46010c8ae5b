#ifndef PERHEAT_H
#define PERHEAT_H

#include <stddef.h>
#include <stdint.h>

#define PH_METHOD_FULL 0

#define PH_METHOD_REDUCED 1

#define PH_SIDE_PLUS 0

#define PH_SIDE_MINUS 1

typedef enum PhStatus {
  PH_STATUS_OK = 0,
  PH_STATUS_NULL_POINTER = 1,
  PH_STATUS_INVALID_INPUT = 2,
  PH_STATUS_NUMERICAL = 3,
  PH_STATUS_OUT_OF_RANGE = 4,
  PH_STATUS_PANIC = 5,
} PhStatus;

/**
 * Assembled operators and boundary data of one configured problem.
 */
typedef struct PhProblem PhProblem;

/**
 * Densities ρ⁺ and ρ⁻ of one solve.
 */
typedef struct PhSolution PhSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; valid until the next call.
 */
const char *ph_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ph_version(void);

/**
 * Build a problem from a JSON experiment config (same schema as the CLI).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PhStatus ph_problem_from_json(const char *json, struct PhProblem **out);

/**
 * # Safety
 * `problem` must come from `ph_problem_from_json` or be null.
 */
void ph_problem_free(struct PhProblem *problem);

/**
 * Slab and node counts of the problem grid.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PhStatus ph_problem_dims(const struct PhProblem *problem, size_t *steps, size_t *nodes);

/**
 * Solve with `PH_METHOD_FULL` or `PH_METHOD_REDUCED`.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum PhStatus ph_solve(const struct PhProblem *problem, int method, struct PhSolution **out);

/**
 * # Safety
 * `solution` must come from `ph_solve` or be null.
 */
void ph_solution_free(struct PhSolution *solution);

/**
 * Copy ρ⁺ or ρ⁻ into `out` in slab-major order (index k·N + i); `len` must equal M·N.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum PhStatus ph_solution_density(const struct PhSolution *solution,
                                  int side,
                                  double *out,
                                  size_t len);

/**
 * Evaluate u⁺ (interior targets) or u⁻ (exterior targets) at `count` (t, x, y) triples.
 *
 * # Safety
 * `targets` must hold 3·`count` doubles and `out` `count` writable doubles.
 */
enum PhStatus ph_solution_eval(const struct PhProblem *problem,
                               const struct PhSolution *solution,
                               const double *targets,
                               size_t count,
                               double *out);

/**
 * Periodic heat kernel at (t, x) for the diagonal cell with sides `q`; `dim` is 2 or 3.
 *
 * # Safety
 * `x` and `q` must hold `dim` doubles and `out` must be valid.
 */
enum PhStatus ph_periodic_kernel(double t,
                                 const double *x,
                                 const double *q,
                                 size_t dim,
                                 double *out);

/**
 * λ_c = (λ⁻ − λ⁺)/(λ⁻ + λ⁺).
 *
 * # Safety
 * `out` must be valid.
 */
enum PhStatus ph_contrast(double lambda_plus, double lambda_minus, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERHEAT_H */
