#include <stdio.h>
#include <stdlib.h>
#include "perheat.h"

static const char *CONFIG =
    "{\"version\": 1, \"N\": 16, \"M\": 4, \"lambda_plus\": 1.0, \"lambda_minus\": 2.0,"
    " \"f_spec\": {\"kind\": \"separable\", \"terms\": [{\"coef\": 1.0, \"t_power\": 1, \"trig\": \"cos\", \"k\": 1}]}}";

int main(void) {
    PhProblem *problem = NULL;
    PhSolution *solution = NULL;
    size_t steps = 0, nodes = 0;
    double lc = 0.0;

    if (ph_contrast(1.0, 3.0, &lc) != PH_STATUS_OK || lc != 0.5) return 1;
    if (ph_contrast(-1.0, 3.0, &lc) != PH_STATUS_INVALID_INPUT) return 2;
    if (ph_problem_from_json(CONFIG, &problem) != PH_STATUS_OK) {
        fprintf(stderr, "%s\n", ph_last_error_message());
        return 3;
    }
    if (ph_problem_dims(problem, &steps, &nodes) != PH_STATUS_OK || steps != 4 || nodes != 16) return 4;
    if (ph_solve(problem, PH_METHOD_FULL, &solution) != PH_STATUS_OK) return 5;
    double *rho = malloc(steps * nodes * sizeof(double));
    if (ph_solution_density(solution, PH_SIDE_PLUS, rho, steps * nodes) != PH_STATUS_OK) return 6;
    if (ph_solution_density(solution, PH_SIDE_PLUS, rho, 3) != PH_STATUS_OUT_OF_RANGE) return 7;
    double target[3] = {0.05, 0.5, 0.5};
    double u = 0.0;
    if (ph_solution_eval(problem, solution, target, 1, &u) != PH_STATUS_OK) return 8;
    printf("%.17g %.17g\n", rho[0], u);
    free(rho);
    ph_solution_free(solution);
    ph_problem_free(problem);
    return 0;
}
