/* Build: cc design.c -I../include -L<target>/debug -lecfm_oed_ffi -lm */
#include <math.h>
#include <stdio.h>

#include "ecfm_oed.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        EcfmStatus s = (call);                                             \
        if (s != ECFM_STATUS_OK) {                                         \
            char msg[512];                                                 \
            ecfm_last_error_message(msg, sizeof msg);                      \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s, msg);   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    EcfmProblem *problem = NULL;
    CHECK(ecfm_problem_new(ECFM_CASE_PARAMETERIZED_SOURCE, 1.0, 1.0, 1.0, 32, 0.5, 1.5, 16, &problem));

    size_t n = 0;
    CHECK(ecfm_problem_node_count(problem, &n));
    double u[64];
    CHECK(ecfm_forward(problem, 1.0, u, 64));
    /* u(1) = -1/2 + 2 for k = b = p = 1 */
    if (fabs(u[n - 1] - 1.5) > 1e-12) {
        fprintf(stderr, "u(1) = %.17g\n", u[n - 1]);
        return 1;
    }

    double beta = 0.0, value = 0.0;
    CHECK(ecfm_optimize(problem, ECFM_CRITERION_FISHER, 1, 8, &beta, &value));
    printf("fisher optimal beta %.6f value %.6f\n", beta, value);
    CHECK(ecfm_optimize(problem, ECFM_CRITERION_ECFM, 1, 8, &beta, &value));
    printf("ecfm optimal beta %.6f value %.6f\n", beta, value);

    double small[2];
    EcfmStatus s = ecfm_forward(problem, 1.0, small, 2);
    ecfm_problem_free(problem);
    return s == ECFM_STATUS_BUFFER_TOO_SMALL ? 0 : 1;
}
