/* Simulate a logistic dataset, fit it, print the estimate.
 *
 *   cargo build -p crnas-ffi --release
 *   cc crates/ffi/examples/fit.c -Icrates/ffi/include \
 *      target/release/libcrnas_ffi.a -lm -lpthread -ldl -o fit
 */
#include <stdio.h>
#include <stdlib.h>

#include "crnas.h"

static int fail(CrnasStatus st) {
    fprintf(stderr, "status %d: %s\n", (int)st, crnas_last_error_message());
    return 1;
}

int main(void) {
    CrnasDataset *data = NULL;
    CrnasProgram *program = NULL;
    CrnasReport *report = NULL;
    CrnasStatus st;

    if ((st = crnas_dataset_simulate("logistic", 2, 1000.0, 7, 0, &data)) != CRNAS_STATUS_OK) return fail(st);
    if ((st = crnas_program_from_dataset(data, &program)) != CRNAS_STATUS_OK) return fail(st);

    size_t n = crnas_program_dim(program);
    size_t k = crnas_program_original_dim(program);
    double *theta = malloc(n * sizeof *theta);
    double *x = malloc(k * sizeof *x);
    if ((st = crnas_program_interior_point(program, 1, theta, n)) != CRNAS_STATUS_OK) return fail(st);

    CrnasSolverConfig cfg = crnas_solver_config_default();
    if ((st = crnas_solve(program, theta, n, &cfg, CRNAS_METHOD_CRNAS, &report)) != CRNAS_STATUS_OK) return fail(st);
    crnas_report_theta(report, theta, n);
    crnas_program_to_original(program, theta, n, x, k);

    printf("objective %.6e after %zu iterations\n", crnas_report_objective(report), crnas_report_iterations(report));
    for (size_t i = 0; i < k; i++) printf("  x[%zu] = %.6f\n", i, x[i]);

    free(theta);
    free(x);
    crnas_report_free(report);
    crnas_program_free(program);
    crnas_dataset_free(data);
    return 0;
}
