/* Compile-and-run smoke test for the generated header and static library. */
#include <stdio.h>
#include <stdlib.h>

#include "conhd.h"

int main(void) {
    ConhdHypergraph *h = NULL;
    if (conhd_hypergraph_random(10, 8, 2, 4, 42, &h) != CONHD_STATUS_OK) {
        fprintf(stderr, "random: %s\n", conhd_last_error());
        return 1;
    }
    size_t nodes = 0, edges = 0, pairs = 0;
    if (conhd_hypergraph_counts(h, &nodes, &edges, &pairs) != CONHD_STATUS_OK) {
        return 1;
    }
    if (nodes != 10 || edges != 8 || pairs < 16) {
        fprintf(stderr, "unexpected counts %zu %zu %zu\n", nodes, edges, pairs);
        return 1;
    }

    double *features = malloc(nodes * sizeof(double));
    for (size_t v = 0; v < nodes; v++) {
        features[v] = 0.1 * (double)v - 0.5;
    }
    ConhdDiffusionOptions opts;
    conhd_diffusion_options_default(&opts);
    opts.steps = 20;
    double *out = malloc(pairs * sizeof(double));
    if (conhd_diffusion_run(h, features, 1, &opts, out) != CONHD_STATUS_OK) {
        fprintf(stderr, "diffuse: %s\n", conhd_last_error());
        return 1;
    }
    for (size_t p = 0; p < pairs; p++) {
        if (out[p] != out[p]) { /* NaN check */
            return 1;
        }
    }

    /* Error path: GD cannot drive a non-differentiable regularizer. */
    opts.edge_reg = CONHD_REGULARIZER_TV2;
    if (conhd_diffusion_run(h, features, 1, &opts, out) != CONHD_STATUS_INVALID_ARGUMENT) {
        return 1;
    }

    free(features);
    free(out);
    conhd_hypergraph_free(h);
    printf("ok %s\n", conhd_version());
    return 0;
}
