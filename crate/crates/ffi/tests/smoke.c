#include <math.h>
#include <stdio.h>
#include "slitlab.h"

#define CHECK(call)                                                            \
    do {                                                                       \
        int32_t rc_ = (call);                                                  \
        if (rc_ != SLITLAB_OK) {                                               \
            fprintf(stderr, "%s -> %d: %s\n", #call, rc_, slitlab_last_error()); \
            return 1;                                                          \
        }                                                                      \
    } while (0)

int main(void) {
    double d = 0.0;
    double x[1] = {0.5};
    CHECK(slitlab_cantor_distance(0.25, x, 1, &d));
    if (fabs(d - 0.25) > 1e-12) return 2;

    SlitlabRegion *r = NULL;
    bool inside = false;
    double p[2] = {0.5, 0.1};
    CHECK(slitlab_region_new("omega", 2, 0.25, &r));
    CHECK(slitlab_region_contains(r, p, 2, &inside));
    slitlab_region_free(r);
    if (inside) return 3;

    if (slitlab_region_new("nowhere", 2, 0.25, &r) != SLITLAB_ERR_INVALID_PARAMETER) return 4;
    if (slitlab_last_error() == NULL) return 5;

    double f = 0.0;
    CHECK(slitlab_norm_factor(0.25, 2, 1.5, &f));
    if (!isinf(f)) return 6;
    printf("ok %s\n", slitlab_version());
    return 0;
}
