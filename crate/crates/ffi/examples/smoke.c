/* Minimal C client: proportional launches of a callback kernel. */
#include <stdio.h>
#include <string.h>

#include "hetpar.h"

#define UNITS 4096

static unsigned char seen[UNITS];

static void touch(void *ctx, size_t core, size_t start, size_t end) {
    (void)ctx;
    (void)core;
    for (size_t i = start; i < end; i++) {
        seen[i]++;
    }
}

#define CHECK(expr)                                                        \
    do {                                                                   \
        HetparStatus s_ = (expr);                                          \
        if (s_ != HETPAR_STATUS_OK) {                                      \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_,              \
                    hetpar_last_error() ? hetpar_last_error() : "?");      \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    size_t parts[2];
    double ratios[2] = {3.0, 1.0};
    CHECK(hetpar_split(UNITS, ratios, 2, 1, parts));
    if (parts[0] != 3072 || parts[1] != 1024) {
        fprintf(stderr, "split gave %zu %zu\n", parts[0], parts[1]);
        return 1;
    }

    size_t ids[2] = {0, 1};
    HetparScheduler *sched = NULL;
    CHECK(hetpar_scheduler_new(ids, 2, HETPAR_PINNING_BEST_EFFORT, HETPAR_CLOCK_THREAD_CPU, 0.3, 1.0, &sched));
    for (int i = 0; i < 3; i++) {
        double makespan = 0.0;
        CHECK(hetpar_scheduler_run(sched, "touch", UNITS, 64, touch, NULL, 1, parts, NULL, ratios, &makespan));
    }
    for (size_t i = 0; i < UNITS; i++) {
        if (seen[i] != 3) {
            fprintf(stderr, "unit %zu seen %d times\n", i, seen[i]);
            return 1;
        }
    }
    hetpar_scheduler_free(sched);

    if (hetpar_table_new(0, 0.3, 1.0, NULL) != HETPAR_STATUS_NULL_POINTER) {
        return 1;
    }
    printf("hetpar %s ok: ratios %.3f %.3f\n", hetpar_version(), ratios[0], ratios[1]);
    return 0;
}
