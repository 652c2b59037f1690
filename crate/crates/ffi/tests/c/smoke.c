#include <stdio.h>
#include <string.h>
#include "roc.h"

int main(void) {
    RocEnergy *e = NULL;
    if (roc_energy_from_zoo("distortion", 0, &e) != ROC_STATUS_OK) return 10;
    double f[4] = {2.0, 0.0, 0.0, 1.0};
    double w = 0.0;
    if (roc_energy_eval(e, f, 2, &w) != ROC_STATUS_OK || w != 2.0) return 11;
    double m[ROC_REDUCED_MARGINS];
    int passed = 0;
    if (roc_reduced_ks_point(e, 2.0, 1.0, m, &passed) != ROC_STATUS_OK || !passed) return 12;
    roc_energy_free(e);
    if (roc_energy_from_zoo("nope", 0, &e) != ROC_STATUS_INVALID_INPUT) return 13;
    if (roc_last_error_message() == NULL) return 14;
    printf("roc %s ok\n", roc_version());
    return 0;
}
