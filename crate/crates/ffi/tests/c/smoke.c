#include <math.h>
#include <stdio.h>
#include <string.h>

#include "issueloc.h"

int main(void) {
    double logits[10] = {0};
    double loss = 0.0;
    size_t perm[3];

    if (il_first_token_loss(logits, 10, 1, &loss) != IL_STATUS_OK || fabs(loss - log(10.0)) > 1e-12) {
        fprintf(stderr, "first token loss: %.17g\n", loss);
        return 1;
    }
    if (il_parse_permutation("[2] > [2] > [9]", 3, perm, 3) != IL_STATUS_OK || perm[0] != 2 || perm[1] != 1 || perm[2] != 3) {
        fprintf(stderr, "permutation\n");
        return 1;
    }
    if (il_first_token_loss(logits, 10, 11, &loss) != IL_STATUS_INVALID_INPUT || il_last_error_message() == NULL) {
        fprintf(stderr, "error path\n");
        return 1;
    }
    printf("%s\n", il_version());
    return 0;
}
