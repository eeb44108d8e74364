#include <stdio.h>
#include "tumor_branching.h"

int main(void) {
    TbModel *m = NULL;
    if (tb_model_gompertz(1.0, 20.0, 40, TB_TAIL_POLICY_KILL, 1e-3, 1.0, 20.0, &m) != TB_STATUS_OK) {
        fprintf(stderr, "%s\n", tb_last_error_message());
        return 1;
    }
    TbKappa0 k;
    if (tb_kappa0(m, 1e-10, &k) != TB_STATUS_OK) return 2;
    double q[40];
    if (tb_extinction(m, 1e-12, 100000000, q, 40) != TB_STATUS_OK) return 3;
    if (tb_extinction(m, 1e-12, 1000, q, 3) != TB_STATUS_BUFFER_TOO_SMALL) return 4;
    printf("kappa0=%.12g q1=%.12g version=%s\n", k.green, q[0], tb_version());
    tb_model_free(m);
    return 0;
}
