#include "hcoh.h"

int run(const double *x, const uint32_t *y, size_t n) {
    HcohHasher *h = NULL;
    HcohStatus st = hcoh_hasher_new(4, 16, 0.2, 10, 42, false, &h);
    if (st != HCOH_STATUS_OK) {
        return (int)st;
    }
    st = hcoh_hasher_train(h, x, y, n);
    uint64_t words[4];
    if (st == HCOH_STATUS_OK) {
        st = hcoh_hasher_encode(h, x, 1, words, hcoh_words_per_code(16));
    }
    hcoh_hasher_free(h);
    return (int)st;
}
