#include <math.h>
#include <stdio.h>
#include <string.h>

#include "wemf.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double v = -1.0;
    CHECK(wemf_window_map(20.0, 300.0, 20.0, &v) == WEMF_STATUS_OK);
    CHECK(v == 0.5);
    CHECK(wemf_window_map(20.0, 0.0, 20.0, &v) == WEMF_STATUS_INVALID_ARGUMENT);
    CHECK(wemf_last_error() != NULL);
    CHECK(wemf_window_map(20.0, 300.0, 20.0, NULL) == WEMF_STATUS_NULL_POINTER);

    size_t dims[3] = {16, 16, 2};
    double spacing[3] = {1.0, 1.0, 2.0};
    short hu[512];
    for (int i = 0; i < 512; i++) hu[i] = (short)(i % 7 == 0 ? 60 : 40);
    WemfVolume *vol = NULL;
    CHECK(wemf_volume_from_hu(dims, spacing, hu, &vol) == WEMF_STATUS_OK);
    size_t got[3];
    CHECK(wemf_volume_geometry(vol, got, NULL) == WEMF_STATUS_OK);
    CHECK(got[0] == 16 && got[2] == 2);

    static double windowed[3 * 512];
    CHECK(wemf_volume_window(vol, NULL, windowed, 3 * 512) == WEMF_STATUS_OK);
    CHECK(windowed[3 * 1 + 1] == 0.5);
    CHECK(wemf_volume_window(vol, NULL, windowed, 5) == WEMF_STATUS_INVALID_ARGUMENT);

    const char *cfg =
        "{\"model\": {\"img_size\": 16, \"patch_size\": 4, \"depths\": [1, 1], \"dims\": [8, 16], \"d_state\": 2}}";
    WemfModel *model = NULL;
    CHECK(wemf_model_new(cfg, 0, &model) == WEMF_STATUS_OK);
    size_t params = 0;
    CHECK(wemf_model_param_count(model, &params) == WEMF_STATUS_OK);
    CHECK(params > 0);
    unsigned char labels[512];
    CHECK(wemf_model_segment(model, vol, labels, 512) == WEMF_STATUS_OK);
    for (int i = 0; i < 512; i++) CHECK(labels[i] <= 2);
    CHECK(wemf_model_load(model, "/nonexistent.wemf") == WEMF_STATUS_IO);

    unsigned char a[512] = {0};
    for (int i = 100; i < 140; i++) a[i] = 1;
    WemfMaskMetrics m;
    CHECK(wemf_evaluate_masks(a, a, dims, spacing, 1.0, &m) == WEMF_STATUS_OK);
    CHECK(m.dsc == 1.0 && m.iou == 1.0 && m.nsd == 1.0 && m.hd95_mm == 0.0);
    unsigned char empty[512] = {0};
    CHECK(wemf_evaluate_masks(a, empty, dims, spacing, 1.0, &m) == WEMF_STATUS_OK);
    CHECK(m.dsc == 0.0 && isnan(m.hd95_mm));

    wemf_model_free(model);
    wemf_volume_free(vol);
    wemf_volume_free(NULL);
    printf("ok %s\n", wemf_version());
    return 0;
}
