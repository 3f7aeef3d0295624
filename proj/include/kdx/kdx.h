/* SPDX-License-Identifier: Apache-2.0 */
#ifndef KDX_KDX_H
#define KDX_KDX_H

#include <stddef.h>
#include <stdint.h>

#if defined(KDX_BUILDING_LIBRARY)
#define KDX_API __attribute__((visibility("default")))
#else
#define KDX_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kdx_status {
  KDX_OK = 0,
  KDX_ERR_INVALID_INPUT = 1,
  KDX_ERR_TRAINING_FAILURE = 2,
  KDX_ERR_IO = 3,
  KDX_ERR_CONFIG = 4,
  KDX_ERR_UNDEFINED_IMPROVEMENT = 5,
  KDX_ERR_INTERNAL = 99
} kdx_status;

typedef struct kdx_dataset kdx_dataset;
typedef struct kdx_model kdx_model;
typedef struct kdx_report kdx_report;

KDX_API const char* kdx_version(void);

/* Message of the last failed call on this thread ("" if none). */
KDX_API const char* kdx_last_error(void);
/* Short machine-readable name for a status, e.g. "invalid_input". */
KDX_API const char* kdx_status_name(kdx_status status);

/* Datasets. `features` is row-major rows x cols. */
KDX_API kdx_status kdx_dataset_create(const double* features, const int32_t* labels, size_t rows,
                                      size_t cols, kdx_dataset** out);
KDX_API kdx_status kdx_dataset_read_csv(const char* path, kdx_dataset** out);
KDX_API kdx_status kdx_dataset_write_csv(const kdx_dataset* data, const char* path);
/* kind: xor | spiral | circle | sinewave | polynomial | trunk.
   `dim` is used by trunk only (pass 0 for the default of 2). */
KDX_API kdx_status kdx_dataset_generate(const char* kind, size_t n, size_t dim, uint64_t seed,
                                        kdx_dataset** out);
KDX_API size_t kdx_dataset_rows(const kdx_dataset* data);
KDX_API size_t kdx_dataset_cols(const kdx_dataset* data);
KDX_API int32_t kdx_dataset_classes(const kdx_dataset* data);
/* Borrowed views, valid until the dataset is freed. */
KDX_API const double* kdx_dataset_features(const kdx_dataset* data);
KDX_API const int32_t* kdx_dataset_labels(const kdx_dataset* data);
KDX_API void kdx_dataset_free(kdx_dataset* data);

/* Fits a parent learner and its kernel density model. `options_json` may be
   NULL; recognised keys: learner ("forest" | "net"), distance_mode,
   k_grid, k_selection, lambda, log_bias, fit_fraction, seed, forest {...},
   net {...}. */
KDX_API kdx_status kdx_model_fit(const kdx_dataset* data, const char* options_json,
                                 kdx_model** out);
/* posteriors_out: rows x classes; labels_out: rows. Either may be NULL. */
KDX_API kdx_status kdx_model_predict(const kdx_model* model, const double* features, size_t rows,
                                     size_t cols, double* posteriors_out, int32_t* labels_out);
KDX_API kdx_status kdx_model_save(const kdx_model* model, const char* path);
KDX_API kdx_status kdx_model_load(const char* path, kdx_model** out);
KDX_API int32_t kdx_model_classes(const kdx_model* model);
KDX_API size_t kdx_model_input_dim(const kdx_model* model);
KDX_API size_t kdx_model_polytopes(const kdx_model* model);
KDX_API double kdx_model_selected_k(const kdx_model* model);
KDX_API void kdx_model_free(kdx_model* model);

/* Default experiment configuration as JSON. `full_scale` nonzero selects the
   full-scale protocol (45 repetitions, 500 trees, 4 x 1000 network).
   Release the string with kdx_string_free. */
KDX_API kdx_status kdx_config_defaults(const char* experiment, int full_scale, char** json_out);
KDX_API void kdx_string_free(char* text);

/* experiment: "run-sim" | "run-trunk" | "run-tabular". config_json may be
   NULL for defaults; missing keys take the experiment's defaults.
   run-tabular requires "csv_path". */
KDX_API kdx_status kdx_experiment_run(const char* experiment, const char* config_json,
                                      kdx_report** out);
KDX_API kdx_status kdx_report_read(const char* path, kdx_report** out);
/* format: "json" | "csv" | "summary-csv". */
KDX_API kdx_status kdx_report_write(const kdx_report* report, const char* format,
                                    const char* path);
KDX_API size_t kdx_report_row_count(const kdx_report* report);
KDX_API void kdx_report_free(kdx_report* report);

#ifdef __cplusplus
}
#endif

#endif /* KDX_KDX_H */
