// SPDX-License-Identifier: Apache-2.0
#include "kdx/kdx.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "kdx/classifier.hpp"
#include "kdx/error.hpp"
#include "kdx/harness.hpp"
#include "kdx/rng.hpp"
#include "kdx/serialize.hpp"
#include "kdx/synthetic.hpp"

struct kdx_dataset {
  kdx::Dataset data;
};

struct kdx_model {
  kdx::KdxClassifier classifier;
};

struct kdx_report {
  kdx::ExperimentReport report;
};

namespace {

thread_local std::string last_error;

kdx_status to_status(kdx::ErrorCode code) {
  switch (code) {
    case kdx::ErrorCode::invalid_input: return KDX_ERR_INVALID_INPUT;
    case kdx::ErrorCode::training_failure: return KDX_ERR_TRAINING_FAILURE;
    case kdx::ErrorCode::io: return KDX_ERR_IO;
    case kdx::ErrorCode::config: return KDX_ERR_CONFIG;
    case kdx::ErrorCode::undefined_improvement: return KDX_ERR_UNDEFINED_IMPROVEMENT;
  }
  return KDX_ERR_INTERNAL;
}

template <typename F>
kdx_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return KDX_OK;
  } catch (const kdx::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return KDX_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return KDX_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return KDX_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (p == nullptr) kdx::fail(kdx::ErrorCode::invalid_input, std::string(name) + " is null");
}

kdx::ExperimentConfig experiment_defaults(const std::string& experiment, bool full_scale) {
  kdx::ExperimentConfig base;
  if (experiment == "run-trunk") {
    base = kdx::trunk_sweep_defaults();
  } else if (experiment != "run-sim" && experiment != "run-tabular") {
    kdx::fail(kdx::ErrorCode::config, "unknown experiment '" + experiment + "'");
  }
  if (full_scale) {
    const kdx::ExperimentConfig full = kdx::full_scale_preset();
    base.repetitions = full.repetitions;
    base.forest = full.forest;
    base.net = full.net;
  }
  return base;
}

}  // namespace

extern "C" {

const char* kdx_version(void) { return KDX_VERSION_STRING; }

const char* kdx_last_error(void) { return last_error.c_str(); }

const char* kdx_status_name(kdx_status status) {
  switch (status) {
    case KDX_OK: return "ok";
    case KDX_ERR_INVALID_INPUT: return "invalid_input";
    case KDX_ERR_TRAINING_FAILURE: return "training_failure";
    case KDX_ERR_IO: return "io";
    case KDX_ERR_CONFIG: return "config";
    case KDX_ERR_UNDEFINED_IMPROVEMENT: return "undefined_improvement";
    case KDX_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

kdx_status kdx_dataset_create(const double* features, const int32_t* labels, size_t rows,
                              size_t cols, kdx_dataset** out) {
  return guard([&] {
    need(out, "out");
    need(features, "features");
    need(labels, "labels");
    *out = nullptr;
    std::vector<double> f(features, features + rows * cols);
    std::vector<int> l(labels, labels + rows);
    *out = new kdx_dataset{kdx::make_dataset(std::move(f), std::move(l), cols)};
  });
}

kdx_status kdx_dataset_read_csv(const char* path, kdx_dataset** out) {
  return guard([&] {
    need(out, "out");
    need(path, "path");
    *out = nullptr;
    *out = new kdx_dataset{kdx::read_csv(path)};
  });
}

kdx_status kdx_dataset_write_csv(const kdx_dataset* data, const char* path) {
  return guard([&] {
    need(data, "data");
    need(path, "path");
    kdx::write_csv(data->data, path);
  });
}

kdx_status kdx_dataset_generate(const char* kind, size_t n, size_t dim, uint64_t seed,
                                kdx_dataset** out) {
  return guard([&] {
    need(out, "out");
    need(kind, "kind");
    *out = nullptr;
    kdx::SimulationSpec spec;
    spec.kind = kdx::parse_simulation_kind(kind);
    spec.n = n;
    spec.dimension = dim == 0 ? 2 : dim;
    spec.seed = seed;
    *out = new kdx_dataset{kdx::generate(spec)};
  });
}

size_t kdx_dataset_rows(const kdx_dataset* data) { return data ? data->data.rows : 0; }
size_t kdx_dataset_cols(const kdx_dataset* data) { return data ? data->data.cols : 0; }
int32_t kdx_dataset_classes(const kdx_dataset* data) { return data ? data->data.class_count : 0; }
const double* kdx_dataset_features(const kdx_dataset* data) {
  return data ? data->data.features.data() : nullptr;
}
const int32_t* kdx_dataset_labels(const kdx_dataset* data) {
  static_assert(sizeof(int) == sizeof(int32_t));
  return data ? reinterpret_cast<const int32_t*>(data->data.labels.data()) : nullptr;
}
void kdx_dataset_free(kdx_dataset* data) { delete data; }

kdx_status kdx_model_fit(const kdx_dataset* data, const char* options_json, kdx_model** out) {
  return guard([&] {
    need(data, "data");
    need(out, "out");
    *out = nullptr;
    using nlohmann::json;
    json options = json::object();
    if (options_json != nullptr) {
      try {
        options = json::parse(options_json);
      } catch (const json::parse_error& e) {
        kdx::fail(kdx::ErrorCode::config, std::string("options are not valid JSON: ") + e.what());
      }
      if (!options.is_object()) kdx::fail(kdx::ErrorCode::config, "options must be a JSON object");
    }
    std::string learner = "forest";
    if (options.contains("learner")) {
      if (!options["learner"].is_string()) kdx::fail(kdx::ErrorCode::config, "learner must be a string");
      learner = options["learner"].get<std::string>();
      options.erase("learner");
    }
    if (learner != "forest" && learner != "net") {
      kdx::fail(kdx::ErrorCode::config, "learner must be 'forest' or 'net'");
    }
    static const char* const allowed[] = {"distance_mode", "k_grid", "k_selection", "lambda",
                                          "log_bias",      "fit_fraction", "seed", "forest",
                                          "net"};
    for (auto it = options.begin(); it != options.end(); ++it) {
      bool known = false;
      for (const char* key : allowed) known = known || it.key() == key;
      if (!known) kdx::fail(kdx::ErrorCode::config, "unknown option '" + it.key() + "'");
    }
    kdx::ExperimentConfig config = kdx::config_from_json(options.dump());
    kdx::validate_config(config);

    const kdx::Dataset& all = data->data;
    const kdx::DatasetSplit split =
        kdx::split_dataset(all, config.fit_fraction, kdx::derive_seed(config.seed, 1));
    if (split.first.rows < 2 || split.second.rows < 1) {
      kdx::fail(kdx::ErrorCode::invalid_input, "dataset too small for a fit/calibrate split");
    }
    kdx::KdxOptions kdx_options;
    kdx_options.distance_mode = config.distance_mode;
    kdx_options.lambda = config.lambda;
    kdx_options.log_bias = config.log_bias;
    kdx_options.k_grid = config.k_grid;
    kdx_options.k_selection = config.k_selection;
    kdx::ParentModel parent;
    if (learner == "forest") {
      parent = kdx::train_forest(split.first, config.forest, kdx::derive_seed(config.seed, 2));
    } else {
      parent = kdx::train_relu_net(split.first, config.net, kdx::derive_seed(config.seed, 3));
    }
    *out = new kdx_model{
        kdx::KdxClassifier::fit(std::move(parent), split.first, &split.second, kdx_options)};
  });
}

kdx_status kdx_model_predict(const kdx_model* model, const double* features, size_t rows,
                             size_t cols, double* posteriors_out, int32_t* labels_out) {
  return guard([&] {
    need(model, "model");
    if (rows > 0) need(features, "features");
    if (cols != model->classifier.model().input_dim) {
      kdx::fail(kdx::ErrorCode::invalid_input,
                "expected " + std::to_string(model->classifier.model().input_dim) +
                    " columns, got " + std::to_string(cols));
    }
    const auto batch =
        model->classifier.predict_batch(std::span<const double>(features, rows * cols), rows);
    if (posteriors_out != nullptr) {
      std::memcpy(posteriors_out, batch.posteriors.data(), batch.posteriors.size() * sizeof(double));
    }
    if (labels_out != nullptr) {
      for (size_t i = 0; i < rows; ++i) labels_out[i] = batch.labels[i];
    }
  });
}

kdx_status kdx_model_save(const kdx_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    kdx::save_classifier(model->classifier, path);
  });
}

kdx_status kdx_model_load(const char* path, kdx_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new kdx_model{kdx::load_classifier(path)};
  });
}

int32_t kdx_model_classes(const kdx_model* model) {
  return model ? model->classifier.model().class_count() : 0;
}
size_t kdx_model_input_dim(const kdx_model* model) {
  return model ? model->classifier.model().input_dim : 0;
}
size_t kdx_model_polytopes(const kdx_model* model) {
  return model ? model->classifier.model().polytopes.size() : 0;
}
double kdx_model_selected_k(const kdx_model* model) {
  return model ? model->classifier.selected_k() : 0.0;
}
void kdx_model_free(kdx_model* model) { delete model; }

kdx_status kdx_config_defaults(const char* experiment, int full_scale, char** json_out) {
  return guard([&] {
    need(experiment, "experiment");
    need(json_out, "json_out");
    *json_out = nullptr;
    const std::string text = kdx::config_to_json(experiment_defaults(experiment, full_scale != 0));
    char* buffer = new char[text.size() + 1];
    std::memcpy(buffer, text.c_str(), text.size() + 1);
    *json_out = buffer;
  });
}

void kdx_string_free(char* text) { delete[] text; }

kdx_status kdx_experiment_run(const char* experiment, const char* config_json, kdx_report** out) {
  return guard([&] {
    need(experiment, "experiment");
    need(out, "out");
    *out = nullptr;
    const std::string name = experiment;
    kdx::ExperimentConfig config = experiment_defaults(name, false);
    if (config_json != nullptr) config = kdx::config_from_json(config_json, config);
    kdx::ExperimentReport report;
    if (name == "run-sim") {
      report = kdx::run_simulation_experiment(config);
    } else if (name == "run-trunk") {
      report = kdx::run_trunk_sweep(config);
    } else {
      if (config.csv_path.empty()) kdx::fail(kdx::ErrorCode::config, "run-tabular needs csv_path");
      report = kdx::run_tabular_experiment(config.csv_path, config);
    }
    *out = new kdx_report{std::move(report)};
  });
}

kdx_status kdx_report_read(const char* path, kdx_report** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new kdx_report{kdx::read_report(path)};
  });
}

kdx_status kdx_report_write(const kdx_report* report, const char* format, const char* path) {
  return guard([&] {
    need(report, "report");
    need(format, "format");
    need(path, "path");
    kdx::emit_report(report->report, format, path);
  });
}

size_t kdx_report_row_count(const kdx_report* report) {
  return report ? report->report.rows.size() : 0;
}

void kdx_report_free(kdx_report* report) { delete report; }

}  // extern "C"
